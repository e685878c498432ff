//! Theoretical and empirical characteristic functions.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::params::{SampleMatrix, StableParams};
use crate::scalar::Real;

/// `Re + i Im` value of a characteristic function.
pub type ComplexValue<T> = Complex<T>;

/// Lower clamp for `|phi|` before taking logs.
pub const MODULUS_FLOOR: f64 = 1e-300;
/// `|phi|` is clamped to at most `1 - MODULUS_CEIL_GAP`.
pub const MODULUS_CEIL_GAP: f64 = 1e-12;

/// Anything that can be evaluated like a characteristic function at
/// `t ∈ R^p`: the exact law or an empirical sample.
///
/// Estimators are written against this trait, so feeding them the exact
/// law instead of a sample checks that they invert the model.
pub trait CharacteristicFunction<T: Real> {
    fn dim(&self) -> usize;

    fn eval(&self, t: &[T]) -> Result<ComplexValue<T>>;

    fn eval_many(&self, points: &[Vec<T>]) -> Result<Vec<ComplexValue<T>>> {
        points.iter().map(|t| self.eval(t)).collect()
    }
}

impl<T: Real> CharacteristicFunction<T> for StableParams<T> {
    fn dim(&self) -> usize {
        StableParams::dim(self)
    }

    fn eval(&self, t: &[T]) -> Result<ComplexValue<T>> {
        cf_theoretical(self, t)
    }
}

impl<T: Real> CharacteristicFunction<T> for SampleMatrix<T> {
    fn dim(&self) -> usize {
        self.p()
    }

    fn eval(&self, t: &[T]) -> Result<ComplexValue<T>> {
        ecf(self, t)
    }

    fn eval_many(&self, points: &[Vec<T>]) -> Result<Vec<ComplexValue<T>>> {
        ecf_batch(self, points)
    }
}

impl<T: Real, C: CharacteristicFunction<T> + ?Sized> CharacteristicFunction<T> for &C {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval(&self, t: &[T]) -> Result<ComplexValue<T>> {
        (**self).eval(t)
    }

    fn eval_many(&self, points: &[Vec<T>]) -> Result<Vec<ComplexValue<T>>> {
        (**self).eval_many(points)
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn check_len<T>(t: &[T], p: usize) -> Result<()> {
    if t.len() != p {
        return Err(Error::Shape(format!(
            "argument has length {}, distribution dimension is {p}",
            t.len()
        )));
    }
    Ok(())
}

/// `exp(i t'mu - (t'Sigma t / 2)^(alpha/2))`.
pub fn cf_theoretical<T: Real>(params: &StableParams<T>, t: &[T]) -> Result<ComplexValue<T>> {
    check_len(t, params.dim())?;
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(
            "characteristic function argument must be finite".into(),
        ));
    }
    let sigma = params.sigma();
    let half_q = sigma.quad_form(t) * T::lit(0.5);
    let t_norm2: T = t.iter().map(|&v| v * v).sum();
    if half_q < -(sigma.psd_tolerance() * t_norm2) {
        return Err(Error::Domain(format!(
            "t'Sigma t = {} is negative; scale matrix is not PSD",
            half_q * T::lit(2.0)
        )));
    }
    let half_q = half_q.max(T::zero());
    let log_mod = -half_q.powf(params.alpha() * T::lit(0.5));
    Ok(Complex::from_polar(log_mod.exp(), dot(t, params.mu())))
}

/// Empirical characteristic function `(1/n) sum_j exp(i t'x_j)`.
pub fn ecf<T: Real>(sample: &SampleMatrix<T>, t: &[T]) -> Result<ComplexValue<T>> {
    check_len(t, sample.p())?;
    let (mut re, mut im) = (T::zero(), T::zero());
    for x in sample.rows() {
        let (s, c) = dot(t, x).sin_cos();
        re = re + c;
        im = im + s;
    }
    let n = T::from_usize_lossy(sample.n());
    Ok(Complex::new(re / n, im / n))
}

/// Empirical characteristic function at every point of `grid` in one pass
/// over the observations.
pub fn ecf_batch<T: Real>(
    sample: &SampleMatrix<T>,
    grid: &[Vec<T>],
) -> Result<Vec<ComplexValue<T>>> {
    for t in grid {
        check_len(t, sample.p())?;
    }
    let mut acc = vec![Complex::new(T::zero(), T::zero()); grid.len()];
    for x in sample.rows() {
        for (a, t) in acc.iter_mut().zip(grid) {
            let (s, c) = dot(t, x).sin_cos();
            a.re = a.re + c;
            a.im = a.im + s;
        }
    }
    let n = T::from_usize_lossy(sample.n());
    Ok(acc.into_iter().map(|z| z / n).collect())
}

/// Bounds applied to `|phi|` before the log: `[floor, 1 - gap]`.
///
/// The gap widens to machine epsilon for scalar types where `1 - 1e-12`
/// rounds to one.
pub fn modulus_bounds<T: Real>() -> (T, T) {
    let lo = T::lit(MODULUS_FLOOR).max(T::min_positive_value());
    let gap = T::lit(MODULUS_CEIL_GAP).max(T::epsilon());
    (lo, T::one() - gap)
}

/// `log |phi|` with `|phi|` clamped into `[1e-300, 1 - 1e-12]`, plus whether
/// the clamp was active. The result is always finite and strictly negative.
pub fn safe_log_modulus_flagged<T: Real>(phi: ComplexValue<T>) -> (T, bool) {
    let (lo, hi) = modulus_bounds::<T>();
    let m = phi.norm();
    if m.is_nan() {
        return (lo.ln(), true);
    }
    if m < lo {
        (lo.ln(), true)
    } else if m > hi {
        (hi.ln(), true)
    } else {
        (m.ln(), false)
    }
}

pub fn safe_log_modulus<T: Real>(phi: ComplexValue<T>) -> T {
    safe_log_modulus_flagged(phi).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packed::PackedSymmetric;
    use std::f64::consts::PI;

    fn params(alpha: f64, mu: Vec<f64>, sigma: PackedSymmetric<f64>) -> StableParams<f64> {
        StableParams::new(alpha, mu, sigma).unwrap()
    }

    #[test]
    fn cf_at_origin_is_one() {
        let p = params(1.3, vec![0.4, -1.0], PackedSymmetric::identity(2));
        let z = cf_theoretical(&p, &[0.0, 0.0]).unwrap();
        assert_eq!(z, Complex::new(1.0, 0.0));
    }

    #[test]
    fn cauchy_case() {
        let p = params(
            1.0,
            vec![0.0, 0.0],
            PackedSymmetric::scaled_identity(2, 2.0),
        );
        let z = cf_theoretical(&p, &[1.0, 0.0]).unwrap();
        assert!((z.re - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(z.im, 0.0);
    }

    #[test]
    fn shifted_heavy_case() {
        // modulus exp(-(0.5)^0.25), argument 1 rad
        let p = params(0.5, vec![1.0, 0.0], PackedSymmetric::identity(2));
        let z = cf_theoretical(&p, &[1.0, 0.0]).unwrap();
        let want_mod = (-(0.5f64).powf(0.25)).exp();
        assert!((z.norm() - want_mod).abs() < 1e-15);
        assert!((z.arg() - 1.0).abs() < 1e-15);
        assert!((want_mod - 0.431_323_704_931_592_2).abs() < 1e-12);
    }

    #[test]
    fn cf_dimension_mismatch() {
        let p = params(1.0, vec![0.0; 2], PackedSymmetric::identity(2));
        assert!(matches!(cf_theoretical(&p, &[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn ecf_single_observation_unit_modulus() {
        let s = SampleMatrix::<f64>::from_rows(&[vec![0.3, -2.0, 7.0]]).unwrap();
        let z = ecf(&s, &[1.1, 0.2, -0.5]).unwrap();
        assert!((z.norm() - 1.0).abs() < 1e-15);
        let arg: f64 = 1.1 * 0.3 + 0.2 * -2.0 + -0.5 * 7.0;
        assert!((z.re - arg.cos()).abs() < 1e-15);
        assert!((z.im - arg.sin()).abs() < 1e-15);
    }

    #[test]
    fn ecf_at_origin_and_cancellation() {
        let s = SampleMatrix::from_rows(&[vec![0.0], vec![PI]]).unwrap();
        assert_eq!(ecf(&s, &[0.0]).unwrap(), Complex::new(1.0, 0.0));
        let z = ecf(&s, &[1.0]).unwrap();
        assert!(z.norm() < 1e-15);
        assert!(matches!(ecf(&s, &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn ecf_conjugate_symmetry() {
        let s =
            SampleMatrix::from_rows(&[vec![0.3, 1.0], vec![-4.0, 2.5], vec![9.0, -0.1]]).unwrap();
        let t = [0.7, -1.3];
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        assert_eq!(ecf(&s, &neg).unwrap(), ecf(&s, &t).unwrap().conj());
    }

    #[test]
    fn batch_matches_pointwise() {
        let s = SampleMatrix::from_rows(&[vec![0.3, 1.0], vec![-4.0, 2.5]]).unwrap();
        let grid = vec![vec![1.0, 0.0], vec![0.2, 0.3], vec![1.0, 0.0]];
        let b = ecf_batch(&s, &grid).unwrap();
        assert_eq!(b[0], b[2]);
        for (z, t) in b.iter().zip(&grid) {
            assert_eq!(*z, ecf(&s, t).unwrap());
        }
        assert_eq!(
            ecf_batch(&s, &grid[..1]).unwrap()[0],
            ecf(&s, &grid[0]).unwrap()
        );
    }

    #[test]
    fn safe_log_examples() {
        let z = Complex::from_polar((-1.0f64).exp(), 0.3);
        assert!((safe_log_modulus(z) + 1.0).abs() < 1e-15);

        let (one, clamped) = safe_log_modulus_flagged(Complex::new(1.0f64, 0.0));
        assert!(clamped);
        assert!(one < 0.0);
        assert!((one - (1.0 - 1e-12f64).ln()).abs() < 1e-28);

        let (zero, clamped) = safe_log_modulus_flagged(Complex::new(0.0f64, 0.0));
        assert!(clamped);
        assert_eq!(zero, (1e-300f64).ln());
    }

    #[test]
    fn safe_log_is_negative_for_f32() {
        let v = safe_log_modulus(Complex::new(1.0f32, 0.0));
        assert!(v < 0.0 && v.is_finite());
    }
}
