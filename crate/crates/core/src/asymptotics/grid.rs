use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::charfun::{CharacteristicFunction, ComplexValue};
use crate::error::{Error, Result};
use crate::estimators::FrequencyPair;
use crate::packed::{offdiag_len, packed_pairs};
use crate::scalar::Real;

/// The `p^2 + p` evaluation points the estimators read, in the order
/// `s1 e_1..s1 e_p | s2 e_1..s2 e_p | e_i + e_j | e_i - e_j`, the last two
/// groups in packed `(i, j)` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EcfGrid<T> {
    p: usize,
    frequencies: FrequencyPair<T>,
    points: Vec<Vec<T>>,
}

impl<T: Real> EcfGrid<T> {
    pub fn new(p: usize, fp: &FrequencyPair<T>) -> Result<Self> {
        if p == 0 {
            return Err(Error::Shape("grid dimension must be at least 1".into()));
        }
        let unit = |k: usize, s: T| {
            let mut t = vec![T::zero(); p];
            t[k] = s;
            t
        };
        let pair = |i: usize, j: usize, sign: T| {
            let mut t = vec![T::zero(); p];
            t[i] = T::one();
            t[j] = sign;
            t
        };
        let mut points = Vec::with_capacity(p * p + p);
        points.extend((0..p).map(|k| unit(k, fp.s1())));
        points.extend((0..p).map(|k| unit(k, fp.s2())));
        points.extend(packed_pairs(p).map(|(i, j)| pair(i, j, T::one())));
        points.extend(packed_pairs(p).map(|(i, j)| pair(i, j, -T::one())));
        Ok(Self {
            p,
            frequencies: *fp,
            points,
        })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// Number of points, `p^2 + p`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn frequencies(&self) -> &FrequencyPair<T> {
        &self.frequencies
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn point(&self, c: usize) -> &[T] {
        &self.points[c]
    }

    /// Column of `s1 e_k`.
    pub fn s1_col(&self, k: usize) -> usize {
        k
    }

    /// Column of `s2 e_k`.
    pub fn s2_col(&self, k: usize) -> usize {
        self.p + k
    }

    /// Column of `e_i + e_j` for packed position `l`.
    pub fn plus_col(&self, l: usize) -> usize {
        2 * self.p + l
    }

    /// Column of `e_i - e_j` for packed position `l`.
    pub fn minus_col(&self, l: usize) -> usize {
        2 * self.p + offdiag_len(self.p) + l
    }
}

/// Shorthand for [`EcfGrid::new`].
pub fn build_grid<T: Real>(p: usize, fp: &FrequencyPair<T>) -> Result<EcfGrid<T>> {
    EcfGrid::new(p, fp)
}

/// `theta = (Re phi(t_1), ..., Re phi(t_m), Im phi(t_1), ..., Im phi(t_m))`
/// over the points of an [`EcfGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MomentVector<T> {
    p: usize,
    theta: Vec<T>,
}

impl<T: Real> MomentVector<T> {
    /// Evaluates `source` (exact law or sample) on every grid point.
    pub fn from_source<C: CharacteristicFunction<T>>(
        source: &C,
        grid: &EcfGrid<T>,
    ) -> Result<Self> {
        if source.dim() != grid.dim() {
            return Err(Error::Shape(format!(
                "source has dimension {}, grid has {}",
                source.dim(),
                grid.dim()
            )));
        }
        let phi = source.eval_many(grid.points())?;
        let mut theta: Vec<T> = phi.iter().map(|z| z.re).collect();
        theta.extend(phi.iter().map(|z| z.im));
        Ok(Self {
            p: grid.dim(),
            theta,
        })
    }

    /// Wraps a raw vector; only its length is checked.
    pub fn from_theta(p: usize, theta: Vec<T>) -> Result<Self> {
        let m = p * p + p;
        if p == 0 || theta.len() != 2 * m {
            return Err(Error::Shape(format!(
                "moment vector for p={p} needs {} entries, got {}",
                2 * m,
                theta.len()
            )));
        }
        Ok(Self { p, theta })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// Number of grid points `m`; `theta` has `2m` entries.
    pub fn grid_len(&self) -> usize {
        self.theta.len() / 2
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn into_theta(self) -> Vec<T> {
        self.theta
    }

    /// `phi` at grid column `c`.
    pub fn phi(&self, c: usize) -> ComplexValue<T> {
        let m = self.grid_len();
        Complex::new(self.theta[c], self.theta[m + c])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packed::PackedSymmetric;
    use crate::params::{SampleMatrix, StableParams};

    #[test]
    fn layout_p1_and_p3() {
        let fp = FrequencyPair::new(1.0f64, 0.5).unwrap();
        let g1 = EcfGrid::new(1, &fp).unwrap();
        assert_eq!(g1.points(), &[vec![1.0], vec![0.5]]);

        let g3 = EcfGrid::new(3, &fp).unwrap();
        assert_eq!(g3.len(), 12);
        assert_eq!(g3.point(0), &[1.0, 0.0, 0.0]);
        assert_eq!(g3.point(5), &[0.0, 0.0, 0.5]);
        // seventh column (1-based) is e2 + e1
        assert_eq!(g3.point(6), &[1.0, 1.0, 0.0]);
        assert_eq!(g3.point(g3.plus_col(2)), &[0.0, 1.0, 1.0]);
        assert_eq!(g3.point(g3.minus_col(0)), &[-1.0, 1.0, 0.0]);
        assert_eq!(g3.minus_col(2), 11);
    }

    #[test]
    fn symmetric_law_has_real_moments() {
        let fp = FrequencyPair::default();
        let params = StableParams::<f64>::centered(1.2, PackedSymmetric::identity(3)).unwrap();
        let grid = EcfGrid::new(3, &fp).unwrap();
        let mv = MomentVector::from_source(&params, &grid).unwrap();
        assert!(mv.theta()[12..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_observation_has_unit_moduli() {
        let fp = FrequencyPair::default();
        let s = SampleMatrix::from_rows(&[vec![0.3, -1.2]]).unwrap();
        let grid = EcfGrid::new(2, &fp).unwrap();
        let mv = MomentVector::from_source(&s, &grid).unwrap();
        for c in 0..grid.len() {
            assert!((mv.phi(c).norm() - 1.0f64).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let fp = FrequencyPair::default();
        let s = SampleMatrix::from_rows(&[vec![0.3, -1.2]]).unwrap();
        let grid = EcfGrid::<f64>::new(3, &fp).unwrap();
        assert!(MomentVector::from_source(&s, &grid).is_err());
        assert!(MomentVector::<f64>::from_theta(2, vec![0.0; 11]).is_err());
    }
}
