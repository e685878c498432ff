use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimators::FrequencyPair;
use crate::linalg::Matrix;
use crate::packed::packed_pairs;
use crate::params::StableParams;
use crate::scalar::Real;

use super::grid::{EcfGrid, MomentVector};
use super::jacobian::{g_map, jacobian_closed, jacobian_fd, ClosedForm};
use super::omega::omega;

/// Covariance matrices with `lambda_min` below `-ASSEMBLY_TOL * trace` are
/// rejected.
pub const ASSEMBLY_TOL: f64 = 1e-8;

/// Source of the Jacobian used in the sandwich `G Omega G'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacMode {
    #[default]
    Fd,
    Closed,
}

impl fmt::Display for JacMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JacMode::Fd => "fd",
            JacMode::Closed => "closed",
        })
    }
}

impl FromStr for JacMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fd" => Ok(JacMode::Fd),
            "closed" => Ok(JacMode::Closed),
            other => Err(Error::Parse(format!(
                "unknown jacobian mode {other:?}; expected fd or closed"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ConfidenceInterval<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Real> ConfidenceInterval<T> {
    pub fn contains(&self, v: T) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Names of the `(alpha, Sigma_d, Sigma_nd)` coordinates: `alpha`,
/// `Sigma11`, ..., then `Sigma21`, `Sigma31`, `Sigma32`, ...
pub fn estimate_labels(p: usize) -> Vec<String> {
    let sep = if p >= 10 { "_" } else { "" };
    let mut out = vec!["alpha".to_string()];
    out.extend((1..=p).map(|k| format!("Sigma{k}{sep}{k}")));
    out.extend(packed_pairs(p).map(|(i, j)| format!("Sigma{}{sep}{}", i + 1, j + 1)));
    out
}

/// Delta-method summary for `(alpha_mult, Sigma_d, Sigma_nd)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DeltaReport<T> {
    pub p: usize,
    pub n: usize,
    pub level: T,
    pub jacobian: JacMode,
    pub frequencies: FrequencyPair<T>,
    pub labels: Vec<String>,
    pub estimates: Vec<T>,
    /// Limiting covariance `G Omega G'` of `sqrt(n) (estimate - truth)`.
    pub covariance: Matrix<T>,
    /// `sqrt(diag(covariance) / n)`.
    pub std_errors: Vec<T>,
    pub ci: Vec<ConfidenceInterval<T>>,
    pub lambda_min: T,
}

/// Standard normal quantile at `(1 + level) / 2`.
pub fn normal_critical_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let z = Normal::new(0.0, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(z.inverse_cdf(0.5 * (1.0 + level)))
}

/// Delta-method covariance, standard errors and normal intervals at the
/// law `params` for sample size `n`.
///
/// `params` is either the truth or a plug-in estimate; the intervals are
/// centred on `g(theta0)`, which equals `(alpha, Sigma_d, Sigma_nd)` of
/// `params`.
pub fn delta_covariance<T: Real>(
    params: &StableParams<T>,
    fp: &FrequencyPair<T>,
    n: usize,
    level: T,
    mode: JacMode,
) -> Result<DeltaReport<T>> {
    if n == 0 {
        return Err(Error::Shape("sample size must be at least 1".into()));
    }
    let z = T::lit(normal_critical_value(level.to_f64_lossy())?);
    let p = params.dim();
    let grid = EcfGrid::new(p, fp)?;
    let theta = MomentVector::from_source(params, &grid)?;
    let estimates = g_map(&theta, fp)?;
    let g = match mode {
        JacMode::Fd => jacobian_fd(&theta, fp)?.matrix,
        JacMode::Closed => jacobian_closed(params, fp, ClosedForm::Corrected)?,
    };
    let om = omega(params, &grid)?;
    let raw = g.matmul(&om.assembled)?.matmul(&g.transpose())?;
    let half = T::lit(0.5);
    let covariance = Matrix::from_fn(raw.rows(), raw.cols(), |i, j| {
        (raw[(i, j)] + raw[(j, i)]) * half
    });

    let lambda_min = covariance.min_eigenvalue()?;
    let trace = covariance.trace();
    if !(lambda_min >= -T::lit(ASSEMBLY_TOL) * trace.abs()) {
        return Err(Error::Assembly(format!(
            "covariance has eigenvalue {lambda_min} below -{ASSEMBLY_TOL:e} * trace ({trace})"
        )));
    }
    let nf = T::from_usize_lossy(n);
    let std_errors: Vec<T> = covariance
        .diagonal()
        .iter()
        .map(|&v| (v.max(T::zero()) / nf).sqrt())
        .collect();
    let ci = estimates
        .iter()
        .zip(&std_errors)
        .map(|(&e, &s)| ConfidenceInterval {
            lower: e - z * s,
            upper: e + z * s,
        })
        .collect();
    Ok(DeltaReport {
        p,
        n,
        level,
        jacobian: mode,
        frequencies: *fp,
        labels: estimate_labels(p),
        estimates,
        covariance,
        std_errors,
        ci,
        lambda_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packed::PackedSymmetric;

    #[test]
    fn labels_follow_packing() {
        assert_eq!(
            estimate_labels(3),
            ["alpha", "Sigma11", "Sigma22", "Sigma33", "Sigma21", "Sigma31", "Sigma32"]
        );
    }

    #[test]
    fn critical_value() {
        assert!((normal_critical_value(0.95).unwrap() - 1.959963984540054).abs() < 1e-9);
        assert!(normal_critical_value(1.0).is_err());
    }

    #[test]
    fn report_shape_and_modes_agree() {
        let sigma = PackedSymmetric::scaled_identity(3, 0.1);
        let params = StableParams::<f64>::centered(1.5, sigma).unwrap();
        let fp = FrequencyPair::default();
        let fd = delta_covariance(&params, &fp, 10_000, 0.95, JacMode::Fd).unwrap();
        let cl = delta_covariance(&params, &fp, 10_000, 0.95, JacMode::Closed).unwrap();
        assert_eq!(fd.covariance.rows(), 7);
        assert_eq!(fd.ci.len(), 7);
        for (a, b) in fd.std_errors.iter().zip(&cl.std_errors) {
            assert!((a - b).abs() <= 1e-5 * a.abs().max(1e-12), "{a} vs {b}");
        }
        assert!(fd.ci[0].contains(1.5));
    }
}
