//! Replication studies: bias and RMSE of the estimators over a grid of
//! `(alpha, n)` cells.
//!
//! Replication `r` of cell `c` draws from RNG stream `(c << 32) | r`, and
//! results are reduced in replication order, so output does not depend on
//! the number of worker threads.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    alpha_mult, alpha_press, alpha_single, sigma_diag, sigma_offdiag, FrequencyPair,
};
use crate::packed::{packed_pairs, PackedSymmetric};
use crate::params::{SampleMatrix, StableParams};
use crate::sampler::{sample_subgaussian, RngSpec};
use crate::scalar::Real;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "SUBSTABLE_THREADS";

/// Replications per cell used by the presets.
pub const DEFAULT_REPLICATIONS: usize = 500;

/// A cell fails when more than this fraction of replications fail.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

/// What a study estimates. Text forms: `press`, `single:k` (1-based),
/// `mult`, `sigma_d`, `sigma_nd`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Press,
    Single(usize),
    Mult,
    SigmaD,
    SigmaNd,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorKind::Press => f.write_str("press"),
            EstimatorKind::Single(k) => write!(f, "single:{}", k + 1),
            EstimatorKind::Mult => f.write_str("mult"),
            EstimatorKind::SigmaD => f.write_str("sigma_d"),
            EstimatorKind::SigmaNd => f.write_str("sigma_nd"),
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "press" => Ok(EstimatorKind::Press),
            "mult" => Ok(EstimatorKind::Mult),
            "sigma_d" => Ok(EstimatorKind::SigmaD),
            "sigma_nd" => Ok(EstimatorKind::SigmaNd),
            "single" => Ok(EstimatorKind::Single(0)),
            other => other
                .strip_prefix("single:")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .map(|k| EstimatorKind::Single(k - 1))
                .ok_or_else(|| {
                    Error::Parse(format!(
                        "unknown estimator {other:?}; expected press, single:k, mult, sigma_d or sigma_nd"
                    ))
                }),
        }
    }
}

impl Serialize for EstimatorKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EstimatorKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![
        EstimatorKind::Press,
        EstimatorKind::Single(0),
        EstimatorKind::Mult,
    ]
}

/// Design of a replication study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ExperimentSpec<T> {
    #[serde(default)]
    pub name: Option<String>,
    pub alphas: Vec<T>,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub sigma: PackedSymmetric<T>,
    /// Defaults to zero.
    #[serde(default)]
    pub mu: Option<Vec<T>>,
    #[serde(default)]
    pub frequencies: FrequencyPair<T>,
    pub seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    /// Worker threads; falls back to `SUBSTABLE_THREADS`, then to all cores.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl<T: Real> ExperimentSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::Domain(format!(
                "replications must be at least 2, got {}",
                self.replications
            )));
        }
        if self.alphas.is_empty() || self.sample_sizes.is_empty() {
            return Err(Error::Shape(
                "need at least one alpha and one sample size".into(),
            ));
        }
        if let Some(a) = self
            .alphas
            .iter()
            .find(|&&a| !(a > T::zero() && a < T::lit(2.0)))
        {
            return Err(Error::Domain(format!("alpha must lie in (0, 2), got {a}")));
        }
        if self.sample_sizes.contains(&0) {
            return Err(Error::Domain("sample sizes must be positive".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Shape("no estimators selected".into()));
        }
        let p = self.sigma.dim();
        for e in &self.estimators {
            if let EstimatorKind::Single(k) = e {
                if *k >= p {
                    return Err(Error::IndexDomain(format!(
                        "estimator {e} out of range for p={p}"
                    )));
                }
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Domain("workers must be positive".into()));
        }
        self.params(self.alphas[0]).map(|_| ())
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn params(&self, alpha: T) -> Result<StableParams<T>> {
        let mu = self
            .mu
            .clone()
            .unwrap_or_else(|| vec![T::zero(); self.dim()]);
        StableParams::new(alpha, mu, self.sigma.clone())
    }

    /// Column names, one per reported estimate.
    pub fn columns(&self) -> Vec<String> {
        let p = self.dim();
        let mut out = Vec::new();
        for e in &self.estimators {
            match e {
                EstimatorKind::Press => out.push("alpha_p".to_string()),
                EstimatorKind::Single(0) => out.push("alpha_s".to_string()),
                EstimatorKind::Single(k) => out.push(format!("alpha_s{}", k + 1)),
                EstimatorKind::Mult => out.push("alpha_m".to_string()),
                EstimatorKind::SigmaD => out.extend((1..=p).map(|k| format!("Sigma{k}{k}"))),
                EstimatorKind::SigmaNd => {
                    out.extend(packed_pairs(p).map(|(i, j)| format!("Sigma{}{}", i + 1, j + 1)))
                }
            }
        }
        out
    }

    /// True values in [`Self::columns`] order.
    pub fn truth(&self, alpha: T) -> Vec<T> {
        let mut out = Vec::new();
        for e in &self.estimators {
            match e {
                EstimatorKind::Press | EstimatorKind::Single(_) | EstimatorKind::Mult => {
                    out.push(alpha)
                }
                EstimatorKind::SigmaD => out.extend_from_slice(self.sigma.diag()),
                EstimatorKind::SigmaNd => out.extend_from_slice(self.sigma.subdiag()),
            }
        }
        out
    }

    /// `(alpha, n)` cells, ordered by alpha and then by sample size.
    pub fn cells(&self) -> Vec<(T, usize)> {
        self.alphas
            .iter()
            .flat_map(|&a| self.sample_sizes.iter().map(move |&n| (a, n)))
            .collect()
    }
}

/// Everything an estimator closure may need about its replication.
#[derive(Debug, Clone)]
pub struct ReplicationContext<'a, T> {
    pub spec: &'a ExperimentSpec<T>,
    pub params: &'a StableParams<T>,
    pub cell: usize,
    pub replication: usize,
}

/// Runs the requested estimators on one sample; `Sigma` uses `alpha_mult`.
pub fn standard_estimates<T: Real>(
    sample: &SampleMatrix<T>,
    spec: &ExperimentSpec<T>,
) -> Result<Vec<T>> {
    let fp = &spec.frequencies;
    let mut mult: Option<T> = None;
    let get_mult = |mult: &mut Option<T>| -> Result<T> {
        if let Some(a) = *mult {
            return Ok(a);
        }
        let a = alpha_mult(sample, fp)?;
        *mult = Some(a);
        Ok(a)
    };
    let mut out = Vec::new();
    for e in &spec.estimators {
        match e {
            EstimatorKind::Press => out.push(alpha_press(sample, fp)?),
            EstimatorKind::Single(k) => out.push(alpha_single(sample, *k, fp)?),
            EstimatorKind::Mult => out.push(get_mult(&mut mult)?),
            EstimatorKind::SigmaD => {
                let a = get_mult(&mut mult)?;
                out.extend(sigma_diag(sample, a, fp.s1())?);
            }
            EstimatorKind::SigmaNd => {
                let a = get_mult(&mut mult)?;
                out.extend(sigma_offdiag(sample, a)?);
            }
        }
    }
    Ok(out)
}

/// Bias and RMSE of every column in one `(alpha, n)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub alpha: f64,
    pub sample_size: usize,
    pub replications: usize,
    /// Replications excluded because an estimate was missing or not finite.
    pub failures: usize,
    pub bias: Vec<f64>,
    pub rmse: Vec<f64>,
}

impl CellResult {
    pub fn failed(&self) -> bool {
        self.failures as f64 > MAX_FAILURE_FRACTION * self.replications as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub name: Option<String>,
    pub seed: u64,
    pub replications: usize,
    pub s1: f64,
    pub s2: f64,
    pub columns: Vec<String>,
    pub cells: Vec<CellResult>,
}

impl ExperimentResult {
    /// First cell over the failure threshold, as an error.
    pub fn check(&self) -> Result<()> {
        match self.cells.iter().find(|c| c.failed()) {
            Some(c) => Err(Error::CellFailed {
                alpha: c.alpha,
                n: c.sample_size,
                failures: c.failures,
                replications: c.replications,
            }),
            None => Ok(()),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Worker count from `ExperimentSpec::workers`, then `SUBSTABLE_THREADS`, else `None`
/// (all cores).
pub fn resolve_workers(requested: Option<usize>) -> Result<Option<usize>> {
    if let Some(w) = requested {
        return Ok(Some(w));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let w: usize = v.trim().parse().map_err(|_| {
                Error::Parse(format!("{THREADS_ENV}={v:?} is not a positive integer"))
            })?;
            if w == 0 {
                return Err(Error::Parse(format!("{THREADS_ENV} must be positive")));
            }
            Ok(Some(w))
        }
        Err(_) => Ok(None),
    }
}

/// RNG stream of replication `r` in cell `c`.
pub fn replication_stream(cell: usize, r: usize) -> u64 {
    ((cell as u64) << 32) | r as u64
}

/// Runs the study with the standard estimators.
pub fn run_experiment<T: Real>(spec: &ExperimentSpec<T>) -> Result<ExperimentResult> {
    run_experiment_with(spec, |sample, ctx| standard_estimates(sample, ctx.spec))
}

/// Runs the study with a custom estimator returning one value per column.
pub fn run_experiment_with<T, F>(spec: &ExperimentSpec<T>, estimator: F) -> Result<ExperimentResult>
where
    T: Real,
    F: Fn(&SampleMatrix<T>, &ReplicationContext<'_, T>) -> Result<Vec<T>> + Sync,
{
    spec.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = resolve_workers(spec.workers)? {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
    let columns = spec.columns();
    let ncol = columns.len();

    let mut cells = Vec::new();
    for (ci, (alpha, n)) in spec.cells().into_iter().enumerate() {
        let params = spec.params(alpha)?;
        let truth: Vec<f64> = spec.truth(alpha).iter().map(|v| v.to_f64_lossy()).collect();
        let reps: Vec<Result<Vec<T>>> = pool.install(|| {
            (0..spec.replications)
                .into_par_iter()
                .map(|r| {
                    let sample = sample_subgaussian(
                        &params,
                        n,
                        &RngSpec::new(spec.seed, replication_stream(ci, r)),
                    )?;
                    let ctx = ReplicationContext {
                        spec,
                        params: &params,
                        cell: ci,
                        replication: r,
                    };
                    estimator(&sample, &ctx)
                })
                .collect()
        });

        let mut sum = vec![0.0f64; ncol];
        let mut sum_sq = vec![0.0f64; ncol];
        let mut used = 0usize;
        let mut failures = 0usize;
        for rep in reps {
            match rep {
                Ok(v) if v.len() == ncol && v.iter().all(|x| x.is_finite()) => {
                    for (k, x) in v.iter().enumerate() {
                        let e = x.to_f64_lossy() - truth[k];
                        sum[k] += e;
                        sum_sq[k] += e * e;
                    }
                    used += 1;
                }
                Ok(v) if v.len() != ncol => {
                    return Err(Error::Shape(format!(
                        "estimator returned {} values for {ncol} columns",
                        v.len()
                    )))
                }
                _ => failures += 1,
            }
        }
        let denom = used.max(1) as f64;
        let (bias, rmse) = if used == 0 {
            (vec![f64::NAN; ncol], vec![f64::NAN; ncol])
        } else {
            (
                sum.iter().map(|s| s / denom).collect(),
                sum_sq.iter().map(|s| (s / denom).sqrt()).collect(),
            )
        };
        cells.push(CellResult {
            alpha: alpha.to_f64_lossy(),
            sample_size: n,
            replications: spec.replications,
            failures,
            bias,
            rmse,
        });
    }
    Ok(ExperimentResult {
        name: spec.name.clone(),
        seed: spec.seed,
        replications: spec.replications,
        s1: spec.frequencies.s1().to_f64_lossy(),
        s2: spec.frequencies.s2().to_f64_lossy(),
        columns,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    #[default]
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(Error::Parse(format!(
                "unknown table format {other:?}; expected csv or markdown"
            ))),
        }
    }
}

/// `sample_size, alpha`, every `*_b` column, then every `*_rm` column.
pub fn table_header(columns: &[String]) -> Vec<String> {
    let mut h = vec!["sample_size".to_string(), "alpha".to_string()];
    h.extend(columns.iter().map(|c| format!("{c}_b")));
    h.extend(columns.iter().map(|c| format!("{c}_rm")));
    h
}

/// Renders the bias/RMSE table. CSV keeps full precision; markdown rounds
/// to 4 decimals.
pub fn emit_table(result: &ExperimentResult, format: TableFormat) -> String {
    let header = table_header(&result.columns);
    match format {
        TableFormat::Csv => {
            let mut out = header.join(",");
            out.push('\n');
            for c in &result.cells {
                let mut row = vec![c.sample_size.to_string(), c.alpha.to_string()];
                row.extend(c.bias.iter().chain(&c.rmse).map(|v| v.to_string()));
                out.push_str(&row.join(","));
                out.push('\n');
            }
            out
        }
        TableFormat::Markdown => {
            let mut out = format!("| {} |\n", header.join(" | "));
            out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
            for c in &result.cells {
                let mut row = vec![c.sample_size.to_string(), c.alpha.to_string()];
                row.extend(c.bias.iter().chain(&c.rmse).map(|v| format!("{v:.4}")));
                out.push_str(&format!("| {} |\n", row.join(" | ")));
            }
            out
        }
    }
}

/// The scale matrices of the reference study, by name.
pub mod matrices {
    use crate::packed::PackedSymmetric;

    fn dense(rows: [[f64; 3]; 3], scale: f64) -> PackedSymmetric<f64> {
        let rows: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|v| v * scale).collect())
            .collect();
        PackedSymmetric::from_dense(&rows).expect("symmetric literal")
    }

    const BASE: [[f64; 3]; 3] = [[0.10, 0.04, 0.01], [0.04, 0.10, 0.02], [0.01, 0.02, 0.10]];

    /// `0.1 I`.
    pub fn isotropic() -> PackedSymmetric<f64> {
        PackedSymmetric::scaled_identity(3, 0.1)
    }

    /// Unit-scale diagonal `0.1` with mild correlation.
    pub fn correlated() -> PackedSymmetric<f64> {
        dense(BASE, 1.0)
    }

    /// [`correlated`] with the first variance raised to `1.0`.
    pub fn dominant() -> PackedSymmetric<f64> {
        let mut m = BASE;
        m[0][0] = 1.0;
        dense(m, 1.0)
    }

    /// [`correlated`] times 100.
    pub fn large() -> PackedSymmetric<f64> {
        dense(BASE, 100.0)
    }

    /// [`correlated`] times 0.01.
    pub fn small() -> PackedSymmetric<f64> {
        dense([[1.0, 0.4, 0.1], [0.4, 1.0, 0.2], [0.1, 0.2, 1.0]], 1e-3)
    }

    /// Matrix of the off-diagonal study; equal to [`correlated`].
    pub fn offdiag_study() -> PackedSymmetric<f64> {
        correlated()
    }

    /// All six study matrices with their names.
    pub fn all() -> Vec<(&'static str, PackedSymmetric<f64>)> {
        vec![
            ("isotropic", isotropic()),
            ("correlated", correlated()),
            ("dominant", dominant()),
            ("large", large()),
            ("small", small()),
            ("offdiag_study", offdiag_study()),
        ]
    }
}

pub const PRESET_NAMES: [&str; 7] = [
    "table2", "table3", "table4", "table5", "table6", "table7", "table8",
];

/// Study presets `table2` ... `table8`: alphas `{0.5, 1, 1.5}`, sample
/// sizes `{100, 1000, 10000}`, zero location and default frequencies.
pub fn preset(name: &str, replications: usize, seed: u64) -> Result<ExperimentSpec<f64>> {
    use EstimatorKind::*;
    let alpha_est = vec![Press, Single(0), Mult];
    let (sigma, estimators) = match name {
        "table2" => (matrices::isotropic(), alpha_est),
        "table3" => (matrices::correlated(), alpha_est),
        "table4" => (matrices::dominant(), alpha_est),
        "table5" => (matrices::large(), alpha_est),
        "table6" => (matrices::small(), alpha_est),
        "table7" => (matrices::correlated(), vec![SigmaD]),
        "table8" => (matrices::offdiag_study(), vec![SigmaNd]),
        other => {
            return Err(Error::Parse(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(ExperimentSpec {
        name: Some(name.to_string()),
        alphas: vec![0.5, 1.0, 1.5],
        sample_sizes: vec![100, 1000, 10_000],
        replications,
        sigma,
        mu: None,
        frequencies: FrequencyPair::default(),
        seed,
        estimators,
        workers: None,
    })
}
