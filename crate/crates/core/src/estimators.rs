//! Method-of-moments estimators built on `log |phi|`.
//!
//! Every estimator reads the characteristic function only through
//! [`CharacteristicFunction`], so each one can be applied to a sample (the
//! real use) or to the exact law (where it must return the true parameter).

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::charfun::{safe_log_modulus_flagged, CharacteristicFunction};
use crate::error::{Error, Result};
use crate::packed::{packed_pairs, PackedSymmetric};
use crate::params::SampleMatrix;
use crate::scalar::Real;

/// Smallest and largest value an alpha estimate is clamped to.
pub const ALPHA_MIN: f64 = 0.02;
pub const ALPHA_MAX: f64 = 2.0;

/// Default evaluation frequencies.
pub const DEFAULT_S1: f64 = 5.0;
pub const DEFAULT_S2: f64 = 2.0;

/// The two frequencies `s1 != s2`, both positive, at which `log|phi|` is
/// compared to recover alpha.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FreqRepr<T>", into = "FreqRepr<T>", bound = "T: Real")]
pub struct FrequencyPair<T> {
    s1: T,
    s2: T,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct FreqRepr<T> {
    s1: T,
    s2: T,
}

impl<T: Real> TryFrom<FreqRepr<T>> for FrequencyPair<T> {
    type Error = Error;
    fn try_from(r: FreqRepr<T>) -> Result<Self> {
        Self::new(r.s1, r.s2)
    }
}

impl<T: Real> From<FrequencyPair<T>> for FreqRepr<T> {
    fn from(f: FrequencyPair<T>) -> Self {
        Self { s1: f.s1, s2: f.s2 }
    }
}

impl<T: Real> FrequencyPair<T> {
    pub fn new(s1: T, s2: T) -> Result<Self> {
        if !(s1 > T::zero() && s2 > T::zero() && s1.is_finite() && s2.is_finite()) {
            return Err(Error::Domain(format!(
                "frequencies must be positive and finite, got s1={s1}, s2={s2}"
            )));
        }
        if s1 == s2 {
            return Err(Error::Domain(format!(
                "frequencies must differ, got s1=s2={s1}"
            )));
        }
        Ok(Self { s1, s2 })
    }

    pub fn s1(&self) -> T {
        self.s1
    }

    pub fn s2(&self) -> T {
        self.s2
    }

    /// `log(s1 / s2)`, never zero.
    pub fn log_ratio(&self) -> T {
        (self.s1 / self.s2).ln()
    }
}

impl<T: Real> Default for FrequencyPair<T> {
    fn default() -> Self {
        Self {
            s1: T::lit(DEFAULT_S1),
            s2: T::lit(DEFAULT_S2),
        }
    }
}

/// Which alpha estimator to run. `Single` holds a 0-based component index;
/// its textual form `single:k` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlphaMethod {
    /// Press: both frequencies applied along `e = (1, ..., 1)`.
    Press,
    /// One coordinate axis.
    Single(usize),
    /// Average of the per-axis estimates.
    #[default]
    Mult,
}

impl fmt::Display for AlphaMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaMethod::Press => f.write_str("press"),
            AlphaMethod::Single(k) => write!(f, "single:{}", k + 1),
            AlphaMethod::Mult => f.write_str("mult"),
        }
    }
}

impl FromStr for AlphaMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "press" => Ok(AlphaMethod::Press),
            "mult" => Ok(AlphaMethod::Mult),
            "single" => Ok(AlphaMethod::Single(0)),
            other => {
                let k = other
                    .strip_prefix("single:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| {
                        Error::Parse(format!(
                            "unknown alpha method {other:?}; expected press, mult or single:k (k >= 1)"
                        ))
                    })?;
                Ok(AlphaMethod::Single(k - 1))
            }
        }
    }
}

impl Serialize for AlphaMethod {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AlphaMethod {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Positive scale factors `M[k]` for the location estimator; component `k`
/// is read at frequency `e_k / M[k]`, which requires `|mu_k| / M[k] < pi/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuConfig<T> {
    m: Vec<T>,
}

impl<T: Real> MuConfig<T> {
    pub fn new(m: Vec<T>) -> Result<Self> {
        if let Some(k) = m.iter().position(|&v| !(v > T::zero() && v.is_finite())) {
            return Err(Error::Domain(format!(
                "location scale M[{}] must be positive and finite",
                k + 1
            )));
        }
        Ok(Self { m })
    }

    /// `M[k] = max(1, 4 * MAD_k, 2 * |median_k|)`.
    ///
    /// The MAD term covers the spread of component `k`; the median term
    /// keeps `|mu_k| / M[k]` near 1/2 when the location dominates.
    pub fn auto(sample: &SampleMatrix<T>) -> Self {
        let m = (0..sample.p())
            .map(|k| {
                let col = sample.column(k);
                let med = median(&col);
                let dev: Vec<T> = col.iter().map(|&v| (v - med).abs()).collect();
                let mad = median(&dev);
                T::one().max(T::lit(4.0) * mad).max(T::lit(2.0) * med.abs())
            })
            .collect();
        Self { m }
    }

    pub fn scales(&self) -> &[T] {
        &self.m
    }
}

/// Median of a non-empty slice of finite values.
pub fn median<T: Real>(values: &[T]) -> T {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n == 0 {
        return T::nan();
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) * T::lit(0.5)
    }
}

/// How the location scales are chosen.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuScale<T> {
    #[default]
    Auto,
    Fixed(Vec<T>),
}

/// `log|phi(t)|` lookups with a running count of clamp events.
struct LogModulus<'a, C> {
    cf: &'a C,
    clamps: Cell<usize>,
}

impl<'a, C> LogModulus<'a, C> {
    fn new(cf: &'a C) -> Self {
        Self {
            cf,
            clamps: Cell::new(0),
        }
    }
}

impl<C> LogModulus<'_, C> {
    fn at<T: Real>(&self, t: &[T]) -> Result<T>
    where
        C: CharacteristicFunction<T>,
    {
        let phi = self.cf.eval(t)?;
        if !(phi.re.is_finite() && phi.im.is_finite()) {
            return Err(Error::Data(
                "characteristic function value is not finite".into(),
            ));
        }
        let (v, clamped) = safe_log_modulus_flagged(phi);
        if clamped {
            self.clamps.set(self.clamps.get() + 1);
        }
        Ok(v)
    }

    fn dim<T: Real>(&self) -> usize
    where
        C: CharacteristicFunction<T>,
    {
        self.cf.dim()
    }
}

fn axis<T: Real>(p: usize, k: usize, s: T) -> Vec<T> {
    let mut t = vec![T::zero(); p];
    t[k] = s;
    t
}

fn pair<T: Real>(p: usize, i: usize, j: usize, sign: T) -> Vec<T> {
    let mut t = vec![T::zero(); p];
    t[i] = T::one();
    t[j] = sign;
    t
}

/// `log(l1 / l2) / log|s1/s2|` before clamping.
pub(crate) fn raw_alpha<T: Real>(l1: T, l2: T, fp: &FrequencyPair<T>) -> Result<T> {
    let a = (l1 / l2).ln() / fp.log_ratio();
    if a.is_nan() {
        return Err(Error::Data("alpha estimate is undefined (NaN)".into()));
    }
    Ok(a)
}

pub(crate) fn clamp_alpha<T: Real>(a: T) -> T {
    a.max(T::lit(ALPHA_MIN)).min(T::lit(ALPHA_MAX))
}

fn check_alpha_hat<T: Real>(a: T) -> Result<()> {
    if !(a > T::zero() && a <= T::lit(2.0)) {
        return Err(Error::Domain(format!(
            "alpha estimate must lie in (0, 2], got {a}"
        )));
    }
    Ok(())
}

fn press_impl<T: Real, C: CharacteristicFunction<T>>(
    lm: &LogModulus<'_, C>,
    fp: &FrequencyPair<T>,
) -> Result<T> {
    let p = lm.dim::<T>();
    let l1 = lm.at(&vec![fp.s1; p])?;
    let l2 = lm.at(&vec![fp.s2; p])?;
    Ok(clamp_alpha(raw_alpha(l1, l2, fp)?))
}

fn single_impl<T: Real, C: CharacteristicFunction<T>>(
    lm: &LogModulus<'_, C>,
    k: usize,
    fp: &FrequencyPair<T>,
) -> Result<T> {
    let p = lm.dim::<T>();
    if k >= p {
        return Err(Error::IndexDomain(format!(
            "component {} out of range for p={p}",
            k + 1
        )));
    }
    let l1 = lm.at(&axis(p, k, fp.s1))?;
    let l2 = lm.at(&axis(p, k, fp.s2))?;
    Ok(clamp_alpha(raw_alpha(l1, l2, fp)?))
}

fn mult_impl<T: Real, C: CharacteristicFunction<T>>(
    lm: &LogModulus<'_, C>,
    fp: &FrequencyPair<T>,
) -> Result<T> {
    let p = lm.dim::<T>();
    let mut sum = T::zero();
    for k in 0..p {
        sum = sum + single_impl(lm, k, fp)?;
    }
    Ok(clamp_alpha(sum / T::from_usize_lossy(p)))
}

fn sigma_diag_impl<T: Real, C: CharacteristicFunction<T>>(
    lm: &LogModulus<'_, C>,
    alpha_hat: T,
    s: &[T],
) -> Result<Vec<T>> {
    check_alpha_hat(alpha_hat)?;
    let p = lm.dim::<T>();
    if s.len() != p {
        return Err(Error::Shape(format!(
            "{} diagonal frequencies for p={p}",
            s.len()
        )));
    }
    if let Some(k) = s.iter().position(|&v| !(v > T::zero())) {
        return Err(Error::Domain(format!(
            "diagonal frequency for component {} must be positive",
            k + 1
        )));
    }
    let expo = T::lit(2.0) / alpha_hat;
    (0..p)
        .map(|k| {
            let l = lm.at(&axis(p, k, s[k]))?;
            Ok(T::lit(2.0) / (s[k] * s[k]) * (-l).powf(expo))
        })
        .collect()
}

fn sigma_offdiag_impl<T: Real, C: CharacteristicFunction<T>>(
    lm: &LogModulus<'_, C>,
    alpha_hat: T,
) -> Result<Vec<T>> {
    check_alpha_hat(alpha_hat)?;
    let p = lm.dim::<T>();
    let expo = T::lit(2.0) / alpha_hat;
    packed_pairs(p)
        .map(|(i, j)| {
            let plus = lm.at(&pair(p, i, j, T::one()))?;
            let minus = lm.at(&pair(p, i, j, -T::one()))?;
            Ok(((-plus).powf(expo) - (-minus).powf(expo)) * T::lit(0.5))
        })
        .collect()
}

fn mu_component<T: Real, C: CharacteristicFunction<T>>(cf: &C, k: usize, m: T) -> Result<T> {
    let p = cf.dim();
    let phi = cf.eval(&axis(p, k, T::one() / m))?;
    if phi.re == T::zero() || !phi.re.is_finite() || !phi.im.is_finite() {
        return Err(Error::MuEstimation { component: k + 1 });
    }
    Ok(m * (phi.im / phi.re).atan())
}

/// Press estimator: frequencies `s1 e`, `s2 e` with `e = (1, ..., 1)`.
pub fn alpha_press<T: Real, C: CharacteristicFunction<T>>(
    cf: &C,
    fp: &FrequencyPair<T>,
) -> Result<T> {
    press_impl(&LogModulus::new(cf), fp)
}

/// Single-axis estimator on component `k` (0-based).
pub fn alpha_single<T: Real, C: CharacteristicFunction<T>>(
    cf: &C,
    k: usize,
    fp: &FrequencyPair<T>,
) -> Result<T> {
    single_impl(&LogModulus::new(cf), k, fp)
}

/// Mean of the `p` single-axis estimates.
pub fn alpha_mult<T: Real, C: CharacteristicFunction<T>>(
    cf: &C,
    fp: &FrequencyPair<T>,
) -> Result<T> {
    mult_impl(&LogModulus::new(cf), fp)
}

pub fn alpha_by_method<T: Real, C: CharacteristicFunction<T>>(
    cf: &C,
    method: AlphaMethod,
    fp: &FrequencyPair<T>,
) -> Result<T> {
    let lm = LogModulus::new(cf);
    match method {
        AlphaMethod::Press => press_impl(&lm, fp),
        AlphaMethod::Single(k) => single_impl(&lm, k, fp),
        AlphaMethod::Mult => mult_impl(&lm, fp),
    }
}

/// `Sigma_ii = (2 / s^2) (-log|phi(s e_i)|)^(2 / alpha_hat)` with one `s`
/// for every axis.
pub fn sigma_diag<T: Real, C: CharacteristicFunction<T>>(
    cf: &C,
    alpha_hat: T,
    s: T,
) -> Result<Vec<T>> {
    sigma_diag_impl(&LogModulus::new(cf), alpha_hat, &vec![s; cf.dim()])
}

/// [`sigma_diag`] with a separate frequency per axis.
pub fn sigma_diag_per_axis<T: Real, C: CharacteristicFunction<T>>(
    cf: &C,
    alpha_hat: T,
    s: &[T],
) -> Result<Vec<T>> {
    sigma_diag_impl(&LogModulus::new(cf), alpha_hat, s)
}

/// `Sigma_ij = ((-log|phi(e_i+e_j)|)^(2/a) - (-log|phi(e_i-e_j)|)^(2/a)) / 2`
/// in packed order.
pub fn sigma_offdiag<T: Real, C: CharacteristicFunction<T>>(
    cf: &C,
    alpha_hat: T,
) -> Result<Vec<T>> {
    sigma_offdiag_impl(&LogModulus::new(cf), alpha_hat)
}

/// `mu[k] = M[k] * atan(Im phi(e_k/M[k]) / Re phi(e_k/M[k]))`.
pub fn mu_estimate<T: Real, C: CharacteristicFunction<T>>(
    cf: &C,
    cfg: &MuConfig<T>,
) -> Result<Vec<T>> {
    mu_estimate_partial(cf, cfg)?.into_iter().collect()
}

/// Per-component location estimates; a failing component does not stop the
/// others.
pub fn mu_estimate_partial<T: Real, C: CharacteristicFunction<T>>(
    cf: &C,
    cfg: &MuConfig<T>,
) -> Result<Vec<Result<T>>> {
    let p = cf.dim();
    if cfg.m.len() != p {
        return Err(Error::Shape(format!(
            "{} location scales for p={p}",
            cfg.m.len()
        )));
    }
    Ok(cfg
        .m
        .iter()
        .enumerate()
        .map(|(k, &m)| mu_component(cf, k, m))
        .collect())
}

/// Options for [`estimate_all`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EstimateOptions<T> {
    pub alpha_method: AlphaMethod,
    /// Re-estimate alpha after standardizing each component with a
    /// provisional diagonal estimate.
    pub rescale: bool,
    /// Replace the scale-matrix estimate with its PSD projection.
    pub psd_project: bool,
    pub mu_scale: MuScale<T>,
    /// Per-axis frequencies for the diagonal; defaults to `s1` on every axis.
    pub diag_s: Option<Vec<T>>,
}

impl<T: Real> Default for EstimateOptions<T> {
    fn default() -> Self {
        Self {
            alpha_method: AlphaMethod::Mult,
            rescale: false,
            psd_project: false,
            mu_scale: MuScale::Auto,
            diag_s: None,
        }
    }
}

/// Point estimates with the diagnostics needed to reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EstimationReport<T> {
    pub n: usize,
    pub p: usize,
    pub alpha_hat: T,
    pub alpha_method: AlphaMethod,
    /// The estimate sits on `ALPHA_MIN` or `ALPHA_MAX`.
    pub alpha_at_clamp: bool,
    pub sigma_hat: PackedSymmetric<T>,
    /// `None` where the location estimator failed for that component.
    pub mu_hat: Vec<Option<T>>,
    pub mu_scales: Vec<T>,
    pub frequencies: FrequencyPair<T>,
    pub diag_s: Vec<T>,
    pub clamp_events: usize,
    pub psd_projected: bool,
    pub rescaled: bool,
    pub warnings: Vec<String>,
}

impl<T: Real> EstimationReport<T> {
    /// `mu_hat` with failed components replaced by zero.
    pub fn mu_or_zero(&self) -> Vec<T> {
        self.mu_hat
            .iter()
            .map(|m| m.unwrap_or_else(T::zero))
            .collect()
    }
}

fn is_constant<T: Real>(col: &[T]) -> bool {
    col.windows(2).all(|w| w[0] == w[1])
}

/// Runs the full pipeline: alpha, diagonal and off-diagonal scale entries,
/// and location.
pub fn estimate_all<T: Real>(
    sample: &SampleMatrix<T>,
    fp: &FrequencyPair<T>,
    opts: &EstimateOptions<T>,
) -> Result<EstimationReport<T>> {
    let (n, p) = (sample.n(), sample.p());
    if n < 2 {
        return Err(Error::Shape(format!(
            "need at least 2 observations, got {n}"
        )));
    }
    for k in 0..p {
        if is_constant(&sample.column(k)) {
            return Err(Error::Degenerate { component: k + 1 });
        }
    }
    let mut warnings = Vec::new();
    if let AlphaMethod::Single(k) = opts.alpha_method {
        if k >= p {
            return Err(Error::IndexDomain(format!(
                "alpha method single:{} out of range for p={p}",
                k + 1
            )));
        }
    }
    if opts.alpha_method == AlphaMethod::Press {
        let sums: Vec<T> = sample.rows().map(|r| r.iter().copied().sum()).collect();
        if is_constant(&sums) {
            warnings.push(
                "sum of components is constant; the Press estimator is not identified".into(),
            );
        }
    }
    let diag_s = match &opts.diag_s {
        Some(s) => s.clone(),
        None => vec![fp.s1(); p],
    };

    let lm = LogModulus::new(sample);
    let mut alpha_hat = match opts.alpha_method {
        AlphaMethod::Press => press_impl(&lm, fp)?,
        AlphaMethod::Single(k) => single_impl(&lm, k, fp)?,
        AlphaMethod::Mult => mult_impl(&lm, fp)?,
    };
    let mut clamp_events = lm.clamps.get();

    let mut alpha_method = opts.alpha_method;
    if opts.rescale {
        // standardize so that s1^2 * Sigma_kk / 2 = 1 for every component
        let provisional = sigma_diag_impl(&lm, alpha_hat, &diag_s)?;
        let factors: Vec<T> = provisional
            .iter()
            .zip(&diag_s)
            .map(|(&d, &s)| {
                let f = (T::lit(2.0) / (s * s * d)).sqrt();
                if f.is_finite() && f > T::zero() {
                    f
                } else {
                    T::one()
                }
            })
            .collect();
        let scaled = sample.map_entries(|k, v| v * factors[k])?;
        let lm_scaled = LogModulus::new(&scaled);
        alpha_hat = mult_impl(&lm_scaled, fp)?;
        clamp_events += lm_scaled.clamps.get();
        alpha_method = AlphaMethod::Mult;
    }
    let alpha_at_clamp = alpha_hat <= T::lit(ALPHA_MIN) || alpha_hat >= T::lit(ALPHA_MAX);
    if alpha_at_clamp {
        warnings.push(format!(
            "alpha estimate {alpha_hat} sits on the clamp range [{ALPHA_MIN}, {ALPHA_MAX}]"
        ));
    }

    let lm = LogModulus::new(sample);
    let diag = sigma_diag_impl(&lm, alpha_hat, &diag_s)?;
    let offdiag = sigma_offdiag_impl(&lm, alpha_hat)?;
    clamp_events += lm.clamps.get();
    if diag.iter().chain(&offdiag).any(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "scale estimate overflowed at alpha_hat={alpha_hat}"
        )));
    }
    let mut sigma_hat = PackedSymmetric::from_parts(p, diag, offdiag)?;
    let mut psd_projected = false;
    if opts.psd_project && !sigma_hat.psd_check()?.is_psd {
        sigma_hat = sigma_hat.psd_project()?;
        psd_projected = true;
    }

    let mu_cfg = match &opts.mu_scale {
        MuScale::Auto => MuConfig::auto(sample),
        MuScale::Fixed(m) => MuConfig::new(m.clone())?,
    };
    let mu_hat = mu_estimate_partial(sample, &mu_cfg)?
        .into_iter()
        .map(|r| match r {
            Ok(v) => Some(v),
            Err(e) => {
                warnings.push(e.to_string());
                None
            }
        })
        .collect();

    Ok(EstimationReport {
        n,
        p,
        alpha_hat,
        alpha_method,
        alpha_at_clamp,
        sigma_hat,
        mu_hat,
        mu_scales: mu_cfg.m,
        frequencies: *fp,
        diag_s,
        clamp_events,
        psd_projected,
        rescaled: opts.rescale,
        warnings,
    })
}
