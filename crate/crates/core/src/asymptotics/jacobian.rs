use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charfun::safe_log_modulus_flagged;
use crate::error::{Error, Result};
use crate::estimators::{clamp_alpha, raw_alpha, FrequencyPair};
use crate::linalg::Matrix;
use crate::packed::{offdiag_len, packed_pairs};
use crate::params::StableParams;
use crate::scalar::Real;

use super::grid::{EcfGrid, MomentVector};

/// Step for central differences on `f64`.
pub const FD_STEP: f64 = 1e-6;
/// Relative agreement required between steps `h` and `h/2`.
pub const RICHARDSON_TOL: f64 = 1e-5;
/// Entries at or below this magnitude are not compared.
pub const SMALL_ENTRY: f64 = 1e-8;
/// Relative tolerance of the closed-form vs finite-difference audit.
pub const AUDIT_TOL: f64 = 1e-4;

/// `(alpha_mult, Sigma_d, Sigma_nd)` as a function of the moment vector
/// alone, with the number of modulus clamp events.
pub fn g_map_counted<T: Real>(
    theta: &MomentVector<T>,
    fp: &FrequencyPair<T>,
) -> Result<(Vec<T>, usize)> {
    let p = theta.dim();
    let q = offdiag_len(p);
    let mut clamps = 0;
    let mut log_mod = |c: usize| {
        let (v, clamped) = safe_log_modulus_flagged(theta.phi(c));
        clamps += usize::from(clamped);
        v
    };
    let l1: Vec<T> = (0..p).map(&mut log_mod).collect();
    let l2: Vec<T> = (p..2 * p).map(&mut log_mod).collect();
    let lp: Vec<T> = (2 * p..2 * p + q).map(&mut log_mod).collect();
    let lm: Vec<T> = (2 * p + q..2 * p + 2 * q).map(&mut log_mod).collect();

    let mut sum = T::zero();
    for k in 0..p {
        sum = sum + clamp_alpha(raw_alpha(l1[k], l2[k], fp)?);
    }
    let alpha = clamp_alpha(sum / T::from_usize_lossy(p));
    let expo = T::lit(2.0) / alpha;
    let s1 = fp.s1();

    let mut out = Vec::with_capacity(1 + p + q);
    out.push(alpha);
    out.extend(
        l1.iter()
            .map(|&l| T::lit(2.0) / (s1 * s1) * (-l).powf(expo)),
    );
    out.extend(
        lp.iter()
            .zip(&lm)
            .map(|(&a, &b)| ((-a).powf(expo) - (-b).powf(expo)) * T::lit(0.5)),
    );
    Ok((out, clamps))
}

pub fn g_map<T: Real>(theta: &MomentVector<T>, fp: &FrequencyPair<T>) -> Result<Vec<T>> {
    Ok(g_map_counted(theta, fp)?.0)
}

/// Finite-difference Jacobian of [`g_map`] with its self-consistency check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FdJacobian<T> {
    /// `(p(p+1)/2 + 1) x 2(p^2 + p)`, computed with step `step`.
    pub matrix: Matrix<T>,
    pub step: T,
    /// Largest relative gap between the step `h` and `h/2` estimates over
    /// entries above [`SMALL_ENTRY`].
    pub richardson_max_rel: T,
    /// Coordinates differenced one-sidedly to stay off the modulus clamp.
    pub one_sided: Vec<usize>,
}

fn fd_step<T: Real>() -> T {
    // f32 needs a wider step than 1e-6 to stay above rounding noise
    T::lit(FD_STEP).max(T::epsilon().cbrt())
}

fn fd_column<T: Real>(
    theta: &MomentVector<T>,
    fp: &FrequencyPair<T>,
    c: usize,
    h: T,
    base: &(Vec<T>, usize),
) -> Result<(Vec<T>, bool)> {
    let p = theta.dim();
    let shifted = |delta: T| -> Result<(Vec<T>, usize)> {
        let mut t = theta.theta().to_vec();
        t[c] = t[c] + delta;
        let (g, clamps) = g_map_counted(&MomentVector::from_theta(p, t)?, fp)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::FdFailure {
                coordinate: c,
                reason: "estimator map is not finite under perturbation".into(),
            });
        }
        Ok((g, clamps))
    };
    let (gp, np) = shifted(h)?;
    let (gm, nm) = shifted(-h)?;
    let (g0, n0) = base;
    let col = match (np > *n0, nm > *n0) {
        (true, true) => {
            return Err(Error::FdFailure {
                coordinate: c,
                reason: "both perturbations hit the modulus clamp".into(),
            })
        }
        (true, false) => (
            g0.iter().zip(&gm).map(|(&a, &b)| (a - b) / h).collect(),
            true,
        ),
        (false, true) => (
            gp.iter().zip(g0).map(|(&a, &b)| (a - b) / h).collect(),
            true,
        ),
        (false, false) => (
            gp.iter()
                .zip(&gm)
                .map(|(&a, &b)| (a - b) / (h + h))
                .collect(),
            false,
        ),
    };
    Ok(col)
}

/// Central differences of [`g_map`] at `theta0`, one column per moment
/// coordinate. Columns run in parallel and are assembled in order.
pub fn jacobian_fd<T: Real>(
    theta0: &MomentVector<T>,
    fp: &FrequencyPair<T>,
) -> Result<FdJacobian<T>> {
    let base = g_map_counted(theta0, fp)?;
    if base.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::FdFailure {
            coordinate: 0,
            reason: "estimator map is not finite at the base point".into(),
        });
    }
    let h = fd_step::<T>();
    let half = h * T::lit(0.5);
    let ncol = theta0.theta().len();
    let cols: Vec<(Vec<T>, Vec<T>, bool)> = (0..ncol)
        .into_par_iter()
        .map(|c| {
            let (a, one_sided) = fd_column(theta0, fp, c, h, &base)?;
            let (b, _) = fd_column(theta0, fp, c, half, &base)?;
            Ok((a, b, one_sided))
        })
        .collect::<Result<_>>()?;

    let nrow = base.0.len();
    let small = T::lit(SMALL_ENTRY);
    let mut worst = T::zero();
    for (a, b, _) in &cols {
        for (&x, &y) in a.iter().zip(b) {
            let scale = x.abs().max(y.abs());
            if scale > small {
                worst = worst.max((x - y).abs() / scale);
            }
        }
    }
    let matrix = Matrix::from_fn(nrow, ncol, |r, c| cols[c].0[r]);
    let one_sided = cols
        .iter()
        .enumerate()
        .filter(|(_, col)| col.2)
        .map(|(c, _)| c)
        .collect();
    Ok(FdJacobian {
        matrix,
        step: h,
        richardson_max_rel: worst,
        one_sided,
    })
}

/// Which closed-form Jacobian to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedForm {
    /// Derived directly from the estimator formulas.
    #[default]
    Corrected,
    /// The block formulas as commonly printed: no `1/p` from averaging
    /// the single-axis estimates, no `1/alpha` in `b_1`, and the opposite
    /// sign on `J_1`, `J_2`. Kept for the audit only.
    AsPrinted,
}

fn x_ln_x<T: Real>(x: T) -> T {
    if x > T::zero() {
        x * x.ln()
    } else {
        T::zero()
    }
}

/// Analytic Jacobian of [`g_map`] at the moments of `params`.
///
/// Rows are `(alpha, Sigma_d, Sigma_nd)`, columns follow the moment vector.
/// Each block gives the derivative with respect to a modulus `rho = |phi|`;
/// the chain rule `d rho / d Re = Re / rho`, `d rho / d Im = Im / rho` maps
/// it onto the two coordinates.
pub fn jacobian_closed<T: Real>(
    params: &StableParams<T>,
    fp: &FrequencyPair<T>,
    form: ClosedForm,
) -> Result<Matrix<T>> {
    let p = params.dim();
    let sigma = params.sigma();
    if let Some(k) = (0..p).find(|&k| !(sigma.get(k, k) > T::zero())) {
        return Err(Error::Domain(format!(
            "diagonal scale Sigma[{0},{0}] must be positive for the analytic Jacobian",
            k + 1
        )));
    }
    let grid = EcfGrid::new(p, fp)?;
    let theta = MomentVector::from_source(params, &grid)?;
    let m = grid.len();
    let q = offdiag_len(p);
    let a = params.alpha();
    let lambda = fp.log_ratio();
    let s1 = fp.s1();
    let two = T::lit(2.0);
    let pf = T::from_usize_lossy(p);
    let printed = form == ClosedForm::AsPrinted;
    let pdiv = if printed { T::one() } else { pf };

    let rho: Vec<T> = (0..m).map(|c| theta.phi(c).norm()).collect();
    let log_rho: Vec<T> = rho.iter().map(|r| r.ln()).collect();
    // L * rho at the s1 and s2 axis points
    let lr1: Vec<T> = (0..p)
        .map(|k| log_rho[grid.s1_col(k)] * rho[grid.s1_col(k)])
        .collect();
    let lr2: Vec<T> = (0..p)
        .map(|k| log_rho[grid.s2_col(k)] * rho[grid.s2_col(k)])
        .collect();

    let mut g = Matrix::zeros(1 + p + q, 2 * m);
    let mut set = |row: usize, col: usize, d_rho: T| {
        let z = theta.phi(col);
        g[(row, col)] = d_rho * z.re / rho[col];
        g[(row, m + col)] = d_rho * z.im / rho[col];
    };

    for k in 0..p {
        set(0, grid.s1_col(k), T::one() / (pdiv * lambda * lr1[k]));
        set(0, grid.s2_col(k), -T::one() / (pdiv * lambda * lr2[k]));
    }

    for j in 0..p {
        let sjj = sigma.get(j, j);
        let ln_s = (s1 * s1 * sjj / two).ln();
        for k in 0..p {
            let d1 = if k == j {
                two * sjj / (a * lr1[j]) * (T::one() - ln_s / (two * pdiv * lambda))
            } else if printed {
                -sjj * ln_s / (lambda * lr1[k])
            } else {
                -sjj * ln_s / (a * pf * lambda * lr1[k])
            };
            set(1 + j, grid.s1_col(k), d1);
            set(
                1 + j,
                grid.s2_col(k),
                sjj * ln_s / (a * pdiv * lambda * lr2[k]),
            );
        }
    }

    let half = T::lit(0.5);
    let sign = if printed { -T::one() } else { T::one() };
    for (l, (i, j)) in packed_pairs(p).enumerate() {
        let (sii, sjj, sij) = (sigma.get(i, i), sigma.get(j, j), sigma.get(i, j));
        let qp = half * sii + sij + half * sjj;
        let qm = half * sii - sij + half * sjj;
        let d1 = (x_ln_x(qp) - x_ln_x(qm)) / (two * a * lambda);
        let row = 1 + p + l;
        for k in 0..p {
            set(row, grid.s1_col(k), -sign * d1 / (pdiv * lr1[k]));
            set(row, grid.s2_col(k), sign * d1 / (pdiv * lr2[k]));
        }
        let expo = T::one() - a * half;
        let (cp, cm) = (grid.plus_col(l), grid.minus_col(l));
        set(row, cp, -qp.max(T::zero()).powf(expo) / (a * rho[cp]));
        set(row, cm, qm.max(T::zero()).powf(expo) / (a * rho[cm]));
    }
    Ok(g)
}

/// Name of the Jacobian block holding entry `(row, col)`.
pub fn block_name(p: usize, row: usize, col: usize) -> String {
    let q = offdiag_len(p);
    let m = p * p + p;
    let part = if col < m { "Re" } else { "Im" };
    let c = col % m;
    let (group, idx) = if c < p {
        (0, c)
    } else if c < 2 * p {
        (1, c - p)
    } else if c < 2 * p + q {
        (2, c - 2 * p)
    } else {
        (3, c - 2 * p - q)
    };
    let base = if row == 0 {
        match group {
            0 => "A_s^1".to_string(),
            1 => "A_s^2".to_string(),
            2 => "zero(alpha, r+)".to_string(),
            _ => "zero(alpha, r-)".to_string(),
        }
    } else if row <= p {
        match group {
            0 if idx == row - 1 => "b_d".to_string(),
            0 => "b_1".to_string(),
            1 => "B_2".to_string(),
            2 => "zero(Sigma_d, r+)".to_string(),
            _ => "zero(Sigma_d, r-)".to_string(),
        }
    } else {
        let l = row - 1 - p;
        match group {
            0 => "J_1".to_string(),
            1 => "J_2".to_string(),
            2 if idx == l => "J_+".to_string(),
            2 => "J_+ off-diagonal".to_string(),
            _ if idx == l => "J_-".to_string(),
            _ => "J_- off-diagonal".to_string(),
        }
    };
    format!("{base} [{part}]")
}

/// Agreement of one block between a closed form and the FD Jacobian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAudit {
    pub block: String,
    pub entries: usize,
    /// Entries where either side exceeds [`SMALL_ENTRY`].
    pub compared: usize,
    pub mismatched: usize,
    pub max_rel: f64,
}

impl BlockAudit {
    pub fn agrees(&self) -> bool {
        self.mismatched == 0
    }
}

/// Largest relative gap per block, in first-appearance order.
pub fn compare_blocks<T: Real>(p: usize, closed: &Matrix<T>, fd: &Matrix<T>) -> Vec<BlockAudit> {
    let mut blocks: Vec<BlockAudit> = Vec::new();
    for r in 0..fd.rows() {
        for c in 0..fd.cols() {
            let name = block_name(p, r, c);
            let idx = match blocks.iter().position(|b| b.block == name) {
                Some(i) => i,
                None => {
                    blocks.push(BlockAudit {
                        block: name,
                        entries: 0,
                        compared: 0,
                        mismatched: 0,
                        max_rel: 0.0,
                    });
                    blocks.len() - 1
                }
            };
            let b = &mut blocks[idx];
            b.entries += 1;
            let (x, y) = (closed[(r, c)].to_f64_lossy(), fd[(r, c)].to_f64_lossy());
            let scale = x.abs().max(y.abs());
            if scale > SMALL_ENTRY {
                b.compared += 1;
                let rel = (x - y).abs() / scale;
                b.max_rel = b.max_rel.max(rel);
                if rel > AUDIT_TOL {
                    b.mismatched += 1;
                }
            }
        }
    }
    blocks
}

/// Row-range maximum of the relative closed-vs-FD gap over compared entries.
pub fn rows_max_rel<T: Real>(
    closed: &Matrix<T>,
    fd: &Matrix<T>,
    rows: std::ops::Range<usize>,
) -> f64 {
    let mut worst: f64 = 0.0;
    for r in rows {
        for c in 0..fd.cols() {
            let (x, y) = (closed[(r, c)].to_f64_lossy(), fd[(r, c)].to_f64_lossy());
            let scale = x.abs().max(y.abs());
            if scale > SMALL_ENTRY {
                worst = worst.max((x - y).abs() / scale);
            }
        }
    }
    worst
}

/// Both closed forms checked block by block against finite differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianAudit {
    pub p: usize,
    pub alpha: f64,
    pub richardson_max_rel: f64,
    pub one_sided: Vec<usize>,
    /// Relative gap of the corrected form on the alpha row.
    pub alpha_row_max_rel: f64,
    /// Relative gap of the corrected form on the `Sigma_d` rows.
    pub sigma_d_max_rel: f64,
    pub corrected: Vec<BlockAudit>,
    pub as_printed: Vec<BlockAudit>,
}

impl JacobianAudit {
    pub fn corrected_disagreements(&self) -> Vec<&str> {
        self.corrected
            .iter()
            .filter(|b| !b.agrees())
            .map(|b| b.block.as_str())
            .collect()
    }

    pub fn printed_disagreements(&self) -> Vec<&str> {
        self.as_printed
            .iter()
            .filter(|b| !b.agrees())
            .map(|b| b.block.as_str())
            .collect()
    }

    /// One line per block and form.
    pub fn render(&self) -> String {
        let mut out = format!(
            "jacobian audit p={} alpha={} richardson_max_rel={:.3e} one_sided={:?}\n",
            self.p, self.alpha, self.richardson_max_rel, self.one_sided
        );
        for (form, blocks) in [
            ("corrected", &self.corrected),
            ("as-printed", &self.as_printed),
        ] {
            for b in blocks {
                out.push_str(&format!(
                    "{form:<10} {:<22} {} compared={:<3} mismatched={:<3} max_rel={:.3e}\n",
                    b.block,
                    if b.agrees() { "agree   " } else { "DISAGREE" },
                    b.compared,
                    b.mismatched,
                    b.max_rel
                ));
            }
        }
        out
    }
}

/// FD Jacobian at the exact moments of `params`, compared with both closed
/// forms.
pub fn jacobian_audit<T: Real>(
    params: &StableParams<T>,
    fp: &FrequencyPair<T>,
) -> Result<JacobianAudit> {
    let p = params.dim();
    let grid = EcfGrid::new(p, fp)?;
    let theta = MomentVector::from_source(params, &grid)?;
    let fd = jacobian_fd(&theta, fp)?;
    let corrected = jacobian_closed(params, fp, ClosedForm::Corrected)?;
    let printed = jacobian_closed(params, fp, ClosedForm::AsPrinted)?;
    Ok(JacobianAudit {
        p,
        alpha: params.alpha().to_f64_lossy(),
        richardson_max_rel: fd.richardson_max_rel.to_f64_lossy(),
        one_sided: fd.one_sided.clone(),
        alpha_row_max_rel: rows_max_rel(&corrected, &fd.matrix, 0..1),
        sigma_d_max_rel: rows_max_rel(&corrected, &fd.matrix, 1..1 + p),
        corrected: compare_blocks(p, &corrected, &fd.matrix),
        as_printed: compare_blocks(p, &printed, &fd.matrix),
    })
}
