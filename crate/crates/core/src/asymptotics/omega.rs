use serde::{Deserialize, Serialize};

use crate::charfun::CharacteristicFunction;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

use super::grid::EcfGrid;

/// Covariance of `(cos(t_j'X), sin(t_j'X))_j` for one observation `X`,
/// split into its `m x m` blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OmegaMatrix<T> {
    pub m: usize,
    /// `Cov(cos t_j'X, cos t_k'X)`.
    pub re: Matrix<T>,
    /// `Cov(sin t_j'X, sin t_k'X)`.
    pub im: Matrix<T>,
    /// `Cov(cos t_j'X, sin t_k'X)`.
    pub ri: Matrix<T>,
    /// `[[re, ri], [ri', im]]`, matching the moment vector layout.
    pub assembled: Matrix<T>,
}

impl<T: Real> OmegaMatrix<T> {
    /// Smallest eigenvalue of the assembled matrix and its trace.
    pub fn spectrum_check(&self) -> Result<(T, T)> {
        Ok((self.assembled.min_eigenvalue()?, self.assembled.trace()))
    }
}

/// Builds the covariance from `phi(t_j + t_k)` and `phi(t_k - t_j)`:
///
/// ```text
/// re[j,k] =  Re phi(tj+tk)/2 + Re phi(tk-tj)/2 - Re phi(tj) Re phi(tk)
/// im[j,k] = -Re phi(tj+tk)/2 + Re phi(tk-tj)/2 - Im phi(tj) Im phi(tk)
/// ri[j,k] =  Im phi(tj+tk)/2 + Im phi(tk-tj)/2 - Re phi(tj) Im phi(tk)
/// ```
///
/// `source` is normally the exact law; a sample gives the plug-in estimate.
pub fn omega<T: Real, C: CharacteristicFunction<T>>(
    source: &C,
    grid: &EcfGrid<T>,
) -> Result<OmegaMatrix<T>> {
    if source.dim() != grid.dim() {
        return Err(Error::Shape(format!(
            "source has dimension {}, grid has {}",
            source.dim(),
            grid.dim()
        )));
    }
    let m = grid.len();
    let pts = grid.points();
    let mut args = Vec::with_capacity(m + 2 * m * m);
    args.extend(pts.iter().cloned());
    for tj in pts {
        for tk in pts {
            args.push(tj.iter().zip(tk).map(|(&a, &b)| a + b).collect());
            args.push(tj.iter().zip(tk).map(|(&a, &b)| b - a).collect());
        }
    }
    let vals = source.eval_many(&args)?;
    let (phi, pairs) = vals.split_at(m);
    let half = T::lit(0.5);

    let mut re = Matrix::zeros(m, m);
    let mut im = Matrix::zeros(m, m);
    let mut ri = Matrix::zeros(m, m);
    for j in 0..m {
        for k in 0..m {
            let sum = pairs[2 * (j * m + k)];
            let diff = pairs[2 * (j * m + k) + 1];
            re[(j, k)] = half * sum.re + half * diff.re - phi[j].re * phi[k].re;
            im[(j, k)] = -half * sum.re + half * diff.re - phi[j].im * phi[k].im;
            ri[(j, k)] = half * sum.im + half * diff.im - phi[j].re * phi[k].im;
        }
    }
    let assembled = Matrix::from_fn(2 * m, 2 * m, |a, b| match (a < m, b < m) {
        (true, true) => re[(a, b)],
        (true, false) => ri[(a, b - m)],
        (false, true) => ri[(b, a - m)],
        (false, false) => im[(a - m, b - m)],
    });
    Ok(OmegaMatrix {
        m,
        re,
        im,
        ri,
        assembled,
    })
}
