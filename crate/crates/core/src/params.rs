use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packed::PackedSymmetric;
use crate::scalar::Real;

/// Parameters `(alpha, mu, Sigma)` of a sub-Gaussian alpha-stable law with
/// characteristic function `exp(i t'mu - (t'Sigma t / 2)^(alpha/2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr<T>", into = "ParamsRepr<T>", bound = "T: Real")]
pub struct StableParams<T> {
    alpha: T,
    mu: Vec<T>,
    sigma: PackedSymmetric<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct ParamsRepr<T> {
    alpha: T,
    mu: Vec<T>,
    sigma: PackedSymmetric<T>,
}

impl<T: Real> TryFrom<ParamsRepr<T>> for StableParams<T> {
    type Error = Error;

    fn try_from(r: ParamsRepr<T>) -> Result<Self> {
        Self::new(r.alpha, r.mu, r.sigma)
    }
}

impl<T: Real> From<StableParams<T>> for ParamsRepr<T> {
    fn from(p: StableParams<T>) -> Self {
        Self {
            alpha: p.alpha,
            mu: p.mu,
            sigma: p.sigma,
        }
    }
}

impl<T: Real> StableParams<T> {
    /// Validates `0 < alpha < 2`, matching dimensions and a PSD scale matrix.
    pub fn new(alpha: T, mu: Vec<T>, sigma: PackedSymmetric<T>) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::lit(2.0)) {
            return Err(Error::Domain(format!(
                "alpha must lie in (0, 2), got {alpha}"
            )));
        }
        if mu.len() != sigma.dim() {
            return Err(Error::Shape(format!(
                "location has length {} but scale matrix is {}x{}",
                mu.len(),
                sigma.dim(),
                sigma.dim()
            )));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::Data("location must be finite".into()));
        }
        let st = sigma.psd_check()?;
        if !st.is_psd {
            return Err(Error::NotPsd {
                lambda_min: st.lambda_min.to_f64_lossy(),
                tolerance: st.tolerance.to_f64_lossy(),
            });
        }
        Ok(Self { alpha, mu, sigma })
    }

    /// Centered law (`mu = 0`).
    pub fn centered(alpha: T, sigma: PackedSymmetric<T>) -> Result<Self> {
        let p = sigma.dim();
        Self::new(alpha, vec![T::zero(); p], sigma)
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn sigma(&self) -> &PackedSymmetric<T> {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn with_alpha(&self, alpha: T) -> Result<Self> {
        Self::new(alpha, self.mu.clone(), self.sigma.clone())
    }

    pub fn with_mu(&self, mu: Vec<T>) -> Result<Self> {
        Self::new(self.alpha, mu, self.sigma.clone())
    }
}

/// `n` observations of a `p`-variate vector, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix<T> {
    n: usize,
    p: usize,
    data: Vec<T>,
}

impl<T: Real> SampleMatrix<T> {
    pub fn new(n: usize, p: usize, data: Vec<T>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::Shape(format!(
                "sample must be non-empty, got {n}x{p}"
            )));
        }
        if data.len() != n * p {
            return Err(Error::Shape(format!(
                "{} values for a {n}x{p} sample",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value in observation {} component {}",
                pos / p + 1,
                pos % p + 1
            )));
        }
        Ok(Self { n, p, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Shape("rows have unequal lengths".into()));
        }
        Self::new(n, p, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, j: usize) -> &[T] {
        &self.data[j * self.p..(j + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.p)
    }

    pub fn column(&self, k: usize) -> Vec<T> {
        self.rows().map(|r| r[k]).collect()
    }

    /// Applies `f(component, value)` to every entry.
    pub fn map_entries(&self, f: impl Fn(usize, T) -> T) -> Result<Self> {
        let p = self.p;
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(idx, &v)| f(idx % p, v))
            .collect();
        Self::new(self.n, p, data)
    }

    /// Observations reflected through the origin and appended: `x ∪ -x`.
    pub fn reflection_augmented(&self) -> Self {
        let mut data = self.data.clone();
        data.extend(self.data.iter().map(|&v| -v));
        Self {
            n: 2 * self.n,
            p: self.p,
            data,
        }
    }

    /// Writes the `x1,...,xp` CSV layout, optionally preceded by one
    /// `#`-prefixed metadata line.
    pub fn write_csv<W: Write>(&self, mut w: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record((1..=self.p).map(|k| format!("x{k}")))?;
        for row in self.rows() {
            wtr.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the `x1,...,xp` CSV layout; lines starting with `#` are skipped.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(r);
        let p = rdr.headers()?.len();
        let mut data = Vec::new();
        let mut n = 0;
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != p {
                return Err(Error::Shape(format!(
                    "row {} has {} fields, header has {p}",
                    n + 1,
                    rec.len()
                )));
            }
            for f in rec.iter() {
                let v: f64 = f
                    .parse()
                    .map_err(|e| Error::Parse(format!("row {}: bad value {f:?}: {e}", n + 1)))?;
                data.push(T::lit(v));
            }
            n += 1;
        }
        Self::new(n, p, data)
    }
}
