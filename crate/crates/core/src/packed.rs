//! Packed storage for symmetric scale matrices.
//!
//! The diagonal is stored as its own vector and the strictly-lower triangle
//! is stacked row by row, so that element `(i, j)` with `i > j` (1-based)
//! lands at position `#(i, j) = i(i-1)/2 - (i-1) + j`:
//!
//! ```text
//! i  | 2 | 3  3 | 4  4  4 | 5  5  5  5
//! j  | 1 | 1  2 | 1  2  3 | 1  2  3  4
//! #  | 1 | 2  3 | 4  5  6 | 7  8  9 10
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Number of strictly sub-diagonal entries of a `p`×`p` matrix.
#[inline]
pub fn offdiag_len(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

/// Position of the sub-diagonal element `(i, j)` in the packed vector.
///
/// Indices are 1-based on both sides: `2 <= i <= p`, `1 <= j <= i - 1`,
/// result in `1..=p(p-1)/2`.
pub fn pack_index(i: usize, j: usize, p: usize) -> Result<usize> {
    if i < 2 || i > p || j < 1 || j >= i {
        return Err(Error::IndexDomain(format!(
            "(i={i}, j={j}) is not a sub-diagonal position of a {p}x{p} matrix"
        )));
    }
    Ok(i * (i - 1) / 2 - (i - 1) + j)
}

/// Inverse of [`pack_index`]: packed position `k` (1-based) to `(i, j)`.
pub fn unpack_index(k: usize, p: usize) -> Result<(usize, usize)> {
    let len = offdiag_len(p);
    if k < 1 || k > len {
        return Err(Error::IndexDomain(format!(
            "packed position {k} outside 1..={len} for p={p}"
        )));
    }
    // row i holds positions (i-1)(i-2)/2 + 1 ..= i(i-1)/2
    let mut i = 2;
    while i * (i - 1) / 2 < k {
        i += 1;
    }
    let j = k - (i - 1) * (i - 2) / 2;
    Ok((i, j))
}

/// Iterates `(i, j)` pairs (0-based, `i > j`) in packed order.
pub fn packed_pairs(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..p).flat_map(|i| (0..i).map(move |j| (i, j)))
}

/// Symmetric `p`×`p` matrix held as diagonal plus packed sub-diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PackedRepr<T>", into = "PackedRepr<T>", bound = "T: Real")]
pub struct PackedSymmetric<T> {
    dim: usize,
    diag: Vec<T>,
    subdiag: Vec<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct PackedRepr<T> {
    dim: usize,
    diag: Vec<T>,
    subdiag: Vec<T>,
}

impl<T: Real> TryFrom<PackedRepr<T>> for PackedSymmetric<T> {
    type Error = Error;

    fn try_from(r: PackedRepr<T>) -> Result<Self> {
        Self::from_parts(r.dim, r.diag, r.subdiag)
    }
}

impl<T: Real> From<PackedSymmetric<T>> for PackedRepr<T> {
    fn from(m: PackedSymmetric<T>) -> Self {
        Self {
            dim: m.dim,
            diag: m.diag,
            subdiag: m.subdiag,
        }
    }
}

/// Outcome of [`PackedSymmetric::psd_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdStatus<T> {
    pub is_psd: bool,
    pub lambda_min: T,
    pub tolerance: T,
}

impl<T: Real> PackedSymmetric<T> {
    pub fn from_parts(dim: usize, diag: Vec<T>, subdiag: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("matrix dimension must be at least 1".into()));
        }
        if diag.len() != dim || subdiag.len() != offdiag_len(dim) {
            return Err(Error::Shape(format!(
                "dim={dim} needs {} diagonal and {} sub-diagonal entries, got {} and {}",
                dim,
                offdiag_len(dim),
                diag.len(),
                subdiag.len()
            )));
        }
        if diag.iter().chain(&subdiag).any(|v| !v.is_finite()) {
            return Err(Error::Data("matrix entries must be finite".into()));
        }
        Ok(Self { dim, diag, subdiag })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            diag: vec![T::zero(); dim],
            subdiag: vec![T::zero(); offdiag_len(dim)],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, T::one())
    }

    pub fn scaled_identity(dim: usize, s: T) -> Self {
        Self {
            dim,
            diag: vec![s; dim],
            subdiag: vec![T::zero(); offdiag_len(dim)],
        }
    }

    /// Builds from dense rows. The input must be symmetric up to a relative
    /// `1e-12`; the two triangles are averaged.
    pub fn from_dense(rows: &[Vec<T>]) -> Result<Self> {
        let p = rows.len();
        if p == 0 || rows.iter().any(|r| r.len() != p) {
            return Err(Error::Shape(
                "dense matrix must be square and non-empty".into(),
            ));
        }
        let scale = rows
            .iter()
            .flatten()
            .fold(T::zero(), |m, v| m.max(v.abs()))
            .max(T::one());
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(8.0)) * scale;
        let mut subdiag = Vec::with_capacity(offdiag_len(p));
        for (i, j) in packed_pairs(p) {
            let (a, b) = (rows[i][j], rows[j][i]);
            if (a - b).abs() > tol {
                return Err(Error::Data(format!(
                    "matrix is not symmetric at ({}, {}): {a} vs {b}",
                    i + 1,
                    j + 1
                )));
            }
            subdiag.push((a + b) * T::lit(0.5));
        }
        let diag = (0..p).map(|i| rows[i][i]).collect();
        Self::from_parts(p, diag, subdiag)
    }

    pub fn from_matrix(m: &Matrix<T>) -> Result<Self> {
        Self::from_dense(&m.to_rows())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Diagonal entries `Sigma_d`.
    pub fn diag(&self) -> &[T] {
        &self.diag
    }

    /// Packed sub-diagonal entries `Sigma_nd`, ordered by [`pack_index`].
    pub fn subdiag(&self) -> &[T] {
        &self.subdiag
    }

    /// Entry `(i, j)`, 0-based, either triangle.
    pub fn get(&self, i: usize, j: usize) -> T {
        use std::cmp::Ordering;
        match i.cmp(&j) {
            Ordering::Equal => self.diag[i],
            Ordering::Greater => self.subdiag[i * (i - 1) / 2 + j],
            Ordering::Less => self.subdiag[j * (j - 1) / 2 + i],
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn to_matrix(&self) -> Matrix<T> {
        Matrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn trace(&self) -> T {
        self.diag.iter().copied().sum()
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            dim: self.dim,
            diag: self.diag.iter().map(|&v| v * s).collect(),
            subdiag: self.subdiag.iter().map(|&v| v * s).collect(),
        }
    }

    /// `t' Sigma t`.
    pub fn quad_form(&self, t: &[T]) -> T {
        debug_assert_eq!(t.len(), self.dim);
        let mut acc = T::zero();
        for (&d, &x) in self.diag.iter().zip(t) {
            acc = acc + d * x * x;
        }
        let two = T::lit(2.0);
        for ((i, j), &v) in packed_pairs(self.dim).zip(&self.subdiag) {
            acc = acc + two * v * t[i] * t[j];
        }
        acc
    }

    /// Absolute PSD tolerance `1e-10 * |trace|`.
    pub fn psd_tolerance(&self) -> T {
        T::psd_rel_tol() * self.trace().abs()
    }

    /// Smallest eigenvalue and whether it clears `-1e-10 * trace`.
    pub fn psd_check(&self) -> Result<PsdStatus<T>> {
        let lambda_min = self.to_matrix().min_eigenvalue()?;
        let tolerance = self.psd_tolerance();
        Ok(PsdStatus {
            is_psd: lambda_min >= -tolerance,
            lambda_min,
            tolerance,
        })
    }

    /// Nearest PSD matrix in Frobenius norm: negative eigenvalues clipped to 0.
    pub fn psd_project(&self) -> Result<Self> {
        let (values, vectors) = self.to_matrix().symmetric_eigen()?;
        let p = self.dim;
        let clipped: Vec<T> = values.iter().map(|&v| v.max(T::zero())).collect();
        let dense = Matrix::from_fn(p, p, |i, j| {
            (0..p)
                .map(|k| vectors[(i, k)] * clipped[k] * vectors[(j, k)])
                .sum()
        });
        Self::from_matrix(&dense)
    }

    /// Writes the dense matrix as headerless row-major CSV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for row in self.to_dense() {
            wtr.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a dense `p`×`p` CSV block (no header, `#` comments allowed).
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .filter(|f| !f.is_empty())
                .map(|f| {
                    f.parse::<f64>()
                        .map(T::lit)
                        .map_err(|e| Error::Parse(format!("bad matrix entry {f:?}: {e}")))
                })
                .collect::<Result<Vec<T>>>()?;
            if !row.is_empty() {
                rows.push(row);
            }
        }
        Self::from_dense(&rows)
    }
}
