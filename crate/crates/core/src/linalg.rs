//! Symmetric matrix storage and the dense kernels built on faer.

use std::sync::Once;

use faer::{Mat, Par, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static SEQUENTIAL: Once = Once::new();

/// Dense kernels run single-threaded so that results do not depend on the
/// thread count. Parallelism is applied over independent work items instead.
pub(crate) fn ensure_sequential_kernels() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(Par::Seq));
}

/// Symmetric `n x n` matrix stored as the packed upper triangle,
/// diagonal included, row by row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * (n + 1) / 2],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                data.push(f(i, j));
            }
        }
        SymMatrix { n, data }
    }

    /// Builds from packed upper-triangle values (diagonal included).
    pub fn from_packed(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * (n + 1) / 2 {
            return Err(Error::invalid(format!(
                "packed length {} does not match dimension {n}",
                data.len()
            )));
        }
        Ok(SymMatrix { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        a * (2 * self.n - a + 1) / 2 + (b - a)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index(i, j);
        self.data[k] = v;
    }

    /// Packed upper triangle of row `i`, columns `i..n`.
    pub fn upper_row(&self, i: usize) -> &[f64] {
        let start = self.index(i, i);
        &self.data[start..start + (self.n - i)]
    }

    pub fn upper_row_mut(&mut self, i: usize) -> &mut [f64] {
        let start = self.index(i, i);
        let n = self.n;
        &mut self.data[start..start + (n - i)]
    }

    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    pub fn packed_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Visits every strictly-upper entry as `(i, j, value)`.
    pub fn for_each_offdiag(&self, mut f: impl FnMut(usize, usize, f64)) {
        for i in 0..self.n {
            let row = self.upper_row(i);
            for (d, &v) in row.iter().enumerate().skip(1) {
                f(i, i + d, v);
            }
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        Mat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn from_dense(m: &Mat<f64>) -> Self {
        SymMatrix::from_fn(m.nrows(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
    }
}

/// How a sampling factor was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FactorKind {
    Cholesky,
    /// Symmetric eigendecomposition; `clipped` eigenvalues were raised to the floor.
    Eigen { clipped: usize },
}

/// A matrix `F` with `F F^T` equal to a covariance matrix.
pub struct CovFactor {
    pub(crate) mat: Mat<f64>,
    pub kind: FactorKind,
}

impl CovFactor {
    /// Cholesky when the matrix is numerically positive definite, otherwise a
    /// symmetric eigendecomposition with eigenvalues clipped from below at
    /// `1e-12 * lambda_max`.
    pub fn new(cov: &SymMatrix) -> Result<Self> {
        ensure_sequential_kernels();
        let dense = cov.to_dense();
        if let Ok(llt) = dense.llt(Side::Lower) {
            return Ok(CovFactor {
                mat: llt.L().to_owned(),
                kind: FactorKind::Cholesky,
            });
        }
        let evd = dense
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Internal(format!("eigendecomposition failed: {e:?}")))?;
        let s = evd.S().column_vector();
        let n = cov.dim();
        let lmax = (0..n).map(|k| s[k]).fold(0.0f64, f64::max);
        let floor = 1e-12 * lmax;
        let mut clipped = 0;
        let roots: Vec<f64> = (0..n)
            .map(|k| {
                if s[k] < floor {
                    clipped += 1;
                    floor.sqrt()
                } else {
                    s[k].sqrt()
                }
            })
            .collect();
        let u = evd.U();
        let mat = Mat::from_fn(n, n, |i, j| u[(i, j)] * roots[j]);
        Ok(CovFactor {
            mat,
            kind: FactorKind::Eigen { clipped },
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// Returns `F Z` for a `dim x k` matrix `Z`.
    pub fn apply(&self, z: &Mat<f64>) -> Mat<f64> {
        ensure_sequential_kernels();
        &self.mat * z
    }
}

/// Returns true when the smallest eigenvalue is at least `-tol`, tested by a
/// Cholesky factorization of the shifted matrix.
pub fn is_psd_within(cov: &SymMatrix, tol: f64) -> bool {
    ensure_sequential_kernels();
    let mut dense = cov.to_dense();
    for i in 0..cov.dim() {
        dense[(i, i)] += tol;
    }
    dense.llt(Side::Lower).is_ok()
}

pub fn is_positive_definite(cov: &SymMatrix) -> bool {
    ensure_sequential_kernels();
    cov.to_dense().llt(Side::Lower).is_ok()
}

/// Eigenvalues (ascending) and eigenvectors of a symmetric matrix.
pub fn symmetric_eigen(cov: &SymMatrix) -> Result<(Vec<f64>, Mat<f64>)> {
    ensure_sequential_kernels();
    let evd = cov
        .to_dense()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Internal(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let vals = (0..cov.dim()).map(|k| s[k]).collect();
    Ok((vals, evd.U().to_owned()))
}

/// Dot product with four independent accumulators; the summation order is
/// fixed so results are reproducible.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
