//! Dense symmetric matrices.
//!
//! [`SymMatrix`] stores all `n²` entries row-major, but every constructor
//! computes only the upper triangle (`i <= j`) and copies it into the lower
//! one, so `get(i, j)` and `get(j, i)` always return the same bits.
//!
//! Reductions (`trace`, `quadratic_form`, `frobenius_norm`, `matvec`) sum in
//! ascending index order; they are bit-reproducible for identical inputs.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Build from `f(i, j)` evaluated for `i <= j` only.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(n >= 1, "SymMatrix order must be >= 1");
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
    }

    /// Build from a row-major dense buffer. The buffer must already be
    /// exactly symmetric and finite.
    pub fn from_dense(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("SymMatrix order must be >= 1"));
        }
        if data.len() != n * n {
            return Err(Error::dim("dense buffer length", n * n, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense buffer"));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::arg(format!(
                        "buffer is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::dim("row length", n, row.len()));
            }
            data.extend_from_slice(row);
        }
        Self::from_dense(n, data)
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_fn(n, |_, _| 0.0)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn ones(n: usize) -> Self {
        Self::from_fn(n, |_, _| 1.0)
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        Self::from_fn(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 })
    }

    /// Rank-one matrix `v vᵀ`.
    pub fn outer(v: &[f64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j])
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Row-major view of all entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same_order(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::dim("matrix order", self.n, other.n));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_order(other)?;
        Ok(Self::from_fn(self.n, |i, j| f(self.get(i, j), other.get(i, j))))
    }

    /// Entrywise (Schur) product.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `self + c·other`.
    pub fn add_scaled(&self, c: f64, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + c * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_fn(self.n, |i, j| c * self.get(i, j))
    }

    /// `self + c·I`.
    pub fn shift(&self, c: f64) -> Self {
        Self::from_fn(self.n, |i, j| {
            if i == j {
                self.get(i, j) + c
            } else {
                self.get(i, j)
            }
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(self.n, |i, j| f(self.get(i, j)))
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// `yᵀ A y`, summed row by row in index order.
    pub fn quadratic_form(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.n {
            return Err(Error::dim("vector length", self.n, y.len()));
        }
        Ok((0..self.n)
            .map(|i| y[i] * dot(self.row(i), y))
            .sum())
    }

    pub fn matvec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n {
            return Err(Error::dim("vector length", self.n, y.len()));
        }
        Ok((0..self.n).map(|i| dot(self.row(i), y)).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `‖A − B‖_F / ‖B‖_F`.
    pub fn relative_frobenius_error(&self, reference: &Self) -> Result<f64> {
        self.check_same_order(reference)?;
        let diff: f64 = self
            .data
            .iter()
            .zip(&reference.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(diff.sqrt() / reference.frobenius_norm())
    }

    /// Row sums `Σⱼ aᵢⱼ`.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }
}

impl AsRef<SymMatrix> for SymMatrix {
    fn as_ref(&self) -> &SymMatrix {
        self
    }
}

/// Dot product in ascending index order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
