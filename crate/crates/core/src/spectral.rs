//! Eigenvalues, condition numbers and random-matrix predictions.
//!
//! The dense symmetric eigensolver is `faer` built without its parallel
//! backend, so every decomposition is single-threaded and reproducible.
//! Independent matrices can be decomposed concurrently by the caller.

use std::f64::consts::PI;

use faer::{Mat, Side};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::sample_gaussian_data;
use crate::linalg::{norm, SymMatrix};
use crate::rng::{standard_normals, stream};
use crate::{Error, Result};

pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `None` when `λmin ≤ solver_tol·|λmax|`.
    pub kappa: Option<f64>,
    pub solver_tol: f64,
}

impl SpectralSummary {
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>, solver_tol: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::arg("empty spectrum"));
        }
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("eigenvalues"));
        }
        eigenvalues.sort_by(f64::total_cmp);
        let lambda_min = eigenvalues[0];
        let lambda_max = eigenvalues[eigenvalues.len() - 1];
        let mut s = Self {
            eigenvalues,
            lambda_min,
            lambda_max,
            kappa: None,
            solver_tol,
        };
        s.kappa = condition_number(&s);
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// Eigenvalues together with unit eigenvectors stored as the columns of
/// `vectors`, in the same ascending order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub summary: SpectralSummary,
    pub vectors: Array2<f64>,
}

impl EigenDecomposition {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k).to_vec()
    }
}

fn to_faer(a: &SymMatrix) -> Result<Mat<f64>> {
    if !a.is_finite() {
        return Err(Error::NonFinite("matrix passed to the eigensolver"));
    }
    let n = a.order();
    Ok(Mat::from_fn(n, n, |i, j| a.get(i, j)))
}

pub fn eig_sym(a: &SymMatrix) -> Result<SpectralSummary> {
    let m = to_faer(a)?;
    let vals = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    SpectralSummary::from_eigenvalues(vals, DEFAULT_SOLVER_TOL)
}

/// Full decomposition. Each pair satisfies `‖Av − λv‖ ≤ 1e−8·‖A‖_F`.
pub fn eig_sym_vectors(a: &SymMatrix) -> Result<EigenDecomposition> {
    let m = to_faer(a)?;
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let n = a.order();
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| s[p].total_cmp(&s[q]));
    let vals: Vec<f64> = order.iter().map(|&k| s[k]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(i, k)| u[(i, order[k])]);
    Ok(EigenDecomposition {
        summary: SpectralSummary::from_eigenvalues(vals, DEFAULT_SOLVER_TOL)?,
        vectors,
    })
}

pub fn condition_number(s: &SpectralSummary) -> Option<f64> {
    (s.lambda_min > s.solver_tol * s.lambda_max.abs()).then(|| s.lambda_max / s.lambda_min)
}

/// Marchenko–Pastur law with shape `c = n/d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpParams {
    pub c: f64,
    pub lower: f64,
    pub upper: f64,
}

impl MpParams {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::arg(format!("MP shape must be positive, got {c}")));
        }
        let (lower, upper) = mp_edges(c);
        Ok(Self { c, lower, upper })
    }

    /// Point mass at zero, `1 − 1/c` when `c > 1`.
    pub fn atom_at_zero(&self) -> f64 {
        (1.0 - 1.0 / self.c).max(0.0)
    }

    pub fn density(&self, x: f64) -> f64 {
        mp_density(x, self.c)
    }
}

pub fn mp_edges(c: f64) -> (f64, f64) {
    let r = c.sqrt();
    ((1.0 - r).powi(2), (1.0 + r).powi(2))
}

/// Absolutely continuous part of the MP density; zero outside the bulk.
pub fn mp_density(x: f64, c: f64) -> f64 {
    let (lo, hi) = mp_edges(c);
    if x <= lo || x >= hi || x <= 0.0 {
        return 0.0;
    }
    ((hi - x) * (x - lo)).sqrt() / (2.0 * PI * c * x)
}

/// Inverse Cauchy transform of the MP law, `G⁻¹(y)`.
pub fn mp_inverse_cauchy(y: f64, c: f64) -> f64 {
    ((c - 1.0) * y - 1.0) / (y * (c * y - 1.0))
}

/// Top eigenvalue of an MP bulk with an additive rank-one spike of size
/// `theta`: `G⁻¹(1/θ)` above the transition, the bulk edge otherwise.
pub fn bbp_lambda_max(c: f64, theta: f64) -> f64 {
    let y = 1.0 / theta;
    let edge = (1.0 + c.sqrt()).powi(2);
    if y < 1.0 / (c + c.sqrt()) {
        mp_inverse_cauchy(y, c)
    } else {
        edge
    }
}

/// `(λmax, λmin)` of `W ⊙ W` under the linearization `W⊙W ≈ 11ᵀ/d + I`.
pub fn karoui_hadamard_prediction(n: usize, d: usize) -> Result<(f64, f64)> {
    check_positive(n, d)?;
    Ok((1.0 + n as f64 / d as f64, 1.0))
}

/// `(λmin, λmax)` of the MP law with shape `2n/d²`, the limit for
/// `(XXᵀ ⊙ XXᵀ)/d²`.
pub fn hadamard_lsd_edges(n: usize, d: usize) -> Result<(f64, f64)> {
    check_positive(n, d)?;
    let r = (2.0 * n as f64).sqrt() / d as f64;
    Ok(((1.0 - r).max(0.0).powi(2), (1.0 + r).powi(2)))
}

fn check_positive(n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::arg(format!("n and d must be >= 1, got n={n}, d={d}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryEstimate {
    pub m: usize,
    pub d: usize,
    pub n: usize,
    pub s: f64,
    pub s_t: f64,
    pub lambda_max_plain: f64,
    pub lambda_max_glu_lower: f64,
    pub lambda_max_glu_upper: f64,
    pub lambda_min_plain: f64,
    pub lambda_min_glu: f64,
    /// Width-proportional parts of the two `λmin` estimates (the `d`-free
    /// terms), reported next to the full `Θ(m + d)` values.
    pub lambda_min_plain_width_term: f64,
    pub lambda_min_glu_width_term: f64,
    pub kappa_plain: f64,
    /// Uses the lower bound on the gated `λmax`.
    pub kappa_glu: f64,
}

pub fn theory_estimates(m: usize, d: usize, n: usize) -> Result<TheoryEstimate> {
    if m == 0 || d == 0 || n == 0 {
        return Err(Error::arg(format!("m, d, n must be >= 1, got ({m}, {d}, {n})")));
    }
    let (mf, df, nf) = (m as f64, d as f64, n as f64);
    let tau = 2.0 * PI;
    let s = (1.0 - (nf / df).sqrt()).max(0.0);
    let s_t = (1.0 - (2.0 * nf).sqrt() / df).max(0.0);

    let lambda_max_plain = mf / tau * nf + df / 2.0 + (PI - 1.0) * mf / tau;
    let lambda_max_glu_lower =
        (mf / (4.0 * df) + 0.5) * nf + mf / 2.0 - mf / tau + df - df / tau;
    let lambda_max_glu_upper =
        (mf / (4.0 * df) + mf / (tau * df) + 0.5 + 1.0 / tau) * nf + mf / 2.0 + df;
    let lambda_min_plain = (mf + df) / 4.0 * (s * s + 1.0) - mf / tau;
    let lambda_min_glu =
        (mf + 2.0 * df) / 4.0 * (s_t * s_t + 1.0) + (mf + df) / tau * (s * s - 1.0);
    Ok(TheoryEstimate {
        m,
        d,
        n,
        s,
        s_t,
        lambda_max_plain,
        lambda_max_glu_lower,
        lambda_max_glu_upper,
        lambda_min_plain,
        lambda_min_glu,
        lambda_min_plain_width_term: mf * ((s * s + 1.0) / 4.0 - 1.0 / tau),
        lambda_min_glu_width_term: mf * ((s_t * s_t + 1.0) / 4.0 + (s * s - 1.0) / tau),
        kappa_plain: lambda_max_plain / lambda_min_plain,
        kappa_glu: lambda_max_glu_lower / lambda_min_glu,
    })
}

fn weyl_tol(a: &SymMatrix, b: &SymMatrix) -> f64 {
    let n = a.order() as f64;
    1e-12 * n.max(1.0) * (a.frobenius_norm() + b.frobenius_norm()).max(1.0)
}

fn weyl_pair(a: &SymMatrix, b: &SymMatrix) -> Result<(SpectralSummary, SpectralSummary, SpectralSummary)> {
    if a.order() != b.order() {
        return Err(Error::dim("matrix order", a.order(), b.order()));
    }
    Ok((eig_sym(&a.add(b)?)?, eig_sym(a)?, eig_sym(b)?))
}

/// `λₖ(A+B) − λₖ(A) ∈ [λmin(B) − tol, λmax(B) + tol]`, with `k` indexing
/// the ascending spectrum and `tol` scaled to the eigensolver's backward
/// error.
pub fn weyl_check(a: &SymMatrix, b: &SymMatrix, k: usize) -> Result<bool> {
    if k >= a.order() {
        return Err(Error::arg(format!("index {k} out of range for order {}", a.order())));
    }
    let (ab, sa, sb) = weyl_pair(a, b)?;
    let tol = weyl_tol(a, b);
    let diff = ab.eigenvalues[k] - sa.eigenvalues[k];
    Ok(diff >= sb.lambda_min - tol && diff <= sb.lambda_max + tol)
}

/// [`weyl_check`] for every `k`, sharing the three decompositions.
pub fn weyl_check_all(a: &SymMatrix, b: &SymMatrix) -> Result<bool> {
    let (ab, sa, sb) = weyl_pair(a, b)?;
    let tol = weyl_tol(a, b);
    Ok(ab
        .eigenvalues
        .iter()
        .zip(&sa.eigenvalues)
        .all(|(x, y)| {
            let diff = x - y;
            diff >= sb.lambda_min - tol && diff <= sb.lambda_max + tol
        }))
}

/// `(minᵢ Σⱼ aᵢⱼ, maxᵢ Σⱼ aᵢⱼ)`; for entrywise nonnegative `A` these
/// bracket `λmax(A)`.
pub fn row_sum_bounds(a: &SymMatrix) -> Result<(f64, f64)> {
    if let Some(pos) = a.as_slice().iter().position(|&v| v < 0.0) {
        let n = a.order();
        return Err(Error::Precondition(format!(
            "row-sum bound needs nonnegative entries, found {} at ({}, {})",
            a.as_slice()[pos],
            pos / n,
            pos % n
        )));
    }
    let sums = a.row_sums();
    let lo = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// `XXᵀ/d` for `X ∈ ℝ^{n×d}` with standard Gaussian entries.
pub fn sample_wishart(n: usize, d: usize, seed: u64) -> Result<SymMatrix> {
    let x = sample_gaussian_data(n, d, seed)?;
    Ok(x.gram().scale(1.0 / d as f64))
}

/// `XXᵀ/d + θuuᵀ` with `u` a uniformly random unit vector.
pub fn sample_spiked_wishart(n: usize, d: usize, theta: f64, seed: u64) -> Result<SymMatrix> {
    let w = sample_wishart(n, d, seed)?;
    let mut rng = stream(seed, "spike")?;
    let mut u = standard_normals(&mut rng, n);
    let len = norm(&u);
    u.iter_mut().for_each(|v| *v /= len);
    w.add_scaled(theta, &SymMatrix::outer(&u))
}

/// `(XXᵀ ⊙ XXᵀ)/d²`, i.e. `W ⊙ W` for the Wishart `W = XXᵀ/d`.
pub fn sample_squared_wishart(n: usize, d: usize, seed: u64) -> Result<SymMatrix> {
    let w = sample_wishart(n, d, seed)?;
    w.hadamard(&w)
}
