//! Expected and structured NTK matrices of two-layer plain/gated networks.
//!
//! For ReLU the expectations over the first-layer weights have arc-cosine
//! closed forms. With `w ~ N(0, σ_w² I)` and `ρ` the cosine between two
//! inputs:
//!
//! ```text
//! E[φ(wᵀxᵢ)φ(wᵀxⱼ)]   = σ_w² ‖xᵢ‖‖xⱼ‖ / (2π) · (√(1−ρ²) + (π − arccos ρ)ρ)
//! E[φ'(wᵀxᵢ)φ'(wᵀxⱼ)] = (π − arccos ρ) / (2π)
//! ```
//!
//! Under LeCun initialization and a first-order expansion in `ρ` the plain
//! kernel becomes `αXXᵀ + βrrᵀ + γD` and the gated one
//! `α̃(XXᵀ)⊙(XXᵀ) + β̃(rrᵀ)⊙(XXᵀ) + γ̃D²`; see [`StructuredCoefficients`].

use std::f64::consts::PI;

use serde::Serialize;

use crate::data::DataMatrix;
use crate::linalg::SymMatrix;
use crate::{Activation, Arch, Error, ExperimentConfig, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KernelMethod {
    ExpectedClosedForm,
    StructuredApprox,
    EmpiricalMC { num_inits: usize },
    GatedFromPlain,
}

/// The `(n, d, m, arch, activation)` a kernel was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KernelShape {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub arch: Arch,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub mat: SymMatrix,
    pub method: KernelMethod,
    pub shape: KernelShape,
}

impl AsRef<SymMatrix> for KernelMatrix {
    fn as_ref(&self) -> &SymMatrix {
        &self.mat
    }
}

impl KernelMatrix {
    pub fn new(mat: SymMatrix, method: KernelMethod, shape: KernelShape) -> Self {
        Self { mat, method, shape }
    }

    pub fn order(&self) -> usize {
        self.mat.order()
    }
}

fn clamp_rho(rho: f64) -> f64 {
    rho.clamp(-1.0, 1.0)
}

/// `E[φ(wᵀxᵢ)φ(wᵀxⱼ)]` for ReLU and `w ~ N(0, σ_w² I)`.
pub fn arccos_kernel_order1(rho: f64, norm_i: f64, norm_j: f64, sigma_w2: f64) -> f64 {
    let rho = clamp_rho(rho);
    sigma_w2 * norm_i * norm_j / (2.0 * PI)
        * ((1.0 - rho * rho).sqrt() + (PI - rho.acos()) * rho)
}

/// `E[φ'(wᵀxᵢ)φ'(wᵀxⱼ)]` for ReLU; independent of the weight scale.
pub fn arccos_kernel_deriv(rho: f64) -> f64 {
    (PI - clamp_rho(rho).acos()) / (2.0 * PI)
}

/// Angle between rows `i` and `j` as `2·atan2(‖u − v‖, ‖u + v‖)` on the unit
/// vectors, which stays accurate for nearly parallel rows where `acos(ρ)`
/// does not. Zero rows count as orthogonal to everything.
fn pair_angle(x: &DataMatrix, i: usize, j: usize) -> f64 {
    let r = x.norms();
    if i == j && r[i] > 0.0 {
        return 0.0;
    }
    if r[i] == 0.0 || r[j] == 0.0 {
        return PI / 2.0;
    }
    let (a, b) = (x.row_slice(i), x.row_slice(j));
    let (mut diff, mut sum) = (0.0, 0.0);
    for (p, q) in a.iter().zip(b) {
        let (u, v) = (p / r[i], q / r[j]);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

/// `(E[φφ], E[φ'φ'])` for ReLU from the angle between two inputs.
fn relu_moments_from_angle(theta: f64, norm_i: f64, norm_j: f64, sigma_w2: f64) -> (f64, f64) {
    let e = sigma_w2 * norm_i * norm_j / (2.0 * PI) * (theta.sin() + (PI - theta) * theta.cos());
    (e, (PI - theta) / (2.0 * PI))
}

fn require_relu(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.activation != Activation::ReLU {
        return Err(Error::UnsupportedClosedForm(cfg.activation));
    }
    Ok(())
}

fn check_order(x: &DataMatrix, cfg: &ExperimentConfig) -> Result<()> {
    if x.d() != cfg.d {
        return Err(Error::dim("input dimension", cfg.d, x.d()));
    }
    Ok(())
}

fn shape_of(x: &DataMatrix, m: usize, arch: Arch) -> KernelShape {
    KernelShape {
        n: x.n(),
        d: x.d(),
        m,
        arch,
        activation: Activation::ReLU,
    }
}

/// Infinite-width expectation of the plain-network NTK (ReLU only).
pub fn expected_ntk_plain(x: &DataMatrix, cfg: &ExperimentConfig) -> Result<KernelMatrix> {
    require_relu(cfg)?;
    if cfg.arch != Arch::Plain {
        return Err(Error::Precondition(
            "expected_ntk_plain needs a plain config".into(),
        ));
    }
    check_order(x, cfg)?;
    let (g, r, _) = x.gram_and_norms();
    let m = cfg.m as f64;
    let mat = SymMatrix::from_fn(x.n(), |i, j| {
        let (e, ed) = relu_moments_from_angle(pair_angle(x, i, j), r[i], r[j], cfg.sigma_w2);
        m * (e + cfg.sigma_v2 * ed * g.get(i, j))
    });
    Ok(KernelMatrix::new(
        mat,
        KernelMethod::ExpectedClosedForm,
        shape_of(x, cfg.m, Arch::Plain),
    ))
}

/// Infinite-width expectation of the gated-network NTK (ReGLU only).
pub fn expected_ntk_glu(x: &DataMatrix, cfg: &ExperimentConfig) -> Result<KernelMatrix> {
    require_relu(cfg)?;
    if cfg.arch != Arch::Gated {
        return Err(Error::Precondition(
            "expected_ntk_glu needs a gated config".into(),
        ));
    }
    check_order(x, cfg)?;
    let (g, r, _) = x.gram_and_norms();
    let m = cfg.m as f64;
    let mat = SymMatrix::from_fn(x.n(), |i, j| {
        let (e, ed) = relu_moments_from_angle(pair_angle(x, i, j), r[i], r[j], cfg.sigma_w2);
        let ip = g.get(i, j);
        m * ((cfg.sigma_v2 + cfg.sigma_p2) * e * ip + cfg.sigma_v2 * cfg.sigma_p2 * ed * ip * ip)
    });
    Ok(KernelMatrix::new(
        mat,
        KernelMethod::ExpectedClosedForm,
        shape_of(x, cfg.m, Arch::Gated),
    ))
}

/// Coefficients of the structured (first-order in `ρ`) kernels under LeCun
/// initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StructuredCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha_t: f64,
    pub beta_t: f64,
    pub gamma_t: f64,
}

/// `α = 1/4 + m/4d`, `β = m/2πd`, `γ = α − β`, and the gated
/// `α̃ = m/4d² + 1/2d`, `β̃ = 1/2πd + m/2πd²`,
/// `γ̃ = 1/2d − 1/2πd + m/4d² − m/2πd²`.
pub fn coefficients(m: usize, d: usize) -> StructuredCoefficients {
    let (m, d) = (m as f64, d as f64);
    let d2 = d * d;
    StructuredCoefficients {
        alpha: 0.25 + m / (4.0 * d),
        beta: m / (2.0 * PI * d),
        gamma: 0.25 + m / (4.0 * d) - m / (2.0 * PI * d),
        alpha_t: m / (4.0 * d2) + 1.0 / (2.0 * d),
        beta_t: 1.0 / (2.0 * PI * d) + m / (2.0 * PI * d2),
        gamma_t: 1.0 / (2.0 * d) - 1.0 / (2.0 * PI * d) + m / (4.0 * d2) - m / (2.0 * PI * d2),
    }
}

/// `K = αXXᵀ + βrrᵀ + γD`.
pub fn structured_ntk_plain(x: &DataMatrix, m: usize) -> KernelMatrix {
    let c = coefficients(m, x.d());
    let (g, r, dd) = x.gram_and_norms();
    let mat = SymMatrix::from_fn(x.n(), |i, j| {
        let diag = if i == j { c.gamma * dd[i] } else { 0.0 };
        c.alpha * g.get(i, j) + c.beta * r[i] * r[j] + diag
    });
    KernelMatrix::new(
        mat,
        KernelMethod::StructuredApprox,
        shape_of(x, m, Arch::Plain),
    )
}

/// `K̃ = α̃(XXᵀ)⊙(XXᵀ) + β̃(rrᵀ)⊙(XXᵀ) + γ̃D²`.
pub fn structured_ntk_glu(x: &DataMatrix, m: usize) -> KernelMatrix {
    let c = coefficients(m, x.d());
    let (g, r, dd) = x.gram_and_norms();
    let mat = SymMatrix::from_fn(x.n(), |i, j| {
        let ip = g.get(i, j);
        let diag = if i == j { c.gamma_t * dd[i] * dd[i] } else { 0.0 };
        c.alpha_t * ip * ip + c.beta_t * r[i] * r[j] * ip + diag
    });
    KernelMatrix::new(
        mat,
        KernelMethod::StructuredApprox,
        shape_of(x, m, Arch::Gated),
    )
}

/// Gate a plain kernel: `K ⊙ (XXᵀ/d)`.
pub fn hadamard_gate(k: &KernelMatrix, x: &DataMatrix) -> Result<KernelMatrix> {
    let d = x.d() as f64;
    let mask = x.gram().scale(1.0 / d);
    let mat = k.mat.hadamard(&mask)?;
    Ok(KernelMatrix::new(
        mat,
        KernelMethod::GatedFromPlain,
        KernelShape {
            arch: Arch::Gated,
            ..k.shape
        },
    ))
}

/// Gradient cosines `Kᵢⱼ / √(KᵢᵢKⱼⱼ)`, with an exact unit diagonal.
pub fn gradient_angle_matrix(k: &KernelMatrix) -> Result<SymMatrix> {
    let diag = k.mat.diagonal();
    if let Some((index, &value)) = diag.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::DegenerateKernel { index, value });
    }
    let s: Vec<f64> = diag.iter().map(|v| v.sqrt()).collect();
    Ok(SymMatrix::from_fn(k.order(), |i, j| {
        if i == j {
            1.0
        } else {
            k.mat.get(i, j) / (s[i] * s[j])
        }
    }))
}

/// Input cosines `cos αᵢⱼ = xᵢᵀxⱼ / (‖xᵢ‖‖xⱼ‖)`, unit diagonal.
pub fn data_cosine_matrix(x: &DataMatrix) -> SymMatrix {
    SymMatrix::from_fn(x.n(), |i, j| if i == j { 1.0 } else { x.cosine(i, j) })
}
