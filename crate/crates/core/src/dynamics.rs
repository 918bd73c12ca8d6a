//! Kernel-regime gradient descent and finite-width training.
//!
//! In the lazy regime the residual obeys `e_{t+1} = (I − ηK)e_t`. All powers
//! of `I − ηK` are taken through one eigendecomposition, so the cost per
//! queried step is `O(n)` (losses) or `O(n²)` (residual vectors).
//!
//! Step-size convention: the kernel recursions here use `η` directly. The
//! finite-width trainer minimizes `‖z − y‖²/2n` with step `η`, whose
//! linearization is the kernel recursion with step `η/n`.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, Dataset};
use crate::empirical::{forward_batch, init_params, weighted_output_gradient};
use crate::linalg::SymMatrix;
use crate::spectral::{eig_sym_vectors, EigenDecomposition};
use crate::{Arch, Error, ExperimentConfig, Result};

/// Losses above this are treated as divergence by the trainer.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Relative tolerance under which two losses count as tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectorySource {
    ExpectedClosedForm,
    FiniteWidthGD,
    LinearizedMC,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTrajectory {
    pub losses_plain: Vec<f64>,
    pub losses_gated: Vec<f64>,
    pub eta: f64,
    pub crossing_index: Option<usize>,
    pub source: TrajectorySource,
}

impl LossTrajectory {
    pub fn new(
        losses_plain: Vec<f64>,
        losses_gated: Vec<f64>,
        eta: f64,
        source: TrajectorySource,
    ) -> Result<Self> {
        if losses_plain.len() != losses_gated.len() {
            return Err(Error::dim("trajectory length", losses_plain.len(), losses_gated.len()));
        }
        if losses_plain.iter().chain(&losses_gated).any(|l| !(*l >= 0.0)) {
            return Err(Error::arg("losses must be nonnegative and finite"));
        }
        let crossing_index = first_sign_flip(&losses_plain, &losses_gated);
        Ok(Self {
            losses_plain,
            losses_gated,
            eta,
            crossing_index,
            source,
        })
    }

    pub fn steps(&self) -> usize {
        self.losses_plain.len().saturating_sub(1)
    }
}

/// Spectral coordinates of a kernel and a target.
#[derive(Debug, Clone)]
pub struct ModeDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns.
    pub vectors: Array2<f64>,
    /// `βᵢ = Yᵀvᵢ`.
    pub betas: Vec<f64>,
}

impl ModeDecomposition {
    pub fn new(k: impl AsRef<SymMatrix>, y: &[f64]) -> Result<Self> {
        let k = k.as_ref();
        check_len(k, y)?;
        Ok(Self::from_eigen(eig_sym_vectors(k)?, y))
    }

    pub fn from_eigen(e: EigenDecomposition, y: &[f64]) -> Self {
        let betas = project(&e.vectors, y);
        Self {
            eigenvalues: e.summary.eigenvalues,
            vectors: e.vectors,
            betas,
        }
    }

    pub fn order(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `⟨u, vᵢ⟩` for every mode.
    pub fn coefficients(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.order() {
            return Err(Error::dim("vector length", self.order(), u.len()));
        }
        Ok(project(&self.vectors, u))
    }

    /// `Σᵢ cᵢ vᵢ`.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.order();
        (0..n)
            .map(|r| (0..n).map(|k| coeffs[k] * self.vectors[[r, k]]).sum())
            .collect()
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().expect("nonempty")
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Expected loss at step `t`, see [`expected_loss_curve`].
    pub fn expected_loss(&self, sigma_v2: f64, eta: f64, t: usize) -> f64 {
        let n = self.order() as f64;
        self.eigenvalues
            .iter()
            .zip(&self.betas)
            .map(|(&l, &b)| (sigma_v2 * l + b * b) * decay(eta, l, 2 * t))
            .sum::<f64>()
            / (2.0 * n)
    }

    pub fn expected_loss_curve(&self, sigma_v2: f64, eta: f64, steps: usize) -> Vec<f64> {
        (0..=steps).map(|t| self.expected_loss(sigma_v2, eta, t)).collect()
    }

    /// First-order expected loss decrease at step `t`.
    pub fn expected_loss_decrement(&self, sigma_v2: f64, eta: f64, t: usize) -> f64 {
        let n = self.order() as f64;
        eta / n
            * self
                .eigenvalues
                .iter()
                .zip(&self.betas)
                .map(|(&l, &b)| (sigma_v2 * l * l + b * b * l) * decay(eta, l, 2 * t))
                .sum::<f64>()
    }
}

fn project(vectors: &Array2<f64>, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|k| (0..n).map(|r| vectors[[r, k]] * u[r]).sum())
        .collect()
}

fn check_len(k: &SymMatrix, v: &[f64]) -> Result<()> {
    if v.len() != k.order() {
        return Err(Error::dim("vector length", k.order(), v.len()));
    }
    Ok(())
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::arg(format!("eta must be positive, got {eta}")));
    }
    Ok(())
}

/// `(1 − ηλ)^p`.
#[inline]
fn decay(eta: f64, lambda: f64, p: usize) -> f64 {
    let base = 1.0 - eta * lambda;
    match i32::try_from(p) {
        Ok(p) => base.powi(p),
        Err(_) => base.powf(p as f64),
    }
}

/// `(1 − ηλᵢ)ᵗ·cᵢ` for each mode.
pub fn eigenmode_decay(decomp: &ModeDecomposition, e0_coeffs: &[f64], eta: f64, t: usize) -> Vec<f64> {
    decomp
        .eigenvalues
        .iter()
        .zip(e0_coeffs)
        .map(|(&l, &c)| c * decay(eta, l, t))
        .collect()
}

/// `e_t = (I − ηK)ᵗe₀` for `t = 0..=steps`.
pub fn evolve_residual(
    k: impl AsRef<SymMatrix>,
    e0: &[f64],
    eta: f64,
    steps: usize,
) -> Result<Vec<Vec<f64>>> {
    let k = k.as_ref();
    check_len(k, e0)?;
    check_eta(eta)?;
    let decomp = ModeDecomposition::new(k, e0)?;
    let c0 = decomp.betas.clone();
    Ok((0..=steps)
        .map(|t| decomp.reconstruct(&eigenmode_decay(&decomp, &c0, eta, t)))
        .collect())
}

/// `E[L_t] = (1/2n)·Σᵢ(σ_v²λᵢ + βᵢ²)(1 − ηλᵢ)^{2t}` for `t = 0..=steps`.
pub fn expected_loss_curve(
    k: impl AsRef<SymMatrix>,
    y: &[f64],
    sigma_v2: f64,
    eta: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    check_eta(eta)?;
    Ok(ModeDecomposition::new(k, y)?.expected_loss_curve(sigma_v2, eta, steps))
}

/// `(η/n)·Σᵢ(σ_v²λᵢ² + βᵢ²λᵢ)(1 − ηλᵢ)^{2t}`, the leading term of
/// `E[L_t] − E[L_{t+1}]`.
pub fn expected_loss_decrement(
    k: impl AsRef<SymMatrix>,
    y: &[f64],
    sigma_v2: f64,
    eta: f64,
    t: usize,
) -> Result<f64> {
    check_eta(eta)?;
    Ok(ModeDecomposition::new(k, y)?.expected_loss_decrement(sigma_v2, eta, t))
}

/// Width-proportional parts of the Gaussian-data expectations of
/// `Tr(K − K̃)` and `Tr(K² − K̃²)`, keeping only the `m`-terms of the
/// diagonals. The full structured kernels add `−n(d/2 + 2)` to the trace
/// gap, which dominates unless `m ≫ d²`.
pub fn early_stage_discriminant(m: usize, d: usize, n: usize) -> Result<(f64, f64)> {
    if m == 0 || d == 0 || n == 0 {
        return Err(Error::arg(format!("m, d, n must be >= 1, got ({m}, {d}, {n})")));
    }
    let (mf, df, nf) = (m as f64, d as f64, n as f64);
    let trace_gap = -nf * mf / df;
    let pi2 = PI * PI;
    let bracket = (nf - 1.0)
        * ((df * df - 3.0 * df - 6.0) / (4.0 * df)
            + (df.powi(3) - df * df - 4.0 * df - 4.0) / (pi2 * df))
        - 10.0 * df * df
        - 44.0 * df
        - 48.0;
    let trace_sq_gap = nf * mf * mf / (4.0 * df.powi(3)) * bracket;
    Ok((trace_gap, trace_sq_gap))
}

/// `E‖x‖ᵏ` for `x ~ N(0, I_d)` and even `k`: `d(d+2)…(d+k−2)`.
pub fn gaussian_norm_moment(d: usize, k: usize) -> Result<f64> {
    if k % 2 == 1 {
        return Err(Error::arg(format!("only even moments are supported, got k={k}")));
    }
    Ok((0..k / 2).map(|j| (d + 2 * j) as f64).product())
}

/// Single-mode late-stage crossing threshold
/// `log(M̃/M) / (2·log((1 − ηλₙ)/(1 − ηλ̃ₙ)))` with `M = σ_v²λ + β²`.
pub fn crossing_step_estimate(
    lam_n: f64,
    lam_n_t: f64,
    beta_n: f64,
    beta_n_t: f64,
    sigma_v2: f64,
    eta: f64,
) -> Result<f64> {
    let (a, b) = (eta * lam_n, eta * lam_n_t);
    if !(0.0 < a && a < b && b < 1.0) {
        return Err(Error::Regime(format!(
            "late-stage estimate needs 0 < ηλₙ < ηλ̃ₙ < 1, got ηλₙ = {a}, ηλ̃ₙ = {b}"
        )));
    }
    let mass = sigma_v2 * lam_n + beta_n * beta_n;
    let mass_t = sigma_v2 * lam_n_t + beta_n_t * beta_n_t;
    if !(mass > 0.0 && mass_t > 0.0) {
        return Err(Error::Regime("smallest modes carry no loss mass".into()));
    }
    Ok((mass_t / mass).ln() / (2.0 * ((1.0 - a) / (1.0 - b)).ln()))
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOL * a.abs().max(b.abs())
}

/// First index where `plain − gated` takes the opposite sign to its first
/// non-tied value. Tied entries are skipped.
pub fn first_sign_flip(plain: &[f64], gated: &[f64]) -> Option<usize> {
    let mut initial: Option<bool> = None;
    for (k, (&a, &b)) in plain.iter().zip(gated).enumerate() {
        if tied(a, b) {
            continue;
        }
        let positive = a > b;
        match initial {
            None => initial = Some(positive),
            Some(s) if s != positive => return Some(k),
            Some(_) => {}
        }
    }
    None
}

pub fn detect_crossing(traj: &LossTrajectory) -> Option<usize> {
    first_sign_flip(&traj.losses_plain, &traj.losses_gated)
}

/// Principal axis of a 2×2 kernel's level-set ellipse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseAxis {
    pub direction: [f64; 2],
    pub eigenvalue: f64,
    /// Proportional to `1/λ`; `inf` for a null direction.
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Toy2Trajectories {
    pub plain: Vec<[f64; 2]>,
    pub gated: Vec<[f64; 2]>,
    pub axes_plain: [EllipseAxis; 2],
    pub axes_gated: [EllipseAxis; 2],
}

fn axes_2x2(k: &SymMatrix) -> Result<[EllipseAxis; 2]> {
    let e = eig_sym_vectors(k)?;
    let scale = e.summary.lambda_max.abs().max(1.0);
    if e.summary.lambda_min < -1e-12 * scale {
        return Err(Error::Precondition(format!(
            "toy kernel must be PSD, smallest eigenvalue {}",
            e.summary.lambda_min
        )));
    }
    let axis = |i: usize| {
        let l = e.summary.eigenvalues[i];
        EllipseAxis {
            direction: [e.vectors[[0, i]], e.vectors[[1, i]]],
            eigenvalue: l,
            length: if l > 0.0 { 1.0 / l } else { f64::INFINITY },
        }
    };
    Ok([axis(0), axis(1)])
}

fn toy2_run(k: &SymMatrix, y: [f64; 2], z0: [f64; 2], eta: f64, steps: usize) -> Vec<[f64; 2]> {
    let mut z = z0;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(z);
    for _ in 0..steps {
        let e = [z[0] - y[0], z[1] - y[1]];
        z = [
            z[0] - eta * (k.get(0, 0) * e[0] + k.get(0, 1) * e[1]),
            z[1] - eta * (k.get(1, 0) * e[0] + k.get(1, 1) * e[1]),
        ];
        out.push(z);
    }
    out
}

/// Two-sample output trajectories `z_{t+1} = z_t − ηK(z_t − y)`.
pub fn toy2_trajectories(
    k2_plain: &SymMatrix,
    k2_gated: &SymMatrix,
    y: [f64; 2],
    z0: [f64; 2],
    eta: f64,
    steps: usize,
) -> Result<Toy2Trajectories> {
    for k in [k2_plain, k2_gated] {
        if k.order() != 2 {
            return Err(Error::dim("toy kernel order", 2, k.order()));
        }
    }
    check_eta(eta)?;
    Ok(Toy2Trajectories {
        plain: toy2_run(k2_plain, y, z0, eta, steps),
        gated: toy2_run(k2_gated, y, z0, eta, steps),
        axes_plain: axes_2x2(k2_plain)?,
        axes_gated: axes_2x2(k2_gated)?,
    })
}

/// One architecture's full-batch gradient descent record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    /// Training loss at steps `0..=steps`.
    pub losses: Vec<f64>,
    /// `(step, eval loss)` every `eval_every` steps, when an eval set is given.
    pub eval_losses: Vec<(usize, f64)>,
}

fn mse(outputs: &Array1<f64>, y: &[f64]) -> f64 {
    let n = y.len() as f64;
    outputs.iter().zip(y).map(|(z, t)| (z - t) * (z - t)).sum::<f64>() / (2.0 * n)
}

/// Gradient descent on `‖z(X) − Y‖²/2n` for `cfg.arch`, starting from
/// `init_params(cfg, cfg.master_seed)`.
pub fn train_single(
    cfg: &ExperimentConfig,
    x: &DataMatrix,
    y: &[f64],
    eta: f64,
    steps: usize,
    eval: Option<(&DataMatrix, &[f64])>,
    eval_every: usize,
) -> Result<TrainRun> {
    cfg.validate()?;
    check_eta(eta)?;
    if y.len() != x.n() {
        return Err(Error::dim("target length", x.n(), y.len()));
    }
    if x.d() != cfg.d {
        return Err(Error::dim("input dimension", cfg.d, x.d()));
    }
    if let Some((ex, ey)) = eval {
        if ex.d() != cfg.d || ey.len() != ex.n() {
            return Err(Error::arg("eval set shape does not match the training set"));
        }
        if eval_every == 0 {
            return Err(Error::arg("eval_every must be >= 1"));
        }
    }
    let n = x.n() as f64;
    let mut params = init_params(cfg, cfg.master_seed)?;
    let mut losses = Vec::with_capacity(steps + 1);
    let mut eval_losses = Vec::new();
    for step in 0..=steps {
        let fwd = forward_batch(&params, x, cfg.activation);
        let loss = mse(&fwd.outputs, y);
        if !loss.is_finite() || loss > DIVERGENCE_THRESHOLD {
            return Err(Error::Divergence { step, loss });
        }
        losses.push(loss);
        if let Some((ex, ey)) = eval {
            if step % eval_every == 0 {
                let z = forward_batch(&params, ex, cfg.activation).outputs;
                eval_losses.push((step, mse(&z, ey)));
            }
        }
        if step == steps {
            break;
        }
        let coeffs: Array1<f64> = fwd.outputs.iter().zip(y).map(|(z, t)| (z - t) / n).collect();
        let grad = weighted_output_gradient(&params, x, &fwd, &coeffs, cfg.activation);
        params.descend(eta, &grad);
    }
    Ok(TrainRun { losses, eval_losses })
}

/// Trains the plain and the gated network from shared `W`, `V` draws.
pub fn train_finite_width(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    eta: f64,
    steps: usize,
) -> Result<LossTrajectory> {
    let run = |arch: Arch| {
        let c = cfg.clone().with_arch(arch);
        train_single(&c, &dataset.data, &dataset.targets, eta, steps, None, 1)
    };
    let (plain, gated) = rayon::join(|| run(Arch::Plain), || run(Arch::Gated));
    LossTrajectory::new(plain?.losses, gated?.losses, eta, TrajectorySource::FiniteWidthGD)
}
