//! Finite-width two-layer networks and Monte Carlo NTK estimates.
//!
//! `z(x) = V φ(Wx)` (plain) or `z(x) = V[(Px) ⊙ φ(Wx)]` (gated), with
//! `W, P ∈ ℝ^{m×d}` and `V ∈ ℝ^{1×m}`. Parameter gradients are written out
//! analytically; a flat gradient lists the `V` block, then `P` (gated only),
//! then `W`, each row-major.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use statrs::function::erf::erf;

use crate::data::DataMatrix;
use crate::kernel::{KernelMatrix, KernelMethod, KernelShape};
use crate::linalg::{dot, SymMatrix};
use crate::rng::{derive_stream_seed, standard_normals, stream};
use crate::{Activation, Arch, Error, ExperimentConfig, Result};

/// Gradient stacks larger than this many entries are not materialized;
/// kernel entries are then formed from per-sample gradients on the fly.
pub const MAX_JACOBIAN_ENTRIES: usize = 20_000_000;

/// `(φ(x), φ'(x))`. ReLU uses `φ'(0) = 0`; GELU is the exact erf form.
pub fn activation_eval(kind: Activation, x: f64) -> (f64, f64) {
    match kind {
        Activation::ReLU => {
            if x > 0.0 {
                (x, 1.0)
            } else {
                (0.0, 0.0)
            }
        }
        Activation::GELU => {
            let cdf = 0.5 * (1.0 + erf(x * FRAC_1_SQRT_2));
            let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
            (x * cdf, cdf + x * pdf)
        }
        Activation::SiLU => {
            let s = 1.0 / (1.0 + (-x).exp());
            (x * s, s + x * s * (1.0 - s))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub w: Array2<f64>,
    /// Gate weights; `None` for the plain architecture.
    pub p: Option<Array2<f64>>,
    pub v: Array1<f64>,
}

impl Params {
    pub fn width(&self) -> usize {
        self.w.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn arch(&self) -> Arch {
        if self.p.is_some() {
            Arch::Gated
        } else {
            Arch::Plain
        }
    }

    pub fn num_params(&self) -> usize {
        let (m, d) = self.w.dim();
        m + m * d * if self.p.is_some() { 2 } else { 1 }
    }

    fn check(&self, arch: Arch, d: usize) -> Result<()> {
        if self.arch() != arch {
            return Err(Error::Precondition(format!(
                "parameters are {} but {arch} was requested",
                self.arch()
            )));
        }
        if d != self.input_dim() {
            return Err(Error::dim("input length", self.input_dim(), d));
        }
        Ok(())
    }

    /// `self -= step · grad`.
    pub fn descend(&mut self, step: f64, grad: &Params) {
        self.w.scaled_add(-step, &grad.w);
        self.v.scaled_add(-step, &grad.v);
        if let (Some(p), Some(gp)) = (self.p.as_mut(), grad.p.as_ref()) {
            p.scaled_add(-step, gp);
        }
    }
}

/// Gaussian initialization from the `"params"` stream of `seed`.
///
/// Draw order: `W` row-major, then `V`, then `P` (gated only), so plain and
/// gated networks built from the same seed share `W` and `V`.
pub fn init_params(cfg: &ExperimentConfig, seed: u64) -> Result<Params> {
    let (m, d) = (cfg.m, cfg.d);
    let mut rng = stream(seed, "params")?;
    let sw = cfg.sigma_w2.sqrt();
    let sv = cfg.sigma_v2.sqrt();
    let sp = cfg.sigma_p2.sqrt();
    let w = Array2::from_shape_vec((m, d), standard_normals(&mut rng, m * d))
        .expect("shape")
        .mapv_into(|z| sw * z);
    let v = Array1::from(standard_normals(&mut rng, m)).mapv_into(|z| sv * z);
    let p = match cfg.arch {
        Arch::Plain => None,
        Arch::Gated => Some(
            Array2::from_shape_vec((m, d), standard_normals(&mut rng, m * d))
                .expect("shape")
                .mapv_into(|z| sp * z),
        ),
    };
    Ok(Params { w, p, v })
}

pub fn forward(params: &Params, x: &[f64], arch: Arch, kind: Activation) -> Result<f64> {
    params.check(arch, x.len())?;
    let xv = ArrayView1::from(x);
    let pre = params.w.dot(&xv);
    let hidden: Array1<f64> = match &params.p {
        None => pre.mapv(|h| activation_eval(kind, h).0),
        Some(p) => {
            let gate = p.dot(&xv);
            pre.iter()
                .zip(gate.iter())
                .map(|(&h, &g)| g * activation_eval(kind, h).0)
                .collect()
        }
    };
    Ok(params.v.dot(&hidden))
}

/// Flat `∇_θ z(x)` in `[V | P | W]` order.
pub fn param_gradient(
    params: &Params,
    x: &[f64],
    arch: Arch,
    kind: Activation,
) -> Result<Vec<f64>> {
    params.check(arch, x.len())?;
    let mut out = vec![0.0; params.num_params()];
    write_gradient(params, x, kind, &mut out);
    Ok(out)
}

fn write_gradient(params: &Params, x: &[f64], kind: Activation, out: &mut [f64]) {
    let (m, d) = params.w.dim();
    let w = params.w.as_slice().expect("standard layout");
    let (v_block, rest) = out.split_at_mut(m);
    match &params.p {
        None => {
            let w_block = rest;
            for k in 0..m {
                let (phi, dphi) = activation_eval(kind, dot(&w[k * d..(k + 1) * d], x));
                v_block[k] = phi;
                let c = params.v[k] * dphi;
                for (dst, &xs) in w_block[k * d..(k + 1) * d].iter_mut().zip(x) {
                    *dst = c * xs;
                }
            }
        }
        Some(p) => {
            let p = p.as_slice().expect("standard layout");
            let (p_block, w_block) = rest.split_at_mut(m * d);
            for k in 0..m {
                let (phi, dphi) = activation_eval(kind, dot(&w[k * d..(k + 1) * d], x));
                let gate = dot(&p[k * d..(k + 1) * d], x);
                v_block[k] = gate * phi;
                let cp = params.v[k] * phi;
                let cw = params.v[k] * gate * dphi;
                for s in 0..d {
                    p_block[k * d + s] = cp * x[s];
                    w_block[k * d + s] = cw * x[s];
                }
            }
        }
    }
}

/// `⟨∇z(xᵢ), ∇z(xⱼ)⟩` for one parameter draw.
fn single_init_gram(params: &Params, x: &DataMatrix, kind: Activation) -> SymMatrix {
    let n = x.n();
    let p = params.num_params();
    if n * p <= MAX_JACOBIAN_ENTRIES {
        let mut jac = vec![0.0; n * p];
        for (i, row) in jac.chunks_mut(p).enumerate() {
            write_gradient(params, x.row_slice(i), kind, row);
        }
        SymMatrix::from_fn(n, |i, j| {
            dot(&jac[i * p..(i + 1) * p], &jac[j * p..(j + 1) * p])
        })
    } else {
        // Too large to hold every gradient: recompute row j for each i.
        let mut gi = vec![0.0; p];
        let mut gj = vec![0.0; p];
        let mut upper: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            write_gradient(params, x.row_slice(i), kind, &mut gi);
            let mut row = Vec::with_capacity(n - i);
            for j in i..n {
                write_gradient(params, x.row_slice(j), kind, &mut gj);
                row.push(dot(&gi, &gj));
            }
            upper.push(row);
        }
        SymMatrix::from_fn(n, |i, j| upper[i][j - i])
    }
}

/// Seed of the `k`-th Monte Carlo draw.
pub fn init_seed(master_seed: u64, k: usize) -> Result<u64> {
    derive_stream_seed(master_seed, &format!("ntk-init/{k}"))
}

/// Average of per-init NTK Grams over `num_inits` seeded draws.
///
/// Per-init Grams may be computed in parallel; they are summed in init
/// order, so the result does not depend on the thread count.
pub fn empirical_ntk(
    cfg: &ExperimentConfig,
    x: &DataMatrix,
    num_inits: usize,
) -> Result<KernelMatrix> {
    if num_inits == 0 {
        return Err(Error::arg("num_inits must be >= 1"));
    }
    if x.d() != cfg.d {
        return Err(Error::dim("input dimension", cfg.d, x.d()));
    }
    let n = x.n();
    let batch = rayon::current_num_threads().max(1);
    let mut acc = vec![0.0; n * n];
    for start in (0..num_inits).step_by(batch) {
        let end = (start + batch).min(num_inits);
        let grams = (start..end)
            .into_par_iter()
            .map(|k| {
                let params = init_params(cfg, init_seed(cfg.master_seed, k)?)?;
                Ok(single_init_gram(&params, x, cfg.activation))
            })
            .collect::<Result<Vec<_>>>()?;
        for g in &grams {
            for (a, v) in acc.iter_mut().zip(g.as_slice()) {
                *a += v;
            }
        }
    }
    let inv = 1.0 / num_inits as f64;
    let mat = SymMatrix::from_fn(n, |i, j| acc[i * n + j] * inv);
    Ok(KernelMatrix::new(
        mat,
        KernelMethod::EmpiricalMC { num_inits },
        KernelShape {
            n,
            d: x.d(),
            m: cfg.m,
            arch: cfg.arch,
            activation: cfg.activation,
        },
    ))
}

/// Network outputs on every row of `x`, with the intermediates needed for
/// the full-batch gradient.
pub struct BatchForward {
    pub outputs: Array1<f64>,
    /// `Wx` for every sample, `n × m`.
    pre: Array2<f64>,
    /// `Px` for every sample (gated only), `n × m`.
    gate: Option<Array2<f64>>,
}

pub fn forward_batch(params: &Params, x: &DataMatrix, kind: Activation) -> BatchForward {
    let pre = x.x().dot(&params.w.t());
    let gate = params.p.as_ref().map(|p| x.x().dot(&p.t()));
    let mut hidden = pre.mapv(|h| activation_eval(kind, h).0);
    if let Some(g) = &gate {
        hidden *= g;
    }
    let outputs = hidden.dot(&params.v);
    BatchForward { outputs, pre, gate }
}

/// Gradient of `Σᵢ cᵢ z(xᵢ)` with respect to every parameter, given the
/// forward intermediates. With `c = (z − y)/n` this is the gradient of the
/// mean squared error `‖z − y‖² / 2n`.
pub fn weighted_output_gradient(
    params: &Params,
    x: &DataMatrix,
    fwd: &BatchForward,
    coeffs: &Array1<f64>,
    kind: Activation,
) -> Params {
    let (phi, dphi) = {
        let mut phi = fwd.pre.clone();
        let mut dphi = fwd.pre.clone();
        ndarray::Zip::from(&mut phi)
            .and(&mut dphi)
            .for_each(|a, b| {
                let (f, df) = activation_eval(kind, *a);
                *a = f;
                *b = df;
            });
        (phi, dphi)
    };
    let c_col = coeffs.view().insert_axis(Axis(1));
    match &fwd.gate {
        None => {
            let gv = phi.t().dot(coeffs);
            // row i, unit k: c_i v_k φ'(w_kᵀx_i)
            let mut s = dphi;
            s *= &c_col;
            s *= &params.v;
            let gw = s.t().dot(x.x());
            Params {
                w: gw,
                p: None,
                v: gv,
            }
        }
        Some(gate) => {
            let gv = (&phi * gate).t().dot(coeffs);
            let mut sp = phi;
            sp *= &c_col;
            sp *= &params.v;
            let gp = sp.t().dot(x.x());
            let mut sw = dphi * gate;
            sw *= &c_col;
            sw *= &params.v;
            let gw = sw.t().dot(x.x());
            Params {
                w: gw,
                p: Some(gp),
                v: gv,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sample_gaussian_data;
    use crate::kernel::expected_ntk_plain;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    fn tiny(w: f64, p: Option<f64>, v: f64) -> Params {
        Params {
            w: array![[w]],
            p: p.map(|p| array![[p]]),
            v: array![v],
        }
    }

    #[test]
    fn activation_values() {
        assert_eq!(activation_eval(Activation::GELU, 0.0), (0.0, 0.5));
        assert_eq!(activation_eval(Activation::SiLU, 0.0), (0.0, 0.5));
        assert_eq!(activation_eval(Activation::ReLU, -3.0), (0.0, 0.0));
        assert_eq!(activation_eval(Activation::ReLU, 0.0), (0.0, 0.0));
        assert_eq!(activation_eval(Activation::ReLU, 2.5), (2.5, 1.0));
    }

    #[test]
    fn activation_derivatives_match_differences() {
        for kind in [Activation::GELU, Activation::SiLU] {
            for &x in &[-4.0, -1.3, -0.2, 0.0, 0.7, 2.2, 5.0] {
                let h = 1e-6;
                let fd = (activation_eval(kind, x + h).0 - activation_eval(kind, x - h).0) / (2.0 * h);
                assert!((fd - activation_eval(kind, x).1).abs() < 1e-8, "{kind} at {x}");
            }
        }
    }

    #[test]
    fn forward_examples() {
        let relu = Activation::ReLU;
        assert_eq!(forward(&tiny(1.0, None, 1.0), &[2.0], Arch::Plain, relu).unwrap(), 2.0);
        assert_eq!(
            forward(&tiny(1.0, Some(1.0), 1.0), &[2.0], Arch::Gated, relu).unwrap(),
            4.0
        );
        let cfg = ExperimentConfig::lecun(2, 3, 5).unwrap().with_arch(Arch::Gated);
        let params = init_params(&cfg, 1).unwrap();
        for kind in [Activation::ReLU, Activation::GELU, Activation::SiLU] {
            assert_eq!(forward(&params, &[0.0; 3], Arch::Gated, kind).unwrap(), 0.0);
        }
        assert!(forward(&params, &[0.0; 2], Arch::Gated, relu).is_err());
        assert!(forward(&params, &[0.0; 3], Arch::Plain, relu).is_err());
    }

    #[test]
    fn gradient_examples() {
        let relu = Activation::ReLU;
        let g = param_gradient(&tiny(1.0, None, 3.0), &[2.0], Arch::Plain, relu).unwrap();
        assert_eq!(g, vec![2.0, 6.0]);
        let g = param_gradient(&tiny(1.0, Some(1.0), 1.0), &[2.0], Arch::Gated, relu).unwrap();
        assert_eq!(g, vec![4.0, 4.0, 4.0]);
    }

    #[test]
    fn init_shapes_and_determinism() {
        let cfg = ExperimentConfig::lecun(2, 4, 6).unwrap();
        let a = init_params(&cfg, 3).unwrap();
        assert!(a.p.is_none());
        assert_eq!(a.w.dim(), (6, 4));
        assert_eq!(a, init_params(&cfg, 3).unwrap());
        let gated = init_params(&cfg.clone().with_arch(Arch::Gated), 3).unwrap();
        assert_eq!(gated.w, a.w);
        assert_eq!(gated.v, a.v);
        assert_eq!(gated.p.unwrap().dim(), (6, 4));
    }

    #[test]
    fn init_variance() {
        let d = 1000;
        let cfg = ExperimentConfig::lecun(2, d, 1000).unwrap();
        let p = init_params(&cfg, 5).unwrap();
        let n = p.w.len() as f64;
        let var = p.w.iter().map(|v| v * v).sum::<f64>() / n;
        assert!((var / cfg.sigma_w2 - 1.0).abs() < 0.01, "var {var}");
    }

    fn perturbed(params: &Params, idx: usize, delta: f64) -> Params {
        let mut q = params.clone();
        let m = q.width();
        let d = q.input_dim();
        if idx < m {
            q.v[idx] += delta;
            return q;
        }
        let mut k = idx - m;
        if let Some(p) = q.p.as_mut() {
            if k < m * d {
                p[[k / d, k % d]] += delta;
                return q;
            }
            k -= m * d;
        }
        q.w[[k / d, k % d]] += delta;
        q
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for case in 0..30 {
            let arch = if case % 2 == 0 { Arch::Plain } else { Arch::Gated };
            let kind = [Activation::GELU, Activation::SiLU, Activation::ReLU][case % 3];
            let d = rng.random_range(1..5);
            let m = rng.random_range(1..6);
            let cfg = ExperimentConfig::lecun(2, d, m).unwrap().with_arch(arch);
            let params = init_params(&cfg, case as u64).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            if kind == Activation::ReLU {
                let pre = params.w.dot(&ArrayView1::from(&x[..]));
                if pre.iter().any(|h| h.abs() <= 1e-3) {
                    continue;
                }
            }
            let g = param_gradient(&params, &x, arch, kind).unwrap();
            let h = 1e-5;
            for (idx, &gi) in g.iter().enumerate() {
                let up = forward(&perturbed(&params, idx, h), &x, arch, kind).unwrap();
                let dn = forward(&perturbed(&params, idx, -h), &x, arch, kind).unwrap();
                let fd = (up - dn) / (2.0 * h);
                assert!(
                    (fd - gi).abs() <= 1e-6 * gi.abs().max(1.0),
                    "case {case} coord {idx}: fd {fd} vs {gi}"
                );
            }
        }
    }

    #[test]
    fn single_init_single_sample() {
        let cfg = ExperimentConfig::lecun(2, 3, 7).unwrap().with_seed(4);
        let x = DataMatrix::from_rows(&[vec![0.3, -1.0, 2.0], vec![1.0, 1.0, 1.0]]).unwrap();
        let k = empirical_ntk(&cfg, &x, 1).unwrap();
        let params = init_params(&cfg, init_seed(4, 0).unwrap()).unwrap();
        let g = param_gradient(&params, x.row_slice(0), Arch::Plain, Activation::ReLU).unwrap();
        assert_eq!(k.mat.get(0, 0), dot(&g, &g));
        assert!(k.mat.get(0, 0) >= 0.0);
        assert_eq!(k.method, KernelMethod::EmpiricalMC { num_inits: 1 });
        assert!(empirical_ntk(&cfg, &x, 0).is_err());
    }

    #[test]
    fn streaming_gram_matches_materialized() {
        let cfg = ExperimentConfig::lecun(4, 3, 5)
            .unwrap()
            .with_arch(Arch::Gated)
            .with_activation(Activation::SiLU);
        let params = init_params(&cfg, 9).unwrap();
        let x = sample_gaussian_data(4, 3, 1).unwrap();
        let dense = single_init_gram(&params, &x, cfg.activation);
        let n = x.n();
        let p = params.num_params();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| param_gradient(&params, x.row_slice(i), Arch::Gated, cfg.activation).unwrap())
            .collect();
        assert_eq!(rows[0].len(), p);
        for i in 0..n {
            for j in 0..n {
                assert_eq!(dense.get(i, j), dot(&rows[i], &rows[j]));
            }
        }
    }

    #[test]
    fn empirical_is_psd_and_deterministic() {
        let cfg = ExperimentConfig::lecun(12, 4, 16)
            .unwrap()
            .with_arch(Arch::Gated)
            .with_activation(Activation::GELU)
            .with_seed(2);
        let x = sample_gaussian_data(12, 4, 2).unwrap();
        let a = empirical_ntk(&cfg, &x, 3).unwrap();
        let b = empirical_ntk(&cfg, &x, 3).unwrap();
        assert_eq!(a.mat, b.mat);
        let s = crate::spectral::eig_sym(&a.mat).unwrap();
        assert!(s.lambda_min >= -1e-8 * s.lambda_max);
    }

    #[test]
    fn one_dimensional_diagonal_matches_closed_form() {
        // d = 1, x = [1]: K₁₁ = m/2 + 1/2 under LeCun.
        let m = 256;
        let cfg = ExperimentConfig::lecun(2, 1, m).unwrap().with_seed(11);
        let x = DataMatrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let inits = 10_000;
        let samples: Vec<f64> = (0..inits)
            .map(|k| {
                let p = init_params(&cfg, init_seed(11, k).unwrap()).unwrap();
                let g = param_gradient(&p, &[1.0], Arch::Plain, Activation::ReLU).unwrap();
                dot(&g, &g)
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / inits as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (inits - 1) as f64;
        let se = (var / inits as f64).sqrt();
        let want = m as f64 / 2.0 + 0.5;
        assert!((mean - want).abs() <= 3.0 * se, "mean {mean} want {want} se {se}");
        let k = empirical_ntk(&cfg, &x, 50).unwrap();
        let exact = expected_ntk_plain(&x, &cfg).unwrap();
        assert!((k.mat.get(0, 0) / exact.mat.get(0, 0) - 1.0).abs() < 0.1);
    }

    #[test]
    fn batch_gradient_matches_per_sample_sum() {
        for arch in [Arch::Plain, Arch::Gated] {
            let cfg = ExperimentConfig::lecun(5, 3, 4)
                .unwrap()
                .with_arch(arch)
                .with_activation(Activation::SiLU);
            let params = init_params(&cfg, 8).unwrap();
            let x = sample_gaussian_data(5, 3, 8).unwrap();
            let c = array![0.3, -1.0, 0.5, 2.0, -0.7];
            let fwd = forward_batch(&params, &x, cfg.activation);
            for i in 0..5 {
                let z = forward(&params, x.row_slice(i), arch, cfg.activation).unwrap();
                assert!((fwd.outputs[i] - z).abs() < 1e-12);
            }
            let g = weighted_output_gradient(&params, &x, &fwd, &c, cfg.activation);
            let mut flat = vec![0.0; params.num_params()];
            for i in 0..5 {
                let gi = param_gradient(&params, x.row_slice(i), arch, cfg.activation).unwrap();
                for (a, b) in flat.iter_mut().zip(gi) {
                    *a += c[i] * b;
                }
            }
            let mut batched: Vec<f64> = g.v.to_vec();
            if let Some(p) = &g.p {
                batched.extend(p.iter());
            }
            batched.extend(g.w.iter());
            for (a, b) in batched.iter().zip(&flat) {
                assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}
