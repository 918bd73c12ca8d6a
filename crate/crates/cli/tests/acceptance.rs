//! Acceptance suite: one numbered check per criterion, each printing a
//! single PASS/FAIL line. Runs without the libtest harness so every line is
//! shown; exits nonzero when any criterion fails.
//!
//! `cargo test -p glu-ntk-cli --test acceptance -- 4 7` runs a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use glu_ntk_cli::runners::crossing::{run_loss_crossing, CrossingData, CrossingOptions, CrossingSource};
use glu_ntk_cli::runners::median;
use glu_ntk_cli::runners::rmt::{check_case, RmtCase, RmtKind};
use glu_ntk_cli::runners::spectrum::{run_condition_sweep, KernelSource, SweepOptions, SweepRow};
use glu_ntk_core::data::{make_targets, sample_gaussian_data, DataMatrix};
use glu_ntk_core::dynamics::{crossing_step_estimate, detect_crossing, early_stage_discriminant, expected_loss_curve};
use glu_ntk_core::empirical::{empirical_ntk, forward, forward_batch, init_params, init_seed, param_gradient};
use glu_ntk_core::kernel::{
    data_cosine_matrix, expected_ntk_glu, expected_ntk_plain, gradient_angle_matrix, hadamard_gate,
    structured_ntk_glu, structured_ntk_plain,
};
use glu_ntk_core::rng::{standard_normals, stream};
use glu_ntk_core::spectral::{eig_sym, row_sum_bounds, sample_squared_wishart, weyl_check_all};
use glu_ntk_core::stats::{energy_distance, permutation_test, Point};
use glu_ntk_core::{
    derive_stream_seed, Activation, Arch, ExperimentConfig, LossTrajectory, ModeDecomposition, Params, SymMatrix,
    TargetKind, TrajectorySource,
};

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn sweep(d_list: &[usize], seeds: usize, sphere: bool) -> Vec<SweepRow> {
    let opts = SweepOptions {
        d_list: d_list.to_vec(),
        n_ratio: 4.0,
        m_ratio: 8.0,
        seeds,
        base_seed: SEED,
        kernel: KernelSource::Structured,
        sphere,
    };
    run_condition_sweep(&opts, None).unwrap()
}

fn sweep_medians(rows: &[SweepRow], d: usize) -> (f64, f64, f64) {
    let pick = |arch: Arch, f: fn(&SweepRow) -> f64| -> f64 {
        let v: Vec<f64> = rows.iter().filter(|r| r.d == d && r.model == arch).map(f).collect();
        median(&v).unwrap()
    };
    (
        pick(Arch::Plain, |r| rel(r.lambda_max_num, r.lambda_max_thy)),
        pick(Arch::Plain, |r| rel(r.lambda_min_num, r.lambda_min_thy)),
        pick(Arch::Gated, |r| rel(r.lambda_min_num, r.lambda_min_thy)),
    )
}

fn c1_theory_tracking() -> Outcome {
    let start = Instant::now();
    let dims = [64, 128, 256];
    let rows = sweep(&dims, 5, false);
    let secs = start.elapsed().as_secs_f64();
    let mut pass = secs <= 120.0;
    let mut parts = Vec::new();
    for d in dims {
        let (e1, en, ent) = sweep_medians(&rows, d);
        let in_bounds = rows
            .iter()
            .filter(|r| r.d == d && r.model == Arch::Gated)
            .all(|r| {
                let up = r.lambda_max_thy_upper.unwrap();
                r.lambda_max_num >= 0.9 * r.lambda_max_thy && r.lambda_max_num <= 1.1 * up
            });
        pass &= e1 <= 0.10 && en <= 0.15 && ent <= 0.15 && in_bounds;
        parts.push(format!(
            "d={d}: med err l1(K)={e1:.3} ln(K)={en:.3} ln(K~)={ent:.3} l1(K~) in bounds={in_bounds}"
        ));
    }
    // same experiment with inputs on the sphere of radius √d, for reference
    let sphere = sweep(&dims, 5, true);
    let diag: Vec<String> = dims
        .iter()
        .map(|&d| {
            let (_, en, ent) = sweep_medians(&sphere, d);
            format!("d={d}: ln(K)={en:.3} ln(K~)={ent:.3}")
        })
        .collect();
    outcome(
        pass,
        format!("{}; {secs:.1}s [sphere inputs: {}]", parts.join("; "), diag.join(", ")),
    )
}

fn c2_ratio_slope() -> Outcome {
    let dims = [32usize, 64, 128, 256, 512];
    let rows = sweep(&dims, 1, false);
    let pts: Vec<(f64, f64)> = dims
        .iter()
        .map(|&d| {
            let get = |a: Arch| rows.iter().find(|r| r.d == d && r.model == a).unwrap().lambda_max_num;
            ((d as f64).ln(), (get(Arch::Gated) / get(Arch::Plain)).ln())
        })
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    outcome((slope + 1.0).abs() <= 0.3, format!("slope {slope:.3} (target -1 ± 0.3)"))
}

fn c3_ordering() -> Outcome {
    let rows = sweep(&[64], 40, false);
    let mut min_ok = 0;
    let mut kappa_ok = 0;
    for rep in 0..40 {
        let p = rows.iter().find(|r| r.rep == rep && r.model == Arch::Plain).unwrap();
        let g = rows.iter().find(|r| r.rep == rep && r.model == Arch::Gated).unwrap();
        min_ok += usize::from(g.lambda_min_num > p.lambda_min_num);
        kappa_ok += usize::from(g.kappa_num.unwrap() < p.kappa_num.unwrap());
    }
    outcome(
        min_ok >= 38 && kappa_ok >= 38,
        format!("lmin(K~) > lmin(K) in {min_ok}/40, kappa(K~) < kappa(K) in {kappa_ok}/40"),
    )
}

fn rmt(kind: RmtKind) -> Outcome {
    let case = RmtCase::standard().into_iter().find(|c| c.kind == kind).unwrap();
    let start = Instant::now();
    let (o, _) = check_case(&case, derive_stream_seed(SEED, &format!("rmt/{kind:?}")).unwrap()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut pass = o.pass;
    if kind == RmtKind::MarchenkoPastur {
        pass &= secs <= 10.0;
    }
    let fmt_tol = |t: Option<f64>| t.map_or("unchecked".to_string(), |t| format!("tol {t}"));
    outcome(
        pass,
        format!(
            "n={} d={}: lmax {:.4} vs {:.4} (err {:.3}, {}), lmin {:.4} vs {:.4} (err {:.3}, {}); {secs:.1}s",
            case.n,
            case.d,
            o.lambda_max,
            o.predicted_max,
            o.rel_err_max,
            fmt_tol(case.tol_max),
            o.lambda_min,
            o.predicted_min,
            o.rel_err_min,
            fmt_tol(case.tol_min)
        ),
    )
}

fn c8_gating() -> Outcome {
    let (n, d) = (256, 64);
    let m = 100 * d;
    let x = sample_gaussian_data(n, d, SEED).unwrap();
    let k = structured_ntk_plain(&x, m);
    let gated = hadamard_gate(&k, &x).unwrap();
    let kt = structured_ntk_glu(&x, m);
    let err = gated.mat.relative_frobenius_error(&kt.mat).unwrap();
    let cos_t = gradient_angle_matrix(&gated).unwrap();
    let cos_p = gradient_angle_matrix(&k).unwrap();
    let cos_a = data_cosine_matrix(&x);
    let want = cos_p.hadamard(&cos_a).unwrap();
    let max_dev = cos_t
        .as_slice()
        .iter()
        .zip(want.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    outcome(
        err <= 0.05 && max_dev <= 1e-10,
        format!("rel. Frobenius distance {err:.4} (tol 0.05), angle identity max dev {max_dev:.2e}"),
    )
}

fn perturbed(params: &Params, idx: usize, h: f64) -> Params {
    let mut p = params.clone();
    let m = p.v.len();
    if idx < m {
        p.v[idx] += h;
        return p;
    }
    let mut rest = idx - m;
    if let Some(g) = p.p.as_mut() {
        let len = g.len();
        if rest < len {
            g.as_slice_mut().unwrap()[rest] += h;
            return p;
        }
        rest -= len;
    }
    p.w.as_slice_mut().unwrap()[rest] += h;
    p
}

fn c9_empirical() -> Outcome {
    let (n, d) = (32, 16);
    let x = sample_gaussian_data(n, d, SEED).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for arch in [Arch::Plain, Arch::Gated] {
        let errs: Vec<f64> = [256usize, 1024, 4096]
            .iter()
            .map(|&m| {
                let cfg = ExperimentConfig::lecun(n, d, m).unwrap().with_arch(arch).with_seed(SEED);
                let exact = match arch {
                    Arch::Plain => expected_ntk_plain(&x, &cfg).unwrap(),
                    Arch::Gated => expected_ntk_glu(&x, &cfg).unwrap(),
                };
                empirical_ntk(&cfg, &x, 20).unwrap().mat.relative_frobenius_error(&exact.mat).unwrap()
            })
            .collect();
        let ok = errs.windows(2).all(|w| w[1] <= w[0]) && errs[2] <= 0.10;
        pass &= ok;
        parts.push(format!("{arch} errors {:.4}/{:.4}/{:.4}", errs[0], errs[1], errs[2]));
    }

    // finite differences
    let mut rng = stream(SEED, "fd-configs").unwrap();
    let mut worst = 0.0f64;
    let mut configs = 0;
    let mut draw = 0u64;
    while configs < 100 {
        draw += 1;
        let z = standard_normals(&mut rng, 3);
        let arch = if z[0] > 0.0 { Arch::Gated } else { Arch::Plain };
        let kind = [Activation::ReLU, Activation::GELU, Activation::SiLU][(z[1].abs() * 1000.0) as usize % 3];
        let d = 1 + (z[2].abs() * 1e4) as usize % 8;
        let m = 1 + (z[2].abs() * 1e6) as usize % 16;
        let cfg = ExperimentConfig::lecun(2, d, m).unwrap().with_arch(arch);
        let params = init_params(&cfg, derive_stream_seed(SEED, &format!("fd/{draw}")).unwrap()).unwrap();
        let xv = standard_normals(&mut rng, d);
        if kind == Activation::ReLU {
            // central differences are meaningless across a kink
            let near_kink = (0..m).any(|k| {
                let h: f64 = (0..d).map(|j| params.w[[k, j]] * xv[j]).sum();
                h.abs() < 1e-3
            });
            if near_kink {
                continue;
            }
        }
        let g = param_gradient(&params, &xv, arch, kind).unwrap();
        let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let h = 1e-5;
        for (idx, &gi) in g.iter().enumerate() {
            let up = forward(&perturbed(&params, idx, h), &xv, arch, kind).unwrap();
            let dn = forward(&perturbed(&params, idx, -h), &xv, arch, kind).unwrap();
            let fd = (up - dn) / (2.0 * h);
            worst = worst.max((fd - gi).abs() / gi.abs().max(scale));
        }
        configs += 1;
    }
    pass &= worst <= 1e-6;
    outcome(
        pass,
        format!("{}; finite differences on {configs} configs, worst rel. dev {worst:.2e}", parts.join(", ")),
    )
}

/// Per-init NTK Gram from its factored form:
/// plain `ΦΦᵀ + (Φ'V)(Φ'V)ᵀ ⊙ XXᵀ`,
/// gated `(G⊙Φ)(G⊙Φ)ᵀ + [(ΦV)(ΦV)ᵀ + (G⊙Φ'V)(G⊙Φ'V)ᵀ] ⊙ XXᵀ`.
fn factored_gram(params: &Params, x: &Array2<f64>) -> Array2<f64> {
    let pre = x.dot(&params.w.t());
    let phi = pre.mapv(|h| h.max(0.0));
    let dphi = pre.mapv(|h| if h > 0.0 { 1.0 } else { 0.0 });
    let v = params.v.view().insert_axis(Axis(0));
    let xx = x.dot(&x.t());
    match &params.p {
        None => {
            let a = &dphi * &v;
            phi.dot(&phi.t()) + a.dot(&a.t()) * &xx
        }
        Some(p) => {
            let g = x.dot(&p.t());
            let gp = &g * &phi;
            let pv = &phi * &v;
            let gdv = &g * &dphi * &v;
            gp.dot(&gp.t()) + (pv.dot(&pv.t()) + gdv.dot(&gdv.t())) * &xx
        }
    }
}

fn c10_expected_loss() -> Outcome {
    let (n, d, m, inits, horizon) = (64, 16, 4096, 2000, 200);
    let x = sample_gaussian_data(n, d, SEED).unwrap();
    let y = make_targets(TargetKind::RandomSign, n, SEED).unwrap();
    let xa = x.x().to_owned();
    let mut pass = true;
    let mut parts = Vec::new();
    for arch in [Arch::Plain, Arch::Gated] {
        let cfg = ExperimentConfig::lecun(n, d, m).unwrap().with_arch(arch).with_seed(SEED);
        let k = match arch {
            Arch::Plain => expected_ntk_plain(&x, &cfg).unwrap(),
            Arch::Gated => expected_ntk_glu(&x, &cfg).unwrap(),
        };
        let modes = ModeDecomposition::new(&k, &y).unwrap();
        let eta = 1.0 / modes.lambda_max();
        let closed = modes.expected_loss_curve(cfg.sigma_v2, eta, horizon);

        // the factored Gram must agree with the Jacobian route
        let probe = init_params(&cfg, init_seed(SEED, 0).unwrap()).unwrap();
        let fg = factored_gram(&probe, &xa);
        let jg = empirical_ntk(&cfg, &x, 1).unwrap();
        let jg_dev = (0..n * n)
            .map(|t| (fg[[t / n, t % n]] - jg.mat.get(t / n, t % n)).abs())
            .fold(0.0, f64::max)
            / jg.mat.frobenius_norm();
        assert!(jg_dev < 1e-10, "factored Gram deviates from the Jacobian Gram by {jg_dev:e}");

        let yv = Array1::from(y.clone());
        let runs: Vec<(Vec<f64>, Array2<f64>)> = (0..inits)
            .into_par_iter()
            .map(|i| {
                let params = init_params(&cfg, init_seed(SEED, i).unwrap()).unwrap();
                let k0 = factored_gram(&params, &xa);
                let mut e = forward_batch(&params, &x, Activation::ReLU).outputs - &yv;
                let mut out = Vec::with_capacity(horizon + 1);
                for _ in 0..=horizon {
                    out.push(e.dot(&e) / (2.0 * n as f64));
                    e = &e - &(k0.dot(&e) * eta);
                }
                (out, k0)
            })
            .collect();
        let mut mean = vec![0.0; horizon + 1];
        let mut sq = vec![0.0; horizon + 1];
        let mut kbar = Array2::<f64>::zeros((n, n));
        for (c, k0) in &runs {
            for t in 0..=horizon {
                mean[t] += c[t] / inits as f64;
                sq[t] += c[t] * c[t] / inits as f64;
            }
            kbar = kbar + k0 / inits as f64;
        }
        let (t_worst, worst) = mean
            .iter()
            .zip(&closed)
            .map(|(a, b)| rel(*a, *b))
            .enumerate()
            .fold((0, 0.0), |acc, (t, r)| if r > acc.1 { (t, r) } else { acc });
        pass &= worst <= 0.05;
        // diagnostics: Monte Carlo standard error at the worst step, and the
        // closed form evaluated on the init-averaged Gram
        let se = ((sq[t_worst] - mean[t_worst].powi(2)).max(0.0) / inits as f64).sqrt();
        let kbar_sym = SymMatrix::from_fn(n, |i, j| 0.5 * (kbar[[i, j]] + kbar[[j, i]]));
        let kbar_err = kbar_sym.relative_frobenius_error(&k.mat).unwrap();
        parts.push(format!(
            "{arch}: worst rel. dev {worst:.4} at t={t_worst} over t<={horizon} (L0 {:.4} vs {:.4}, L200 {:.4e} vs {:.4e}); \
             [MC s.e. at t={t_worst}: {:.3e} ({:.4} rel.), mean Gram vs expected kernel {kbar_err:.4}]",
            mean[0],
            closed[0],
            mean[horizon],
            closed[horizon],
            se,
            se / closed[t_worst]
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c11_crossing() -> Outcome {
    let (n, d, m) = (400, 8, 64);
    let x = sample_gaussian_data(n, d, SEED).unwrap();
    let k = structured_ntk_plain(&x, m);
    let kt = structured_ntk_glu(&x, m);
    let diff = k.mat.sub(&kt.mat).unwrap();
    let mut draw = 0;
    let mut y = make_targets(TargetKind::RandomSign, n, SEED).unwrap();
    while diff.quadratic_form(&y).unwrap() < 0.0 {
        draw += 1;
        assert!(draw < 1000, "no target draw with Y'(K - K~)Y >= 0");
        y = make_targets(TargetKind::RandomSign, n, derive_stream_seed(SEED, &format!("resample/{draw}")).unwrap())
            .unwrap();
    }
    let sigma_v2 = 1.0 / m as f64;
    let (dp, dg) = (ModeDecomposition::new(&k, &y).unwrap(), ModeDecomposition::new(&kt, &y).unwrap());
    let lmax = dp.lambda_max().max(dg.lambda_max());
    let eta = 1e-3 / lmax;
    let window = (0.05 / (eta * lmax)).floor() as usize;
    let steps = 100_000;
    let lp = dp.expected_loss_curve(sigma_v2, eta, steps);
    let lg = dg.expected_loss_curve(sigma_v2, eta, steps);
    let early = (1..=window).all(|t| lp[t] < lg[t]);
    let traj = LossTrajectory::new(lp, lg, eta, TrajectorySource::ExpectedClosedForm).unwrap();
    let crossing = detect_crossing(&traj);

    // two-mode diagonal synthetics sharing a fast top mode
    let mut rng = stream(SEED, "two-mode").unwrap();
    let mut agree = 0;
    let mut total = 0;
    let mut worst = 0.0f64;
    while total < 50 {
        let z = standard_normals(&mut rng, 5);
        let top = 5.0 + 15.0 * (0.5 + 0.5 * z[0].tanh());
        let eta2 = (0.9 + 0.2 * (0.5 + 0.5 * z[1].tanh())) / top;
        let a = 0.01 + 0.5 * (0.5 + 0.5 * z[2].tanh());
        let b = a * (1.2 + 1.5 * (0.5 + 0.5 * z[3].tanh()));
        let beta_slow = 0.5 * z[4];
        let y2 = [beta_slow, 1.0];
        let Ok(est) = crossing_step_estimate(a, b, beta_slow, beta_slow, 1.0, eta2) else {
            continue;
        };
        // the estimate describes the slow mode only; the fast one must be
        // gone by then
        if (1.0 - eta2 * top).abs().powf(2.0 * est) > 1e-8 * (a + beta_slow * beta_slow) {
            continue;
        }
        total += 1;
        let steps2 = est.ceil() as usize + 50;
        let cp = expected_loss_curve(SymMatrix::from_diag(&[a, top]), &y2, 1.0, eta2, steps2).unwrap();
        let cg = expected_loss_curve(SymMatrix::from_diag(&[b, top]), &y2, 1.0, eta2, steps2).unwrap();
        let t = LossTrajectory::new(cp, cg, eta2, TrajectorySource::ExpectedClosedForm).unwrap();
        if let Some(c) = detect_crossing(&t) {
            let dev = (c as f64 - est).abs();
            worst = worst.max(dev);
            agree += usize::from(dev <= 2.0);
        } else {
            worst = f64::INFINITY;
        }
    }
    outcome(
        early && crossing.is_some() && agree == total,
        format!(
            "{draw} target redraws, window k<={window}: L<L~ early={early}, crossing {:?}; two-mode agreement {agree}/{total} (worst {worst:.2} steps)",
            crossing
        ),
    )
}

fn c12_finite_width() -> Outcome {
    let run = |eta: f64| {
        let opts = CrossingOptions {
            source: CrossingSource::FiniteWidth,
            data: CrossingData::Gaussian,
            n: 300,
            d: 16,
            m: 2048,
            eta,
            steps: 150,
            seeds: 10,
            base_seed: SEED,
            activation: Activation::ReLU,
            kernel: KernelSource::Structured,
            max_resamples: 0,
            stride: 1,
        };
        run_loss_crossing(&opts, None).unwrap()
    };
    let summarize = |runs: &[glu_ntk_cli::runners::crossing::CrossingRun]| {
        let idx: Vec<usize> = runs.iter().filter_map(|r| r.crossing_index()).collect();
        let mean = (!idx.is_empty()).then(|| idx.iter().sum::<usize>() as f64 / idx.len() as f64);
        let diverged = runs.iter().filter(|r| r.divergence.is_some()).count();
        (idx.len(), mean, diverged)
    };
    let (c5, m5, v5) = summarize(&run(0.005));
    let (c8, m8, v8) = summarize(&run(0.008));
    let not_later = match (m5, m8) {
        (Some(a), Some(b)) => b <= a,
        (_, None) => true,
        (None, Some(_)) => false,
    };
    outcome(
        c5 >= 6 && not_later,
        format!(
            "eta 0.005: {c5}/10 cross, mean index {m5:?}, {v5} diverged; eta 0.008: {c8}/10 cross, mean index {m8:?}, {v8} diverged"
        ),
    )
}

fn c13_trace() -> Outcome {
    let (m, d, n) = (512, 50, 500);
    let traces: Vec<f64> = (0..50)
        .into_par_iter()
        .map(|r| {
            let x = sample_gaussian_data(n, d, derive_stream_seed(SEED, &format!("trace/{r}")).unwrap()).unwrap();
            structured_ntk_plain(&x, m).mat.trace() - structured_ntk_glu(&x, m).mat.trace()
        })
        .collect();
    let mean = traces.iter().sum::<f64>() / traces.len() as f64;
    let want = -(n as f64) * m as f64 / d as f64;
    // diagnostics: the m-proportional diagonal parts alone, and the exact
    // expectation for the full kernels
    let (mf, df) = (m as f64, d as f64);
    let leading: f64 = (0..50)
        .map(|r| {
            let x = sample_gaussian_data(n, d, derive_stream_seed(SEED, &format!("trace/{r}")).unwrap()).unwrap();
            x.sq_norms().iter().map(|s| mf / (2.0 * df) * s - mf / (2.0 * df * df) * s * s).sum::<f64>()
        })
        .sum::<f64>()
        / 50.0;
    let exact = -(n as f64) * (mf / df + df / 2.0 + 2.0);
    let (formula, _) = early_stage_discriminant(m, d, n).unwrap();
    let (_, sq_gap) = early_stage_discriminant(m, 5, 300).unwrap();
    outcome(
        rel(mean, want) <= 0.05 && sq_gap > 0.0,
        format!(
            "mean Tr(K-K~) {mean:.1} vs {want:.1} (err {:.4}, formula {formula:.1}); [width-proportional part {leading:.1}, full-kernel expectation {exact:.1}]; Tr(K^2-K~^2) gap at d=5, n=300: {sq_gap:.4e}",
            rel(mean, want)
        ),
    )
}

fn random_sym(n: usize, seed: u64, label: &str) -> SymMatrix {
    let mut rng = stream(seed, label).unwrap();
    let z = standard_normals(&mut rng, n * n);
    SymMatrix::from_fn(n, |i, j| (z[i * n + j] + z[j * n + i]) / 2.0)
}

fn c14_inequalities() -> Outcome {
    let mut weyl_ok = 0;
    for r in 0..100u64 {
        let n = 2 + (r as usize * 7) % 60;
        let (a, b) = if r % 2 == 0 {
            (random_sym(n, SEED + r, "weyl-a"), random_sym(n, SEED + r, "weyl-b").scale(0.1 + r as f64 / 20.0))
        } else {
            let d = 2 + (r as usize) % 30;
            let x = sample_gaussian_data(n.max(2), d, SEED + r).unwrap();
            let k = structured_ntk_plain(&x, 4 * d);
            let kt = structured_ntk_glu(&x, 4 * d);
            let gap = kt.mat.sub(&k.mat).unwrap();
            (k.mat, gap)
        };
        weyl_ok += usize::from(weyl_check_all(&a, &b).unwrap());
    }
    let mut rows_ok = 0;
    for r in 0..100u64 {
        let n = 2 + (r as usize * 11) % 80;
        let a = match r % 3 {
            0 => random_sym(n, SEED + r, "rows").map(f64::abs),
            1 => sample_squared_wishart(n, 1 + (r as usize) % 40, SEED + r).unwrap(),
            _ => {
                // nonnegative gated kernel: ReLU closed form on nonnegative inputs
                let x = sample_gaussian_data(n, 6, SEED + r).unwrap();
                let cfg = ExperimentConfig::lecun(n, 6, 32).unwrap();
                let pos = DataMatrix::new(x.x().mapv(f64::abs)).unwrap();
                expected_ntk_glu(&pos, &cfg.with_arch(Arch::Gated)).unwrap().mat
            }
        };
        let (lo, hi) = row_sum_bounds(&a).unwrap();
        let lmax = eig_sym(&a).unwrap().lambda_max;
        let tol = 1e-12 * n as f64 * a.frobenius_norm();
        rows_ok += usize::from(lo - tol <= lmax && lmax <= hi + tol);
    }
    outcome(
        weyl_ok == 100 && rows_ok == 100,
        format!("Weyl sandwich {weyl_ok}/100, row-sum bracket {rows_ok}/100"),
    )
}

fn cloud(n: usize, seed: u64, label: &str) -> Vec<Point> {
    let mut rng = stream(seed, label).unwrap();
    standard_normals(&mut rng, 2 * n).chunks(2).map(|c| [c[0], c[1]]).collect()
}

fn c15_statistics() -> Outcome {
    let a = cloud(50, SEED, "energy-a");
    let b: Vec<Point> = cloud(50, SEED, "energy-b").iter().map(|p| [p[0] + 0.4, p[1] * 1.3]).collect();
    let d = |p: &Point, q: &Point| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..50 {
        for j in 0..50 {
            ab += d(&a[i], &b[j]);
            aa += d(&a[i], &a[j]);
            bb += d(&b[i], &b[j]);
        }
    }
    let oracle = (2.0 * ab - aa - bb) / 2500.0;
    let got = energy_distance(&a, &b).unwrap();
    let oracle_dev = rel(got, oracle);

    let rejections: usize = (0..200u64)
        .into_par_iter()
        .map(|r| {
            let x = cloud(30, SEED + r, "null-a");
            let y = cloud(30, SEED + r, "null-b");
            usize::from(permutation_test(&x, &y, 199, SEED + r).unwrap() < 0.05)
        })
        .sum();
    let rate = rejections as f64 / 200.0;
    outcome(
        oracle_dev <= 1e-12 && (0.01..=0.12).contains(&rate),
        format!("energy {got:.12} vs oracle {oracle:.12} (rel {oracle_dev:.1e}); null rejection rate {rate:.3}"),
    )
}

fn main() -> ExitCode {
    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Outcome>)> = vec![
        (1, "theory tracks numeric extreme eigenvalues", Box::new(c1_theory_tracking)),
        (2, "largest-eigenvalue ratio scales as 1/d", Box::new(c2_ratio_slope)),
        (3, "gated kernel better conditioned", Box::new(c3_ordering)),
        (4, "Marchenko-Pastur edges", Box::new(|| rmt(RmtKind::MarchenkoPastur))),
        (5, "linearized Hadamard square", Box::new(|| rmt(RmtKind::Karoui))),
        (6, "Hadamard square limit law, lower edge", Box::new(|| rmt(RmtKind::HadamardLsd))),
        (7, "spiked Wishart outlier", Box::new(|| rmt(RmtKind::Bbp))),
        (8, "gated kernel as Hadamard-gated plain kernel", Box::new(c8_gating)),
        (9, "empirical NTK convergence and gradients", Box::new(c9_empirical)),
        (10, "expected loss closed form vs linearized Monte Carlo", Box::new(c10_expected_loss)),
        (11, "expected loss crossing", Box::new(c11_crossing)),
        (12, "finite-width loss crossing", Box::new(c12_finite_width)),
        (13, "trace identity", Box::new(c13_trace)),
        (14, "Weyl and row-sum inequalities", Box::new(c14_inequalities)),
        (15, "energy distance and permutation calibration", Box::new(c15_statistics)),
    ];
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = Vec::new();
    for (id, name, check) in &criteria {
        if !wanted.is_empty() && !wanted.contains(id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let status = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {status} {name}: {} [{:.1}s]",
            result.detail,
            start.elapsed().as_secs_f64()
        );
        if !result.pass {
            failed.push(*id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
