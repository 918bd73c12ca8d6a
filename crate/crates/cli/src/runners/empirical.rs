use anyhow::Result;
use serde::Serialize;

use glu_ntk_core::data::sample_gaussian_data;
use glu_ntk_core::empirical::{empirical_ntk, init_seed};
use glu_ntk_core::kernel::{expected_ntk_glu, expected_ntk_plain};
use glu_ntk_core::{derive_stream_seed, Activation, Arch, ExperimentConfig, KernelMatrix};

use crate::report::{Cell, RunContext, Table};

pub const NTK_SCHEMA: &str = "glu-ntk.empirical-ntk.v1";

#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalOptions {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub arch: Arch,
    pub activation: Activation,
    pub inits: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct EmpiricalResult {
    pub empirical: KernelMatrix,
    pub closed_form: Option<KernelMatrix>,
    /// `‖K_emp − K_exp‖_F / ‖K_exp‖_F` when a closed form exists.
    pub rel_frobenius_error: Option<f64>,
}

/// Empirical NTK of `cfg` averaged over `inits` draws and, for ReLU, its
/// closed-form expectation.
pub fn empirical_vs_closed_form(cfg: &ExperimentConfig, inits: usize, data_seed: u64) -> Result<EmpiricalResult> {
    let x = sample_gaussian_data(cfg.n, cfg.d, data_seed)?;
    let empirical = empirical_ntk(cfg, &x, inits)?;
    let closed_form = match cfg.activation {
        Activation::ReLU => Some(match cfg.arch {
            Arch::Plain => expected_ntk_plain(&x, cfg)?,
            Arch::Gated => expected_ntk_glu(&x, cfg)?,
        }),
        _ => None,
    };
    let rel_frobenius_error = match &closed_form {
        Some(k) => Some(empirical.mat.relative_frobenius_error(&k.mat)?),
        None => None,
    };
    Ok(EmpiricalResult {
        empirical,
        closed_form,
        rel_frobenius_error,
    })
}

pub fn run_empirical(opts: &EmpiricalOptions, ctx: &mut RunContext) -> Result<EmpiricalResult> {
    ctx.set_config(opts)?;
    let cfg = ExperimentConfig::lecun(opts.n, opts.d, opts.m)?
        .with_arch(opts.arch)
        .with_activation(opts.activation)
        .with_seed(opts.seed);
    let res = empirical_vs_closed_form(&cfg, opts.inits, opts.seed)?;
    ctx.seed("data", derive_stream_seed(opts.seed, "data")?);
    for k in 0..opts.inits {
        ctx.seed(format!("ntk-init/{k}/params"), derive_stream_seed(init_seed(opts.seed, k)?, "params")?);
    }

    let mut t = Table::new("ntk", NTK_SCHEMA, &["i", "j", "empirical", "closed_form"]);
    let n = opts.n;
    for i in 0..n {
        for j in i..n {
            let cf = res.closed_form.as_ref().map_or(Cell::Empty, |k| k.mat.get(i, j).into());
            t.push(vec![i.into(), j.into(), res.empirical.mat.get(i, j).into(), cf]);
        }
    }
    ctx.table(&t)?;
    ctx.json(
        "ntk_summary",
        &serde_json::json!({ "rel_frobenius_error": res.rel_frobenius_error, "inits": opts.inits }),
    )?;
    Ok(res)
}
