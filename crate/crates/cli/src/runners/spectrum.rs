use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use glu_ntk_core::data::{sample_gaussian_data, DataMatrix};
use glu_ntk_core::kernel::{expected_ntk_glu, expected_ntk_plain, structured_ntk_glu, structured_ntk_plain};
use glu_ntk_core::spectral::{eig_sym, theory_estimates};
use glu_ntk_core::{Arch, ExperimentConfig, KernelMatrix, SpectralSummary, TheoryEstimate};

use super::{rel_err, rep_seed, UsageError};
use crate::report::{Cell, Chart, RunContext, Series, Table};

pub const SPECTRUM_SCHEMA: &str = "glu-ntk.spectrum.v1";
pub const SPECTRUM_SUMMARY_SCHEMA: &str = "glu-ntk.spectrum-summary.v1";
pub const SWEEP_SCHEMA: &str = "glu-ntk.sweep-cond.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum KernelSource {
    /// First-order structured approximation.
    Structured,
    /// Arc-cosine closed form (ReLU).
    Expected,
}

/// Plain and gated kernels of `x` at width `m` under LeCun initialization.
pub fn kernel_pair(x: &DataMatrix, m: usize, source: KernelSource) -> Result<(KernelMatrix, KernelMatrix)> {
    Ok(match source {
        KernelSource::Structured => (structured_ntk_plain(x, m), structured_ntk_glu(x, m)),
        KernelSource::Expected => {
            let cfg = ExperimentConfig::lecun(x.n(), x.d(), m)?;
            (
                expected_ntk_plain(x, &cfg)?,
                expected_ntk_glu(x, &cfg.with_arch(Arch::Gated))?,
            )
        }
    })
}

fn input_data(n: usize, d: usize, seed: u64, sphere: bool) -> Result<DataMatrix> {
    let x = sample_gaussian_data(n, d, seed)?;
    Ok(if sphere { x.project_to_sphere()? } else { x })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumOptions {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub seed: u64,
    pub kernel: KernelSource,
    /// Rescale every input row to norm √d before building kernels.
    pub sphere: bool,
}

#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub plain: SpectralSummary,
    pub gated: SpectralSummary,
    pub theory: TheoryEstimate,
}

pub fn run_spectrum(opts: &SpectrumOptions, ctx: &mut RunContext) -> Result<SpectrumResult> {
    ctx.set_config(opts)?;
    ctx.seed("data", glu_ntk_core::derive_stream_seed(opts.seed, "data")?);
    let x = input_data(opts.n, opts.d, opts.seed, opts.sphere)?;
    let (k, kt) = kernel_pair(&x, opts.m, opts.kernel)?;
    let (plain, gated) = rayon::join(|| eig_sym(&k.mat), || eig_sym(&kt.mat));
    let (plain, gated) = (plain?, gated?);
    let theory = theory_estimates(opts.m, opts.d, opts.n)?;

    let mut t = Table::new("spectrum", SPECTRUM_SCHEMA, &["index", "lambda_plain", "lambda_gated"]);
    for i in 0..opts.n {
        t.push(vec![i.into(), plain.eigenvalues[i].into(), gated.eigenvalues[i].into()]);
    }
    ctx.table(&t)?;

    let mut s = Table::new(
        "summary",
        SPECTRUM_SUMMARY_SCHEMA,
        &[
            "model",
            "lambda_max_num",
            "lambda_max_thy",
            "lambda_max_thy_upper",
            "lambda_min_num",
            "lambda_min_thy",
            "kappa_num",
            "kappa_thy",
        ],
    );
    s.push(vec![
        "plain".into(),
        plain.lambda_max.into(),
        theory.lambda_max_plain.into(),
        Cell::Empty,
        plain.lambda_min.into(),
        theory.lambda_min_plain.into(),
        plain.kappa.into(),
        theory.kappa_plain.into(),
    ]);
    s.push(vec![
        "gated".into(),
        gated.lambda_max.into(),
        theory.lambda_max_glu_lower.into(),
        theory.lambda_max_glu_upper.into(),
        gated.lambda_min.into(),
        theory.lambda_min_glu.into(),
        gated.kappa.into(),
        theory.kappa_glu.into(),
    ]);
    ctx.table(&s)?;
    ctx.json("theory", &theory)?;

    let idx = |v: &[f64]| v.iter().enumerate().map(|(i, &l)| ((i + 1) as f64, l)).collect();
    let chart = Chart::new("NTK spectra", "index", "eigenvalue")
        .log_y()
        .with(Series::line("plain K", idx(&plain.eigenvalues)))
        .with(Series::line("gated K~", idx(&gated.eigenvalues)));
    ctx.chart("spectrum", &chart)?;
    Ok(SpectrumResult { plain, gated, theory })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOptions {
    pub d_list: Vec<usize>,
    /// `n = n_ratio · d`.
    pub n_ratio: f64,
    /// `m = m_ratio · d`.
    pub m_ratio: f64,
    pub seeds: usize,
    pub base_seed: u64,
    pub kernel: KernelSource,
    pub sphere: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub rep: usize,
    pub seed: u64,
    pub model: Arch,
    pub lambda_max_num: f64,
    /// Lower bound for the gated model.
    pub lambda_max_thy: f64,
    pub lambda_max_thy_upper: Option<f64>,
    pub lambda_min_num: f64,
    pub lambda_min_thy: f64,
    pub kappa_num: Option<f64>,
    pub kappa_thy: f64,
}

fn scaled(d: usize, ratio: f64) -> usize {
    (d as f64 * ratio).round().max(1.0) as usize
}

pub fn run_condition_sweep(opts: &SweepOptions, mut ctx: Option<&mut RunContext>) -> Result<Vec<SweepRow>> {
    if opts.d_list.is_empty() {
        return Err(UsageError("d list must not be empty".into()).into());
    }
    if let Some(&d) = opts.d_list.iter().find(|&&d| d < 2) {
        return Err(UsageError(format!("every d must be >= 2, got {d}")).into());
    }
    if opts.seeds == 0 {
        return Err(UsageError("need at least one seed".into()).into());
    }
    let mut tasks = Vec::new();
    for &d in &opts.d_list {
        for rep in 0..opts.seeds {
            tasks.push((d, rep, rep_seed(opts.base_seed, rep)?));
        }
    }
    if let Some(ctx) = ctx.as_deref_mut() {
        ctx.set_config(opts)?;
        for &(_, rep, seed) in tasks.iter().take(opts.seeds) {
            ctx.seed(format!("rep/{rep}"), seed);
            ctx.seed(format!("rep/{rep}/data"), glu_ntk_core::derive_stream_seed(seed, "data")?);
        }
    }
    let per_task = tasks
        .par_iter()
        .map(|&(d, rep, seed)| -> Result<[SweepRow; 2]> {
            let n = scaled(d, opts.n_ratio).max(2);
            let m = scaled(d, opts.m_ratio);
            let x = input_data(n, d, seed, opts.sphere)?;
            let (k, kt) = kernel_pair(&x, m, opts.kernel)?;
            let sp = eig_sym(&k.mat)?;
            let sg = eig_sym(&kt.mat)?;
            let th = theory_estimates(m, d, n)?;
            Ok([
                SweepRow {
                    d,
                    n,
                    m,
                    rep,
                    seed,
                    model: Arch::Plain,
                    lambda_max_num: sp.lambda_max,
                    lambda_max_thy: th.lambda_max_plain,
                    lambda_max_thy_upper: None,
                    lambda_min_num: sp.lambda_min,
                    lambda_min_thy: th.lambda_min_plain,
                    kappa_num: sp.kappa,
                    kappa_thy: th.kappa_plain,
                },
                SweepRow {
                    d,
                    n,
                    m,
                    rep,
                    seed,
                    model: Arch::Gated,
                    lambda_max_num: sg.lambda_max,
                    lambda_max_thy: th.lambda_max_glu_lower,
                    lambda_max_thy_upper: Some(th.lambda_max_glu_upper),
                    lambda_min_num: sg.lambda_min,
                    lambda_min_thy: th.lambda_min_glu,
                    kappa_num: sg.kappa,
                    kappa_thy: th.kappa_glu,
                },
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<SweepRow> = per_task.into_iter().flatten().collect();

    if let Some(ctx) = ctx {
        write_sweep(&rows, ctx)?;
    }
    Ok(rows)
}

fn write_sweep(rows: &[SweepRow], ctx: &mut RunContext) -> Result<()> {
    let mut t = Table::new(
        "sweep",
        SWEEP_SCHEMA,
        &[
            "d",
            "n",
            "m",
            "rep",
            "seed",
            "model",
            "lambda_max_num",
            "lambda_max_thy",
            "lambda_max_thy_upper",
            "lambda_min_num",
            "lambda_min_thy",
            "kappa_num",
            "kappa_thy",
            "rel_err_lambda_max",
            "rel_err_lambda_min",
        ],
    );
    for r in rows {
        t.push(vec![
            r.d.into(),
            r.n.into(),
            r.m.into(),
            r.rep.into(),
            r.seed.into(),
            r.model.to_string().into(),
            r.lambda_max_num.into(),
            r.lambda_max_thy.into(),
            r.lambda_max_thy_upper.into(),
            r.lambda_min_num.into(),
            r.lambda_min_thy.into(),
            r.kappa_num.into(),
            r.kappa_thy.into(),
            rel_err(r.lambda_max_num, r.lambda_max_thy).into(),
            rel_err(r.lambda_min_num, r.lambda_min_thy).into(),
        ]);
    }
    ctx.table(&t)?;

    let series = |model: Arch, f: fn(&SweepRow) -> Option<f64>| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|r| r.model == model)
            .filter_map(|r| f(r).map(|v| (r.d as f64, v)))
            .collect()
    };
    let theory = |model: Arch, f: fn(&SweepRow) -> f64| -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.model == model && r.rep == 0)
            .map(|r| (r.d as f64, f(r)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    };
    let panels: [(&str, &str, fn(&SweepRow) -> Option<f64>, fn(&SweepRow) -> f64); 3] = [
        ("lambda_max", "largest eigenvalue", |r| Some(r.lambda_max_num), |r| r.lambda_max_thy),
        ("lambda_min", "smallest eigenvalue", |r| Some(r.lambda_min_num), |r| r.lambda_min_thy),
        ("kappa", "condition number", |r| r.kappa_num, |r| r.kappa_thy),
    ];
    for (name, label, num, thy) in panels {
        let chart = Chart::new(&format!("{label}: theory vs numeric"), "d", label)
            .log_x()
            .log_y()
            .with(Series::scatter("plain numeric", series(Arch::Plain, num)))
            .with(Series::line("plain theory", theory(Arch::Plain, thy)))
            .with(Series::scatter("gated numeric", series(Arch::Gated, num)))
            .with(Series::line("gated theory", theory(Arch::Gated, thy)));
        ctx.chart(&format!("sweep_{name}"), &chart)?;
    }
    Ok(())
}
