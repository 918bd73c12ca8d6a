use std::path::PathBuf;

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use glu_ntk_core::data::{load_idx, make_targets, IdxOptions, LabelEncoding, TargetKind};
use glu_ntk_core::dynamics::{crossing_step_estimate, train_finite_width};
use glu_ntk_core::{
    derive_stream_seed, Activation, Dataset, Error, ExperimentConfig, LossTrajectory, ModeDecomposition,
    Provenance, TrajectorySource,
};

use super::spectrum::{kernel_pair, KernelSource};
use super::{rep_seed, UsageError};
use crate::report::{Cell, Chart, RunContext, Series, Table};

pub const CURVES_SCHEMA: &str = "glu-ntk.crossing-curves.v1";
pub const CROSSINGS_SCHEMA: &str = "glu-ntk.crossings.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CrossingSource {
    /// Closed-form expected loss of kernel gradient descent.
    Expected,
    /// Full-batch gradient descent on actual networks.
    FiniteWidth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CrossingData {
    Gaussian,
    Idx {
        images: PathBuf,
        labels: PathBuf,
        limit: Option<usize>,
        classes: (u8, u8),
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossingOptions {
    pub source: CrossingSource,
    pub data: CrossingData,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    /// Step size on the loss `‖z − y‖²/2n`; the kernel step is `eta/n`.
    pub eta: f64,
    pub steps: usize,
    pub seeds: usize,
    pub base_seed: u64,
    pub activation: Activation,
    /// Kernel used by the expected source.
    pub kernel: KernelSource,
    /// Redraw Gaussian-data targets up to this many times until
    /// `Yᵀ(K − K̃)Y ≥ 0`. Zero keeps the first draw.
    pub max_resamples: usize,
    /// Write every `stride`-th step to the curves file (the last step is
    /// always written).
    pub stride: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossingRun {
    pub rep: usize,
    pub seed: u64,
    pub trajectory: Option<LossTrajectory>,
    /// Single-mode late-stage estimate, when its preconditions hold.
    pub estimate: Option<f64>,
    pub estimate_note: Option<String>,
    /// Target redraws used; `None` when targets are fixed by the data.
    pub resamples: Option<usize>,
    pub targets_seed: Option<u64>,
    /// `Yᵀ(K − K̃)Y` for the expected source.
    pub quadratic_gap: Option<f64>,
    pub lambda_max_plain: Option<f64>,
    pub lambda_max_gated: Option<f64>,
    pub divergence: Option<String>,
}

impl CrossingRun {
    pub fn crossing_index(&self) -> Option<usize> {
        self.trajectory.as_ref().and_then(|t| t.crossing_index)
    }
}

fn load_data(opts: &CrossingOptions, seed: u64) -> Result<Dataset> {
    Ok(match &opts.data {
        CrossingData::Gaussian => Dataset::gaussian(opts.n, opts.d, TargetKind::RandomSign, seed)?,
        CrossingData::Idx {
            images,
            labels,
            limit,
            classes,
        } => load_idx(
            images,
            labels,
            &IdxOptions {
                limit: *limit,
                normalize: true,
                encoding: LabelEncoding::Binary(classes.0, classes.1),
            },
        )?,
    })
}

fn expected_run(opts: &CrossingOptions, rep: usize, seed: u64) -> Result<CrossingRun> {
    let mut data = load_data(opts, seed)?;
    let n = data.n();
    let (k, kt) = kernel_pair(&data.data, opts.m, opts.kernel)?;
    let diff = k.mat.sub(&kt.mat)?;
    let mut resamples = None;
    let mut targets_seed = None;
    if matches!(opts.data, CrossingData::Gaussian) {
        let mut used = 0;
        let mut tseed = seed;
        while diff.quadratic_form(&data.targets)? < 0.0 && used < opts.max_resamples {
            used += 1;
            tseed = derive_stream_seed(seed, &format!("resample/{used}"))?;
            data.targets = make_targets(TargetKind::RandomSign, n, tseed)?;
        }
        resamples = Some(used);
        targets_seed = Some(tseed);
    }
    let y = &data.targets;
    let quadratic_gap = diff.quadratic_form(y)?;

    let eta_k = opts.eta / n as f64;
    let sigma_v2 = 1.0 / opts.m as f64;
    let (dp, dg) = rayon::join(|| ModeDecomposition::new(&k, y), || ModeDecomposition::new(&kt, y));
    let (dp, dg) = (dp?, dg?);
    let traj = LossTrajectory::new(
        dp.expected_loss_curve(sigma_v2, eta_k, opts.steps),
        dg.expected_loss_curve(sigma_v2, eta_k, opts.steps),
        opts.eta,
        TrajectorySource::ExpectedClosedForm,
    )?;
    let (estimate, estimate_note) = match crossing_step_estimate(
        dp.lambda_min(),
        dg.lambda_min(),
        dp.betas[0],
        dg.betas[0],
        sigma_v2,
        eta_k,
    ) {
        Ok(e) => (Some(e), None),
        Err(e @ Error::Regime(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    Ok(CrossingRun {
        rep,
        seed,
        trajectory: Some(traj),
        estimate,
        estimate_note,
        resamples,
        targets_seed,
        quadratic_gap: Some(quadratic_gap),
        lambda_max_plain: Some(dp.lambda_max()),
        lambda_max_gated: Some(dg.lambda_max()),
        divergence: None,
    })
}

fn finite_width_run(opts: &CrossingOptions, rep: usize, seed: u64) -> Result<CrossingRun> {
    let data = load_data(opts, seed)?;
    let cfg = ExperimentConfig::lecun(data.n(), data.data.d(), opts.m)?
        .with_activation(opts.activation)
        .with_seed(seed)
        .with_eta(opts.eta)
        .with_steps(opts.steps);
    let (trajectory, divergence) = match train_finite_width(&cfg, &data, opts.eta, opts.steps) {
        Ok(t) => (Some(t), None),
        Err(e @ Error::Divergence { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let fixed_targets = matches!(data.provenance, Provenance::IdxFile { .. });
    Ok(CrossingRun {
        rep,
        seed,
        trajectory,
        estimate: None,
        estimate_note: None,
        resamples: None,
        targets_seed: (!fixed_targets).then_some(seed),
        quadratic_gap: None,
        lambda_max_plain: None,
        lambda_max_gated: None,
        divergence,
    })
}

pub fn run_loss_crossing(opts: &CrossingOptions, mut ctx: Option<&mut RunContext>) -> Result<Vec<CrossingRun>> {
    if opts.seeds == 0 {
        return Err(UsageError("need at least one seed".into()).into());
    }
    if opts.stride == 0 {
        return Err(UsageError("stride must be >= 1".into()).into());
    }
    if !(opts.eta > 0.0 && opts.eta.is_finite()) {
        return Err(UsageError(format!("eta must be positive, got {}", opts.eta)).into());
    }
    if opts.source == CrossingSource::Expected && opts.kernel == KernelSource::Expected && opts.activation != Activation::ReLU {
        return Err(Error::UnsupportedClosedForm(opts.activation).into());
    }
    // Gaussian data with n=1 would fail deep inside the kernel code
    if matches!(opts.data, CrossingData::Gaussian) {
        ExperimentConfig::lecun(opts.n, opts.d, opts.m)?;
    }
    let seeds: Vec<u64> = (0..opts.seeds).map(|r| rep_seed(opts.base_seed, r)).collect::<Result<_, _>>()?;
    let runs = seeds
        .par_iter()
        .enumerate()
        .map(|(rep, &seed)| match opts.source {
            CrossingSource::Expected => expected_run(opts, rep, seed),
            CrossingSource::FiniteWidth => finite_width_run(opts, rep, seed),
        })
        .collect::<Result<Vec<_>>>()?;

    if let Some(ctx) = ctx.as_deref_mut() {
        ctx.set_config(opts)?;
        for r in &runs {
            ctx.seed(format!("rep/{}", r.rep), r.seed);
            if matches!(opts.data, CrossingData::Gaussian) {
                ctx.seed(format!("rep/{}/data", r.rep), derive_stream_seed(r.seed, "data")?);
            }
            if let Some(t) = r.targets_seed {
                ctx.seed(format!("rep/{}/targets", r.rep), derive_stream_seed(t, "targets")?);
            }
            if opts.source == CrossingSource::FiniteWidth {
                ctx.seed(format!("rep/{}/params", r.rep), derive_stream_seed(r.seed, "params")?);
            }
        }
        write_outputs(opts, &runs, ctx)?;
    }
    Ok(runs)
}

fn write_outputs(opts: &CrossingOptions, runs: &[CrossingRun], ctx: &mut RunContext) -> Result<()> {
    let mut curves = Table::new(
        "curves",
        CURVES_SCHEMA,
        &["rep", "seed", "step", "loss_plain", "loss_gated"],
    );
    for r in runs {
        if let Some(t) = &r.trajectory {
            let last = t.steps();
            for step in (0..=last).filter(|s| s % opts.stride == 0 || *s == last) {
                curves.push(vec![
                    r.rep.into(),
                    r.seed.into(),
                    step.into(),
                    t.losses_plain[step].into(),
                    t.losses_gated[step].into(),
                ]);
            }
        }
    }
    ctx.table(&curves)?;

    let mut cross = Table::new(
        "crossings",
        CROSSINGS_SCHEMA,
        &[
            "rep",
            "seed",
            "source",
            "eta",
            "crossing_index",
            "crossing_estimate",
            "resamples",
            "quadratic_gap",
            "lambda_max_plain",
            "lambda_max_gated",
            "final_loss_plain",
            "final_loss_gated",
            "diverged",
        ],
    );
    let source = match opts.source {
        CrossingSource::Expected => "expected",
        CrossingSource::FiniteWidth => "finite_width",
    };
    for r in runs {
        let last = |f: fn(&LossTrajectory) -> &Vec<f64>| r.trajectory.as_ref().and_then(|t| f(t).last().copied());
        cross.push(vec![
            r.rep.into(),
            r.seed.into(),
            source.into(),
            opts.eta.into(),
            r.crossing_index().into(),
            r.estimate.into(),
            r.resamples.into(),
            r.quadratic_gap.into(),
            r.lambda_max_plain.into(),
            r.lambda_max_gated.into(),
            last(|t| &t.losses_plain).into(),
            last(|t| &t.losses_gated).into(),
            r.divergence.as_deref().map_or(Cell::from(false), |_| Cell::from(true)),
        ]);
    }
    ctx.table(&cross)?;

    if let Some((r, t)) = runs.iter().find_map(|r| r.trajectory.as_ref().map(|t| (r, t))) {
        let pts = |v: &[f64]| {
            v.iter()
                .enumerate()
                .filter(|(s, _)| s % opts.stride == 0)
                .map(|(s, &l)| ((s + 1) as f64, l))
                .collect()
        };
        let chart = Chart::new(&format!("Loss curves (rep {}, eta {})", r.rep, opts.eta), "step + 1", "loss")
            .log_x()
            .log_y()
            .with(Series::line("plain", pts(&t.losses_plain)))
            .with(Series::line("gated", pts(&t.losses_gated)));
        ctx.chart("crossing", &chart)?;
    }
    Ok(())
}
