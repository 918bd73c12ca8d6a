use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use glu_ntk_core::data::{sample_gaussian_data, teacher_targets};
use glu_ntk_core::dynamics::train_single;
use glu_ntk_core::stats::{energy_distance, permutation_test, require_group_sizes, Point};
use glu_ntk_core::{derive_stream_seed, Activation, Arch, Error, ExperimentConfig};

use super::UsageError;
use crate::report::{Chart, RunContext, Series, Table};

pub const GAP_SCHEMA: &str = "glu-ntk.gap-points.v1";
pub const MIN_GROUP_POINTS: usize = 5;

#[derive(Debug, Clone, Serialize)]
pub struct GapOptions {
    pub n: usize,
    pub d: usize,
    /// Held-out set size; defaults to `n` at the CLI.
    pub eval_n: usize,
    pub widths: Vec<usize>,
    pub etas: Vec<f64>,
    pub steps: usize,
    /// Record a point every this many steps (step 0 excluded).
    pub snapshot_every: usize,
    pub seeds: usize,
    pub base_seed: u64,
    pub arch_a: Arch,
    pub arch_b: Arch,
    pub activation: Activation,
    pub num_perms: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapPoint {
    pub group: usize,
    pub arch: Arch,
    pub m: usize,
    pub eta: f64,
    pub rep: usize,
    pub seed: u64,
    pub step: usize,
    pub train_loss: f64,
    /// Eval loss minus train loss.
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapResult {
    pub points: Vec<GapPoint>,
    /// `(group, m, eta, rep, message)` for runs dropped after divergence.
    pub diverged: Vec<(usize, usize, f64, usize, String)>,
    pub energy: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy)]
struct Task {
    group: usize,
    arch: Arch,
    m: usize,
    eta: f64,
    rep: usize,
    seed: u64,
}

pub fn run_gap_scatter(opts: &GapOptions, ctx: Option<&mut RunContext>) -> Result<GapResult> {
    if opts.widths.is_empty() || opts.etas.is_empty() || opts.seeds == 0 {
        return Err(UsageError("gap grid needs at least one width, one eta and one seed".into()).into());
    }
    if opts.snapshot_every == 0 {
        return Err(UsageError("snapshot-every must be >= 1".into()).into());
    }
    ExperimentConfig::lecun(opts.n, opts.d, 1)?;
    ExperimentConfig::lecun(opts.eval_n, opts.d, 1)?;

    let teacher = derive_stream_seed(opts.base_seed, "teacher")?;
    let data_seeds: Vec<u64> = (0..opts.seeds)
        .map(|i| derive_stream_seed(opts.base_seed, &format!("gap-data/{i}")))
        .collect::<Result<_, _>>()?;
    let eval_seeds: Vec<u64> = (0..opts.seeds)
        .map(|i| derive_stream_seed(opts.base_seed, &format!("gap-eval/{i}")))
        .collect::<Result<_, _>>()?;
    let sets = (0..opts.seeds)
        .map(|i| -> Result<_> {
            let x = sample_gaussian_data(opts.n, opts.d, data_seeds[i])?;
            let ex = sample_gaussian_data(opts.eval_n, opts.d, eval_seeds[i])?;
            let y = teacher_targets(&x, teacher)?;
            let ey = teacher_targets(&ex, teacher)?;
            Ok((x, y, ex, ey))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut tasks = Vec::new();
    for (group, arch) in [(0, opts.arch_a), (1, opts.arch_b)] {
        for &m in &opts.widths {
            for &eta in &opts.etas {
                for rep in 0..opts.seeds {
                    let seed = derive_stream_seed(opts.base_seed, &format!("gap/{group}/{rep}"))?;
                    tasks.push(Task { group, arch, m, eta, rep, seed });
                }
            }
        }
    }

    let outcomes = tasks
        .par_iter()
        .map(|t| -> Result<std::result::Result<Vec<GapPoint>, String>> {
            let (x, y, ex, ey) = &sets[t.rep];
            let cfg = ExperimentConfig::lecun(opts.n, opts.d, t.m)?
                .with_arch(t.arch)
                .with_activation(opts.activation)
                .with_seed(t.seed);
            let run = match train_single(&cfg, x, y, t.eta, opts.steps, Some((ex, ey)), opts.snapshot_every) {
                Ok(r) => r,
                Err(e @ Error::Divergence { .. }) => return Ok(Err(e.to_string())),
                Err(e) => return Err(e.into()),
            };
            Ok(Ok(run
                .eval_losses
                .iter()
                .filter(|(step, _)| *step > 0)
                .map(|&(step, eval)| GapPoint {
                    group: t.group,
                    arch: t.arch,
                    m: t.m,
                    eta: t.eta,
                    rep: t.rep,
                    seed: t.seed,
                    step,
                    train_loss: run.losses[step],
                    gap: eval - run.losses[step],
                })
                .collect()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut points = Vec::new();
    let mut diverged = Vec::new();
    for (t, o) in tasks.iter().zip(outcomes) {
        match o {
            Ok(p) => points.extend(p),
            Err(msg) => diverged.push((t.group, t.m, t.eta, t.rep, msg)),
        }
    }
    let group = |g: usize| -> Vec<Point> {
        points.iter().filter(|p| p.group == g).map(|p| [p.train_loss, p.gap]).collect()
    };
    let (a, b) = (group(0), group(1));
    require_group_sizes(a.len(), b.len(), MIN_GROUP_POINTS)?;
    let energy = energy_distance(&a, &b)?;
    let perm_seed = derive_stream_seed(opts.base_seed, "perm")?;
    let p_value = permutation_test(&a, &b, opts.num_perms, perm_seed)?;
    let result = GapResult {
        points,
        diverged,
        energy,
        p_value,
    };

    if let Some(ctx) = ctx {
        ctx.set_config(opts)?;
        ctx.seed("teacher", derive_stream_seed(teacher, "teacher")?);
        ctx.seed("perm", derive_stream_seed(perm_seed, "permutation")?);
        for i in 0..opts.seeds {
            ctx.seed(format!("gap-data/{i}"), derive_stream_seed(data_seeds[i], "data")?);
            ctx.seed(format!("gap-eval/{i}"), derive_stream_seed(eval_seeds[i], "data")?);
        }
        for t in tasks.iter().filter(|t| t.m == opts.widths[0] && t.eta == opts.etas[0]) {
            ctx.seed(format!("gap/{}/{}/params", t.group, t.rep), derive_stream_seed(t.seed, "params")?);
        }
        write_outputs(&result, ctx)?;
    }
    Ok(result)
}

fn write_outputs(res: &GapResult, ctx: &mut RunContext) -> Result<()> {
    let mut t = Table::new(
        "gap_points",
        GAP_SCHEMA,
        &["group", "arch", "m", "eta", "rep", "seed", "step", "train_loss", "gap"],
    );
    for p in &res.points {
        t.push(vec![
            p.group.into(),
            p.arch.to_string().into(),
            p.m.into(),
            p.eta.into(),
            p.rep.into(),
            p.seed.into(),
            p.step.into(),
            p.train_loss.into(),
            p.gap.into(),
        ]);
    }
    ctx.table(&t)?;
    ctx.json(
        "gap_test",
        &serde_json::json!({
            "energy_distance": res.energy,
            "p_value": res.p_value,
            "points_a": res.points.iter().filter(|p| p.group == 0).count(),
            "points_b": res.points.iter().filter(|p| p.group == 1).count(),
            "diverged_runs": res.diverged,
        }),
    )?;
    let group = |g: usize| {
        res.points
            .iter()
            .filter(|p| p.group == g)
            .map(|p| (p.train_loss, p.gap))
            .collect()
    };
    let chart = Chart::new(
        &format!("Generalization gap vs training loss (p = {:.3})", res.p_value),
        "train loss",
        "eval - train",
    )
    .with(Series::scatter("group A", group(0)))
    .with(Series::scatter("group B", group(1)));
    ctx.chart("gap", &chart)?;
    Ok(())
}
