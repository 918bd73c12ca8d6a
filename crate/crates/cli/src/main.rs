use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use glu_ntk_cli::runners::crossing::{run_loss_crossing, CrossingData, CrossingOptions, CrossingSource};
use glu_ntk_cli::runners::empirical::{run_empirical, EmpiricalOptions};
use glu_ntk_cli::runners::gap::{run_gap_scatter, GapOptions};
use glu_ntk_cli::runners::idx_info::{run_idx_info, IdxInfoOptions};
use glu_ntk_cli::runners::rmt::{run_rmt_check, RmtOptions};
use glu_ntk_cli::runners::spectrum::{run_condition_sweep, run_spectrum, KernelSource, SpectrumOptions, SweepOptions};
use glu_ntk_cli::runners::toy2::{run_toy2, Toy2Options};
use glu_ntk_cli::runners::{median, rel_err, UsageError};
use glu_ntk_cli::{Format, RunContext};
use glu_ntk_core::{Activation, Arch};

#[derive(Parser, Debug)]
#[command(name = "glu-ntk", version, about = "Spectra and training dynamics of plain vs gated two-layer NTKs")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "GLU_NTK_OUT", default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Table format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

fn parse_n(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if n < 2 {
        return Err(format!("n must be >= 2, got {n}"));
    }
    Ok(n)
}

fn parse_positive(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v == 0 {
        return Err("must be >= 1".into());
    }
    Ok(v)
}

fn parse_arch(s: &str) -> Result<Arch, String> {
    match s {
        "plain" => Ok(Arch::Plain),
        "gated" | "glu" => Ok(Arch::Gated),
        _ => Err(format!("unknown arch '{s}' (expected plain or gated)")),
    }
}

fn parse_act(s: &str) -> Result<Activation, String> {
    match s {
        "relu" => Ok(Activation::ReLU),
        "gelu" => Ok(Activation::GELU),
        "silu" => Ok(Activation::SiLU),
        _ => Err(format!("unknown activation '{s}' (expected relu, gelu or silu)")),
    }
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected two comma-separated numbers, got '{s}'"));
    }
    let a = parts[0].trim().parse::<f64>().map_err(|e| e.to_string())?;
    let b = parts[1].trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok([a, b])
}

fn parse_classes(s: &str) -> Result<(u8, u8), String> {
    let (a, b) = s.split_once(',').ok_or("expected two labels such as 0,1")?;
    let a = a.trim().parse::<u8>().map_err(|e| e.to_string())?;
    let b = b.trim().parse::<u8>().map_err(|e| e.to_string())?;
    if a == b {
        return Err("the two classes must differ".into());
    }
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Preset {
    /// σ_w² = σ_p² = 1/d, σ_v² = 1/m.
    Lecun,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum DataKind {
    Gaussian,
    Idx,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalues of K and K~ on one Gaussian draw, with theory estimates.
    #[command(after_help = "Outputs:\n  \
        spectrum.csv  index, lambda_plain, lambda_gated (ascending)\n  \
        summary.csv   model, lambda_max_num, lambda_max_thy, lambda_max_thy_upper, lambda_min_num,\n                \
        lambda_min_thy, kappa_num, kappa_thy\n  \
        theory.json, spectrum.svg, manifest.json")]
    Spectrum {
        #[arg(long, value_enum, default_value = "lecun")]
        preset: Preset,
        #[arg(short = 'n', value_parser = parse_n, default_value = "256")]
        n: usize,
        #[arg(short = 'd', value_parser = parse_positive, default_value = "64")]
        d: usize,
        #[arg(short = 'm', value_parser = parse_positive, default_value = "512")]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "structured")]
        kernel: KernelSource,
        /// Rescale inputs to norm √d.
        #[arg(long)]
        sphere: bool,
    },
    /// Theory vs numeric extreme eigenvalues and condition numbers over d.
    #[command(after_help = "Outputs:\n  \
        sweep.csv  d, n, m, rep, seed, model, lambda_max_num, lambda_max_thy, lambda_max_thy_upper,\n             \
        lambda_min_num, lambda_min_thy, kappa_num, kappa_thy, rel_err_lambda_max, rel_err_lambda_min\n  \
        sweep_lambda_max.svg, sweep_lambda_min.svg, sweep_kappa.svg, manifest.json")]
    SweepCond {
        /// Comma-separated input dimensions.
        #[arg(long, value_delimiter = ',', default_value = "64,128,256")]
        d_list: Vec<usize>,
        #[arg(long, default_value_t = 4.0)]
        n_ratio: f64,
        #[arg(long, default_value_t = 8.0)]
        m_ratio: f64,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "structured")]
        kernel: KernelSource,
        #[arg(long)]
        sphere: bool,
    },
    /// Paired plain/gated loss curves and their crossing step.
    #[command(after_help = "Outputs:\n  \
        curves.csv     rep, seed, step, loss_plain, loss_gated\n  \
        crossings.csv  rep, seed, source, eta, crossing_index, crossing_estimate, resamples, quadratic_gap,\n                 \
        lambda_max_plain, lambda_max_gated, final_loss_plain, final_loss_gated, diverged\n  \
        crossing.svg, manifest.json\n\n\
        The loss is |z - y|^2 / 2n and --eta is its step size; the expected source therefore\n\
        runs kernel gradient descent with step eta/n.")]
    Crossing {
        #[arg(long, value_enum, default_value = "expected")]
        source: CrossingSource,
        #[arg(long, value_enum, default_value = "gaussian")]
        data: DataKind,
        /// IDX image file (with --data idx).
        #[arg(long)]
        images: Option<PathBuf>,
        /// IDX label file (with --data idx).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Keep at most this many IDX samples.
        #[arg(long)]
        limit: Option<usize>,
        /// The two IDX classes mapped to -1 and +1.
        #[arg(long, value_parser = parse_classes, default_value = "0,1")]
        classes: (u8, u8),
        #[arg(short = 'n', value_parser = parse_n, default_value = "400")]
        n: usize,
        #[arg(short = 'd', value_parser = parse_positive, default_value = "16")]
        d: usize,
        #[arg(short = 'm', value_parser = parse_positive, default_value = "2048")]
        m: usize,
        #[arg(long, value_parser = parse_act, default_value = "relu")]
        act: Activation,
        #[arg(long, default_value_t = 0.005)]
        eta: f64,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "structured")]
        kernel: KernelSource,
        /// Redraw Gaussian targets up to N times until Y'(K - K~)Y >= 0.
        #[arg(long, default_value_t = 0)]
        max_resamples: usize,
        /// Write every k-th step to curves.csv.
        #[arg(long, value_parser = parse_positive, default_value = "1")]
        stride: usize,
    },
    /// Two-sample kernel gradient descent in output space.
    #[command(after_help = "Outputs:\n  \
        toy2.csv       step, z1_plain, z2_plain, z1_gated, z2_gated, loss_plain, loss_gated\n  \
        toy2_axes.csv  model, eigenvalue, dir1, dir2, length\n  \
        toy2.svg, manifest.json")]
    Toy2 {
        /// Eigenvalues (top, bottom) of the plain kernel.
        #[arg(long, value_parser = parse_pair, default_value = "4,0.2")]
        spectrum_plain: [f64; 2],
        #[arg(long, value_parser = parse_pair, default_value = "2,0.5")]
        spectrum_gated: [f64; 2],
        /// Angle of the top eigenvector, in radians.
        #[arg(long, default_value_t = 0.4)]
        angle: f64,
        #[arg(long, value_parser = parse_pair, default_value = "1,-0.3", allow_hyphen_values = true)]
        z0: [f64; 2],
        #[arg(long, value_parser = parse_pair, default_value = "0,0", allow_hyphen_values = true)]
        y: [f64; 2],
        #[arg(long, default_value_t = 0.05)]
        eta: f64,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
    },
    /// Monte Carlo NTK over random inits vs the ReLU closed form.
    #[command(after_help = "Outputs:\n  \
        ntk.csv  i, j, empirical, closed_form (upper triangle; closed_form empty for gelu/silu)\n  \
        ntk_summary.json, manifest.json")]
    EmpiricalNtk {
        #[arg(short = 'n', value_parser = parse_n, default_value = "32")]
        n: usize,
        #[arg(short = 'd', value_parser = parse_positive, default_value = "16")]
        d: usize,
        #[arg(short = 'm', value_parser = parse_positive, default_value = "1024")]
        m: usize,
        #[arg(long, value_parser = parse_arch, default_value = "plain")]
        arch: Arch,
        #[arg(long, value_parser = parse_act, default_value = "relu")]
        act: Activation,
        #[arg(long, value_parser = parse_positive, default_value = "20")]
        inits: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generalization gap vs training loss for two architecture groups.
    #[command(after_help = "Outputs:\n  \
        gap_points.csv  group, arch, m, eta, rep, seed, step, train_loss, gap\n  \
        gap_test.json (energy distance, permutation p-value), gap.svg, manifest.json")]
    Gap(GapArgs),
    /// Random-matrix predictions against sampled ensembles.
    #[command(after_help = "Outputs:\n  \
        rmt.csv           check, n, d, theta, lambda_max, predicted_max, rel_err_max, tol_max,\n                    \
        lambda_min, predicted_min, rel_err_min, tol_min, pass\n  \
        mp_histogram.csv  bin_center, empirical_density, mp_density\n  \
        mp_histogram.svg, manifest.json")]
    RmtCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = parse_positive, default_value = "40")]
        bins: usize,
    },
    /// Header and label summary of IDX files.
    #[command(after_help = "Outputs:\n  idx_info.json, manifest.json")]
    IdxInfo {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct GapArgs {
    #[arg(short = 'n', value_parser = parse_n, default_value = "100")]
    n: usize,
    #[arg(short = 'd', value_parser = parse_positive, default_value = "16")]
    d: usize,
    /// Held-out set size (default: n).
    #[arg(long, value_parser = parse_n)]
    eval_n: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "64,256")]
    widths: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1")]
    etas: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    /// Checkpoint cadence (default: only the final step).
    #[arg(long)]
    snapshot_every: Option<usize>,
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_arch, default_value = "plain")]
    arch_a: Arch,
    #[arg(long, value_parser = parse_arch, default_value = "gated")]
    arch_b: Arch,
    #[arg(long, value_parser = parse_act, default_value = "relu")]
    act: Activation,
    #[arg(long, default_value_t = 999)]
    num_perms: usize,
}

fn name_of(cmd: &Command) -> &'static str {
    match cmd {
        Command::Spectrum { .. } => "spectrum",
        Command::SweepCond { .. } => "sweep-cond",
        Command::Crossing { .. } => "crossing",
        Command::Toy2 { .. } => "toy2",
        Command::EmpiricalNtk { .. } => "empirical-ntk",
        Command::Gap(_) => "gap",
        Command::RmtCheck { .. } => "rmt-check",
        Command::IdxInfo { .. } => "idx-info",
    }
}

fn run(cli: Cli) -> Result<String> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(UsageError("--threads must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let argv: Vec<String> = std::env::args().collect();
    let mut ctx = RunContext::new(&cli.out, name_of(&cli.command), argv, cli.format)?;
    let summary = match cli.command {
        Command::Spectrum {
            preset: Preset::Lecun,
            n,
            d,
            m,
            seed,
            kernel,
            sphere,
        } => {
            let r = run_spectrum(&SpectrumOptions { n, d, m, seed, kernel, sphere }, &mut ctx)?;
            format!(
                "spectrum n={n} d={d} m={m}: kappa(K)={:.4e} kappa(K~)={:.4e} lambda_max(K)={:.4e} (theory {:.4e})",
                r.plain.kappa.unwrap_or(f64::INFINITY),
                r.gated.kappa.unwrap_or(f64::INFINITY),
                r.plain.lambda_max,
                r.theory.lambda_max_plain
            )
        }
        Command::SweepCond {
            d_list,
            n_ratio,
            m_ratio,
            seeds,
            seed,
            kernel,
            sphere,
        } => {
            let opts = SweepOptions {
                d_list,
                n_ratio,
                m_ratio,
                seeds,
                base_seed: seed,
                kernel,
                sphere,
            };
            let rows = run_condition_sweep(&opts, Some(&mut ctx))?;
            let errs: Vec<f64> = rows
                .iter()
                .filter(|r| r.model == Arch::Plain)
                .map(|r| rel_err(r.lambda_max_num, r.lambda_max_thy))
                .collect();
            format!(
                "sweep-cond: {} rows, median rel. error of lambda_max(K) {:.3}",
                rows.len(),
                median(&errs).unwrap_or(f64::NAN)
            )
        }
        Command::Crossing {
            source,
            data,
            images,
            labels,
            limit,
            classes,
            n,
            d,
            m,
            act,
            eta,
            steps,
            seeds,
            seed,
            kernel,
            max_resamples,
            stride,
        } => {
            let data = match data {
                DataKind::Gaussian => CrossingData::Gaussian,
                DataKind::Idx => match (images, labels) {
                    (Some(images), Some(labels)) => CrossingData::Idx {
                        images,
                        labels,
                        limit,
                        classes,
                    },
                    _ => return Err(UsageError("--data idx needs --images and --labels".into()).into()),
                },
            };
            let opts = CrossingOptions {
                source,
                data,
                n,
                d,
                m,
                eta,
                steps,
                seeds,
                base_seed: seed,
                activation: act,
                kernel,
                max_resamples,
                stride,
            };
            let runs = run_loss_crossing(&opts, Some(&mut ctx))?;
            let found: Vec<usize> = runs.iter().filter_map(|r| r.crossing_index()).collect();
            let diverged = runs.iter().filter(|r| r.divergence.is_some()).count();
            let mean = if found.is_empty() {
                "none".to_string()
            } else {
                format!("{:.1}", found.iter().sum::<usize>() as f64 / found.len() as f64)
            };
            format!(
                "crossing: {}/{} runs cross (mean index {mean}), {diverged} diverged",
                found.len(),
                runs.len()
            )
        }
        Command::Toy2 {
            spectrum_plain,
            spectrum_gated,
            angle,
            z0,
            y,
            eta,
            steps,
        } => {
            let opts = Toy2Options {
                spectrum_plain,
                spectrum_gated,
                angle,
                y,
                z0,
                eta,
                steps,
            };
            let r = run_toy2(&opts, &mut ctx)?;
            let last = |v: &[[f64; 2]]| {
                let z = v[v.len() - 1];
                (z[0] - y[0]).hypot(z[1] - y[1])
            };
            format!(
                "toy2: final distance to target plain {:.3e}, gated {:.3e}",
                last(&r.plain),
                last(&r.gated)
            )
        }
        Command::EmpiricalNtk {
            n,
            d,
            m,
            arch,
            act,
            inits,
            seed,
        } => {
            let opts = EmpiricalOptions {
                n,
                d,
                m,
                arch,
                activation: act,
                inits,
                seed,
            };
            let r = run_empirical(&opts, &mut ctx)?;
            match r.rel_frobenius_error {
                Some(e) => format!("empirical-ntk {arch} m={m} inits={inits}: rel. Frobenius error {e:.4}"),
                None => format!("empirical-ntk {arch} {act} m={m} inits={inits}: no closed form"),
            }
        }
        Command::Gap(g) => {
            let opts = GapOptions {
                n: g.n,
                d: g.d,
                eval_n: g.eval_n.unwrap_or(g.n),
                widths: g.widths,
                etas: g.etas,
                steps: g.steps,
                snapshot_every: g.snapshot_every.unwrap_or(g.steps.max(1)),
                seeds: g.seeds,
                base_seed: g.seed,
                arch_a: g.arch_a,
                arch_b: g.arch_b,
                activation: g.act,
                num_perms: g.num_perms,
            };
            let r = run_gap_scatter(&opts, Some(&mut ctx))?;
            format!(
                "gap: {} points, energy distance {:.4e}, p = {:.4}",
                r.points.len(),
                r.energy,
                r.p_value
            )
        }
        Command::RmtCheck { seed, bins } => {
            let r = run_rmt_check(&RmtOptions { seed, bins }, &mut ctx)?;
            let passed = r.iter().filter(|o| o.pass).count();
            format!("rmt-check: {passed}/{} predictions within tolerance", r.len())
        }
        Command::IdxInfo { images, labels } => {
            let info = run_idx_info(&IdxInfoOptions { images, labels }, &mut ctx)?;
            format!(
                "idx-info: {} images of {}x{}, {} labels",
                info.count,
                info.rows,
                info.cols,
                info.label_count.map_or("no".to_string(), |c| c.to_string())
            )
        }
    };
    ctx.finish()?;
    Ok(summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
