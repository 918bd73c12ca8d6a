use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use glu_ntk_core::spectral::{
    bbp_lambda_max, eig_sym, hadamard_lsd_edges, karoui_hadamard_prediction, sample_spiked_wishart,
    sample_squared_wishart, sample_wishart, MpParams,
};
use glu_ntk_core::{derive_stream_seed, SpectralSummary};

use super::rel_err;
use crate::report::{Chart, RunContext, Series, Table};

pub const RMT_SCHEMA: &str = "glu-ntk.rmt-check.v1";
pub const MP_HIST_SCHEMA: &str = "glu-ntk.mp-histogram.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RmtKind {
    MarchenkoPastur,
    Bbp,
    Karoui,
    HadamardLsd,
}

/// One random-matrix prediction and the ensemble it is checked on.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RmtCase {
    pub kind: RmtKind,
    pub n: usize,
    pub d: usize,
    /// Spike strength for [`RmtKind::Bbp`].
    pub theta: f64,
    /// `None` when the top edge is not checked.
    pub tol_max: Option<f64>,
    /// `None` when the bottom edge is not checked.
    pub tol_min: Option<f64>,
}

impl RmtCase {
    pub fn standard() -> Vec<RmtCase> {
        vec![
            RmtCase { kind: RmtKind::MarchenkoPastur, n: 500, d: 2000, theta: 0.0, tol_max: Some(0.03), tol_min: Some(0.10) },
            RmtCase { kind: RmtKind::Karoui, n: 1000, d: 500, theta: 0.0, tol_max: Some(0.10), tol_min: Some(0.10) },
            // the top eigenvalue here is the 11ᵀ/d outlier, not the bulk edge
            RmtCase { kind: RmtKind::HadamardLsd, n: 1000, d: 200, theta: 0.0, tol_max: None, tol_min: Some(0.10) },
            RmtCase { kind: RmtKind::Bbp, n: 500, d: 1000, theta: 3.0, tol_max: Some(0.05), tol_min: None },
        ]
    }

    fn label(&self) -> &'static str {
        match self.kind {
            RmtKind::MarchenkoPastur => "mp",
            RmtKind::Bbp => "bbp",
            RmtKind::Karoui => "karoui",
            RmtKind::HadamardLsd => "hadamard_lsd",
        }
    }

    /// `(λmax, λmin)` predicted for this ensemble.
    pub fn prediction(&self) -> Result<(f64, f64)> {
        let c = self.n as f64 / self.d as f64;
        Ok(match self.kind {
            RmtKind::MarchenkoPastur => {
                let mp = MpParams::new(c)?;
                (mp.upper, mp.lower)
            }
            RmtKind::Bbp => (bbp_lambda_max(c, self.theta), MpParams::new(c)?.lower),
            RmtKind::Karoui => karoui_hadamard_prediction(self.n, self.d)?,
            RmtKind::HadamardLsd => {
                let (lo, hi) = hadamard_lsd_edges(self.n, self.d)?;
                (hi, lo)
            }
        })
    }

    pub fn sample(&self, seed: u64) -> Result<SpectralSummary> {
        let m = match self.kind {
            RmtKind::MarchenkoPastur => sample_wishart(self.n, self.d, seed)?,
            RmtKind::Bbp => sample_spiked_wishart(self.n, self.d, self.theta, seed)?,
            RmtKind::Karoui | RmtKind::HadamardLsd => sample_squared_wishart(self.n, self.d, seed)?,
        };
        Ok(eig_sym(&m)?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RmtOutcome {
    pub case: RmtCase,
    pub seed: u64,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub predicted_max: f64,
    pub predicted_min: f64,
    pub rel_err_max: f64,
    pub rel_err_min: f64,
    pub pass: bool,
}

pub fn check_case(case: &RmtCase, seed: u64) -> Result<(RmtOutcome, SpectralSummary)> {
    let s = case.sample(seed)?;
    let (pmax, pmin) = case.prediction()?;
    let emax = rel_err(s.lambda_max, pmax);
    let emin = rel_err(s.lambda_min, pmin);
    let pass = case.tol_max.map_or(true, |t| emax <= t) && case.tol_min.map_or(true, |t| emin <= t);
    Ok((
        RmtOutcome {
            case: *case,
            seed,
            lambda_max: s.lambda_max,
            lambda_min: s.lambda_min,
            predicted_max: pmax,
            predicted_min: pmin,
            rel_err_max: emax,
            rel_err_min: emin,
            pass,
        },
        s,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct RmtOptions {
    pub seed: u64,
    pub bins: usize,
}

pub fn run_rmt_check(opts: &RmtOptions, ctx: &mut RunContext) -> Result<Vec<RmtOutcome>> {
    ctx.set_config(opts)?;
    let cases = RmtCase::standard();
    let seeds: Vec<u64> = cases
        .iter()
        .map(|c| derive_stream_seed(opts.seed, &format!("rmt/{}", c.label())))
        .collect::<Result<_, _>>()?;
    let results = cases
        .par_iter()
        .zip(&seeds)
        .map(|(c, &s)| check_case(c, s))
        .collect::<Result<Vec<_>>>()?;

    let mut t = Table::new(
        "rmt",
        RMT_SCHEMA,
        &[
            "check",
            "n",
            "d",
            "theta",
            "lambda_max",
            "predicted_max",
            "rel_err_max",
            "tol_max",
            "lambda_min",
            "predicted_min",
            "rel_err_min",
            "tol_min",
            "pass",
        ],
    );
    for (c, (o, _)) in cases.iter().zip(&results) {
        ctx.seed(format!("rmt/{}", c.label()), o.seed);
        ctx.seed(format!("rmt/{}/data", c.label()), derive_stream_seed(o.seed, "data")?);
        if c.kind == RmtKind::Bbp {
            ctx.seed("rmt/bbp/spike", derive_stream_seed(o.seed, "spike")?);
        }
        if let Some(tm) = c.tol_max {
            ctx.tolerance(&format!("{}.max", c.label()), tm);
        }
        if let Some(tm) = c.tol_min {
            ctx.tolerance(&format!("{}.min", c.label()), tm);
        }
        t.push(vec![
            c.label().into(),
            c.n.into(),
            c.d.into(),
            c.theta.into(),
            o.lambda_max.into(),
            o.predicted_max.into(),
            o.rel_err_max.into(),
            c.tol_max.into(),
            o.lambda_min.into(),
            o.predicted_min.into(),
            o.rel_err_min.into(),
            c.tol_min.into(),
            o.pass.into(),
        ]);
    }
    ctx.table(&t)?;

    // spectrum of the plain Wishart case against its limiting density
    let (case, (_, spec)) = cases.iter().zip(&results).next().expect("mp case first");
    let mp = MpParams::new(case.n as f64 / case.d as f64)?;
    let bins = opts.bins.max(1);
    let width = (mp.upper - mp.lower) * 1.2 / bins as f64;
    let start = mp.lower - 0.1 * (mp.upper - mp.lower);
    let mut counts = vec![0usize; bins];
    for &l in &spec.eigenvalues {
        let b = ((l - start) / width).floor();
        if b >= 0.0 && (b as usize) < bins {
            counts[b as usize] += 1;
        }
    }
    let mut h = Table::new("mp_histogram", MP_HIST_SCHEMA, &["bin_center", "empirical_density", "mp_density"]);
    let mut emp = Vec::new();
    let mut thy = Vec::new();
    for (b, &cnt) in counts.iter().enumerate() {
        let x = start + (b as f64 + 0.5) * width;
        let e = cnt as f64 / (spec.len() as f64 * width);
        h.push(vec![x.into(), e.into(), mp.density(x).into()]);
        emp.push((x, e));
        thy.push((x, mp.density(x)));
    }
    ctx.table(&h)?;
    let chart = Chart::new(
        &format!("Wishart spectrum, n = {}, d = {}", case.n, case.d),
        "eigenvalue",
        "density",
    )
    .with(Series::scatter("empirical", emp))
    .with(Series::line("limit density", thy));
    ctx.chart("mp_histogram", &chart)?;
    Ok(results.into_iter().map(|(o, _)| o).collect())
}
