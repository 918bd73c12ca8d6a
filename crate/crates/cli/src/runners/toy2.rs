use anyhow::Result;
use serde::Serialize;

use glu_ntk_core::dynamics::{toy2_trajectories, EllipseAxis, Toy2Trajectories};
use glu_ntk_core::SymMatrix;

use crate::report::{Chart, RunContext, Series, Table};

pub const TOY2_SCHEMA: &str = "glu-ntk.toy2.v1";
pub const TOY2_AXES_SCHEMA: &str = "glu-ntk.toy2-axes.v1";

#[derive(Debug, Clone, Serialize)]
pub struct Toy2Options {
    /// `(large, small)` eigenvalues of the plain kernel.
    pub spectrum_plain: [f64; 2],
    pub spectrum_gated: [f64; 2],
    /// Angle of both kernels' top eigenvector from the first axis.
    pub angle: f64,
    pub y: [f64; 2],
    pub z0: [f64; 2],
    pub eta: f64,
    pub steps: usize,
}

impl Default for Toy2Options {
    fn default() -> Self {
        Self {
            spectrum_plain: [4.0, 0.2],
            spectrum_gated: [2.0, 0.5],
            angle: 0.4,
            y: [0.0, 0.0],
            z0: [1.0, -0.3],
            eta: 0.05,
            steps: 1000,
        }
    }
}

/// `l[0]·uuᵀ + l[1]·vvᵀ` with `u = (cos a, sin a)`, `v ⊥ u`.
pub fn rotated_kernel(l: [f64; 2], angle: f64) -> SymMatrix {
    let (s, c) = angle.sin_cos();
    let u = [c, s];
    let v = [-s, c];
    SymMatrix::from_fn(2, |i, j| l[0] * u[i] * u[j] + l[1] * v[i] * v[j])
}

fn ellipse(center: [f64; 2], axes: &[EllipseAxis; 2], scale: f64) -> Vec<(f64, f64)> {
    let len = |a: &EllipseAxis| if a.length.is_finite() { a.length * scale } else { 0.0 };
    let (l0, l1) = (len(&axes[0]), len(&axes[1]));
    (0..=64)
        .map(|k| {
            let t = k as f64 / 64.0 * std::f64::consts::TAU;
            let (s, c) = t.sin_cos();
            (
                center[0] + l0 * c * axes[0].direction[0] + l1 * s * axes[1].direction[0],
                center[1] + l0 * c * axes[0].direction[1] + l1 * s * axes[1].direction[1],
            )
        })
        .collect()
}

pub fn run_toy2(opts: &Toy2Options, ctx: &mut RunContext) -> Result<Toy2Trajectories> {
    ctx.set_config(opts)?;
    let kp = rotated_kernel(opts.spectrum_plain, opts.angle);
    let kg = rotated_kernel(opts.spectrum_gated, opts.angle);
    let r = toy2_trajectories(&kp, &kg, opts.y, opts.z0, opts.eta, opts.steps)?;

    let mut t = Table::new(
        "toy2",
        TOY2_SCHEMA,
        &["step", "z1_plain", "z2_plain", "z1_gated", "z2_gated", "loss_plain", "loss_gated"],
    );
    let loss = |z: &[f64; 2]| 0.25 * ((z[0] - opts.y[0]).powi(2) + (z[1] - opts.y[1]).powi(2));
    for (step, (p, g)) in r.plain.iter().zip(&r.gated).enumerate() {
        t.push(vec![
            step.into(),
            p[0].into(),
            p[1].into(),
            g[0].into(),
            g[1].into(),
            loss(p).into(),
            loss(g).into(),
        ]);
    }
    ctx.table(&t)?;

    let mut a = Table::new(
        "toy2_axes",
        TOY2_AXES_SCHEMA,
        &["model", "eigenvalue", "dir1", "dir2", "length"],
    );
    for (model, axes) in [("plain", &r.axes_plain), ("gated", &r.axes_gated)] {
        for ax in axes.iter() {
            a.push(vec![
                model.into(),
                ax.eigenvalue.into(),
                ax.direction[0].into(),
                ax.direction[1].into(),
                ax.length.into(),
            ]);
        }
    }
    ctx.table(&a)?;

    let path = |v: &[[f64; 2]]| v.iter().map(|z| (z[0], z[1])).collect();
    let scale = 0.1 * (opts.z0[0] - opts.y[0]).hypot(opts.z0[1] - opts.y[1]).max(1e-3);
    let chart = Chart::new("Two-sample output trajectories", "z1", "z2")
        .with(Series::line("plain", path(&r.plain)))
        .with(Series::line("gated", path(&r.gated)))
        .with(Series::line("plain level set", ellipse(opts.y, &r.axes_plain, scale)))
        .with(Series::line("gated level set", ellipse(opts.y, &r.axes_gated, scale)));
    ctx.chart("toy2", &chart)?;
    Ok(r)
}
