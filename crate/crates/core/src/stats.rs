//! Energy-distance two-sample test on planar point sets.

use rand::seq::SliceRandom;

use crate::rng::stream;
use crate::{Error, Result};

pub type Point = [f64; 2];

/// Smallest permutation count accepted by [`permutation_test`].
pub const MIN_PERMUTATIONS: usize = 100;

#[inline]
fn dist(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn mean_cross(a: &[Point], b: &[Point]) -> f64 {
    let mut s = 0.0;
    for p in a {
        for q in b {
            s += dist(p, q);
        }
    }
    s / (a.len() * b.len()) as f64
}

/// `2·E‖A−B‖ − E‖A−A′‖ − E‖B−B′‖`, each mean taken over all ordered pairs
/// (the V-statistic, which is never negative).
pub fn energy_distance(a: &[Point], b: &[Point]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::arg("energy distance needs two nonempty samples"));
    }
    if a.iter().chain(b).any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::NonFinite("sample point"));
    }
    let e = 2.0 * mean_cross(a, b) - mean_cross(a, a) - mean_cross(b, b);
    Ok(e.max(0.0))
}

/// Permutation p-value `(1 + #{E_π ≥ E_obs}) / (num_perms + 1)`.
pub fn permutation_test(a: &[Point], b: &[Point], num_perms: usize, seed: u64) -> Result<f64> {
    if num_perms < MIN_PERMUTATIONS {
        return Err(Error::arg(format!(
            "num_perms must be >= {MIN_PERMUTATIONS}, got {num_perms}"
        )));
    }
    let observed = energy_distance(a, b)?;
    let mut pooled: Vec<Point> = a.iter().chain(b).copied().collect();
    let mut rng = stream(seed, "permutation")?;
    let na = a.len();
    let mut hits = 0usize;
    for _ in 0..num_perms {
        pooled.shuffle(&mut rng);
        let (pa, pb) = pooled.split_at(na);
        if energy_distance(pa, pb)? >= observed {
            hits += 1;
        }
    }
    Ok((1 + hits) as f64 / (num_perms + 1) as f64)
}

/// Checks that both groups have at least `min` points.
pub fn require_group_sizes(a: usize, b: usize, min: usize) -> Result<()> {
    if a < min || b < min {
        return Err(Error::Statistics(format!(
            "need at least {min} points per group, got {a} and {b}"
        )));
    }
    Ok(())
}
