//! Experiment runners behind the subcommands. Each takes an options struct
//! and a [`RunContext`](crate::report::RunContext) and returns its numbers,
//! so tests can drive them without going through the binary.

use std::fmt;

use glu_ntk_core::derive_stream_seed;

pub mod crossing;
pub mod empirical;
pub mod gap;
pub mod idx_info;
pub mod rmt;
pub mod spectrum;
pub mod toy2;

/// Bad flag combination detected after parsing; mapped to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Seed of replicate `i` under `base`.
pub fn rep_seed(base: u64, i: usize) -> glu_ntk_core::Result<u64> {
    derive_stream_seed(base, &format!("rep/{i}"))
}

/// `|num − thy| / |thy|`.
pub fn rel_err(num: f64, thy: f64) -> f64 {
    (num - thy).abs() / thy.abs()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[k] } else { 0.5 * (v[k - 1] + v[k]) })
}
