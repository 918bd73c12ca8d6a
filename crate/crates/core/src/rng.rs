//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] seeded with a
//! value obtained from [`derive_stream_seed`]. Streams are named by short
//! labels (`"data"`, `"init/3"`, `"perm"`, ...) so independent parts of an
//! experiment never share state and a run is reproducible from its master
//! seed alone.
//!
//! Normal variates use `rand_distr::StandardNormal` (the ZIGNOR ziggurat)
//! over the ChaCha8 stream; both are value-stable across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Longest accepted stream label, in bytes.
pub const MAX_LABEL_LEN: usize = 64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// SplitMix64 finalizer (Steele, Lea & Flood 2014).
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed of a named stream from a master seed.
///
/// The label is hashed with 64-bit FNV-1a, finalized with SplitMix64 and
/// folded into the master seed, which is then finalized once more:
///
/// ```text
/// seed = splitmix64(master ^ splitmix64(fnv1a(label)))
/// ```
///
/// Both steps are bijective in their `u64` argument, so for a fixed label
/// distinct master seeds never collide.
pub fn derive_stream_seed(master_seed: u64, label: &str) -> Result<u64> {
    if label.is_empty() {
        return Err(Error::arg("stream label must be nonempty"));
    }
    if label.len() > MAX_LABEL_LEN {
        return Err(Error::arg(format!(
            "stream label `{label}` exceeds {MAX_LABEL_LEN} bytes"
        )));
    }
    let h = label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME));
    Ok(splitmix64(master_seed ^ splitmix64(h)))
}

/// Open the named stream of `master_seed`.
pub fn stream(master_seed: u64, label: &str) -> Result<ChaCha8Rng> {
    Ok(ChaCha8Rng::seed_from_u64(derive_stream_seed(
        master_seed,
        label,
    )?))
}

/// Draw `len` standard normal variates from `rng`, in order.
pub fn standard_normals(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}
