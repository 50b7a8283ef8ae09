//! Seeded RNG streams for reproducible experiments.
//!
//! Every trial owns an independent stream derived from `(base_seed, trial_index)`
//! via splitmix64, so trials can run in any order (or in parallel) without
//! changing the results.

use rand_chacha::ChaCha12Rng;
use rand_chacha::rand_core::SeedableRng;

/// RNG stream used throughout the crate.
pub type RngStream = ChaCha12Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for trial `index` of a run with `base` seed (the `index`-th output of
/// the splitmix64 sequence started at `base`).
pub fn trial_seed(base: u64, index: u64) -> u64 {
    mix(base.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Stream seeded directly from a 64-bit seed.
pub fn stream(seed: u64) -> RngStream {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Independent stream for trial `index` of a run with `base` seed.
pub fn trial_stream(base: u64, index: u64) -> RngStream {
    stream(trial_seed(base, index))
}

/// One standard normal draw.
pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample::<f64, _>(rand_distr::StandardNormal)
}
