//! Theorem-reproduction experiments with oracles and statistical tests.
//!
//! Every experiment takes a preset, runs its trials (in parallel when the
//! preset allows workers), and produces a [`VerifyReport`] whose verdicts
//! carry explicit thresholds, plus a per-trial [`TrialTable`] for the CSV
//! writers. With the deterministic sampler a report is reproducible
//! bit-for-bit from `(preset, seed)` except for its wall-clock runtime
//! fields; stochastic experiments are reproducible given the seed.

mod bias;
mod consistency;
mod contraction;
mod geometry;
mod presets;
mod projection;
mod report;
pub mod stats;

pub use bias::verify_dps_bias;
pub use consistency::{verify_decoupling, verify_roundtrip, verify_score_check};
pub use contraction::verify_contraction;
pub use geometry::latent_geometry_sweep;
pub use presets::{
    ContractionPreset, DecouplingPreset, DpsBiasPreset, IntegratorControls, LatentGeometryPreset,
    ProjectionPreset, RoundtripPreset, ScoreCheckPreset, SdeFailurePreset, DPS_BIAS_MIN_TRIALS,
    SDE_FAILURE_MIN_TRIALS,
};
pub use projection::{verify_projection, verify_sde_failure};
pub use report::{ExperimentRun, TrialTable, Verdict, VerifyReport};
pub use stats::ks_statistic;

use crate::error::{Error, Result};
use rayon::prelude::*;

/// Run `n` independent trials on a worker pool (`workers = 0` uses the rayon
/// default). Results come back in trial order regardless of scheduling, so
/// report assembly is deterministic.
pub(crate) fn run_trials<T, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::ConfigMismatch(format!("worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// Smallest decrease across adjacent entries; positive iff the sequence is
/// strictly decreasing.
pub(crate) fn monotone_decrease_margin(values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::INFINITY, f64::min)
}
