//! Latent-geometry sweep: how far apart the latents of distinct consistent
//! modes sit, and how robust each latent is to perturbation.
//!
//! Qualitative mirror of the image-scale observation that good latents form
//! small, disconnected basins: pairwise latent distances are a sizable
//! fraction of the random-latent scale `sqrt(2d)`, small perturbations land
//! near the same mode, and interpolating two latents lands far from every
//! mode. Metrics only; no hard verdicts.

use super::presets::LatentGeometryPreset;
use super::report::{ExperimentRun, TrialTable, VerifyReport};
use super::stats::median;
use crate::dynamics::{self, GuidanceConfig};
use crate::error::Result;
use crate::measure::{self, Measurement};
use crate::models::{self, ModelSpec};
use crate::reguidance;
use crate::rng;
use std::time::Instant;

pub fn latent_geometry_sweep(preset: &LatentGeometryPreset) -> Result<ExperimentRun> {
    let start = Instant::now();
    let model = ModelSpec::hypercube(preset.r, preset.d)?;
    let indices = preset.indices.clone();
    let observed_mode = vec![preset.r; preset.d];
    let meas = Measurement::inpainting(&indices, &observed_mode, preset.sigma)?;

    let mut cfg = GuidanceConfig::for_measurement(&meas);
    cfg.horizon = preset.horizon;
    cfg.steps = preset.controls.steps;
    cfg.rel_tol = preset.controls.rel_tol;
    cfg.min_step = preset.controls.min_step;

    // Evenly spaced picks across the enumerated consistent modes; the first
    // and last differ on every unmeasured coordinate.
    let consistent = models::consistent_modes(&model, &meas)?;
    let count = preset.mode_count.clamp(2, consistent.len());
    let picks: Vec<&Vec<f64>> = (0..count)
        .map(|k| &consistent[k * (consistent.len() - 1) / (count - 1)])
        .collect();

    let latents: Vec<Vec<f64>> = picks
        .iter()
        .map(|mode| dynamics::extract_latent(&model, mode, &cfg))
        .collect::<Result<_>>()?;

    let mut report = VerifyReport::new("latent-geometry");
    report
        .param("d", preset.d)
        .param("indices", format!("{:?}", indices))
        .param("r", preset.r)
        .param("sigma", preset.sigma)
        .param("stds", format!("{:?}", preset.stds))
        .param("mode_count", count)
        .param("reps_per_std", preset.reps_per_std)
        .param("seed", preset.seed);

    let norm_scale = (2.0 * preset.d as f64).sqrt();
    let mut pair_dists = Vec::new();
    for i in 0..latents.len() {
        for j in i + 1..latents.len() {
            let dist = measure::norm(&measure::sub(&latents[i], &latents[j])) / norm_scale;
            report.metric(&format!("pair_dist_norm_{i}_{j}"), dist);
            pair_dists.push(dist);
        }
    }
    report.trend("pairwise_latent_distances_normalized", pair_dists);

    let mut table = TrialTable::new(&["latent", "std", "rep", "mode_distance"]);
    let mut per_std_medians = Vec::new();
    for (std_idx, &std) in preset.stds.iter().enumerate() {
        let reps = if std == 0.0 { 1 } else { preset.reps_per_std };
        let mut dists = Vec::new();
        for (li, latent) in latents.iter().enumerate() {
            for rep in 0..reps {
                let mut stream = rng::trial_stream(
                    preset.seed,
                    (li * 1_000 + std_idx * 100 + rep) as u64,
                );
                let perturbed = reguidance::perturb_latent(latent, std, &mut stream)?;
                let out = reguidance::guided_from_latent(&model, &meas, &perturbed, &cfg)?;
                let dist = models::nearest_mode_distance(&model, out.last_state())?;
                dists.push(dist);
                table.push(vec![li as f64, std, rep as f64, dist]);
            }
        }
        let med = median(&dists);
        report.metric(&format!("median_mode_dist_std_{std}"), med);
        per_std_medians.push(med);
    }
    report.trend("mode_distance_vs_std", per_std_medians);

    // Interpolation arm: average the two most distant latents.
    let first = latents.first().expect("at least two modes");
    let last = latents.last().expect("at least two modes");
    let interp: Vec<f64> = first.iter().zip(last).map(|(a, b)| 0.5 * (a + b)).collect();
    let out = reguidance::guided_from_latent(&model, &meas, &interp, &cfg)?;
    let interp_dist = models::nearest_mode_distance(&model, out.last_state())?;
    report.metric("interp_mode_distance", interp_dist);
    let largest_std = preset.stds.iter().cloned().fold(0.0f64, f64::max);
    let perturbed_median = report.metrics[&format!("median_mode_dist_std_{largest_std}")];
    report.metric(
        "interp_to_perturbed_ratio",
        if perturbed_median > 0.0 { interp_dist / perturbed_median } else { f64::INFINITY },
    );

    report.runtime_seconds = start.elapsed().as_secs_f64();
    report.validate()?;
    Ok(ExperimentRun::new(report, table))
}
