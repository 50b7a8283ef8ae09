//! Projection onto the consistency subspace (deterministic sampler) and its
//! failure under the stochastic sampler.

use super::presets::{ProjectionPreset, SdeFailurePreset, SDE_FAILURE_MIN_TRIALS};
use super::report::{ExperimentRun, TrialTable, VerifyReport};
use super::stats::{ks_critical_95, ks_statistic, median, symmetric_mixture_cdf};
use super::{monotone_decrease_margin, run_trials};
use crate::dynamics::{self, GuidanceConfig, SamplerKind, Trajectory, TrajectoryProbe};
use crate::error::{Error, Result};
use crate::measure::{self, Measurement};
use crate::models::{self, ModelSpec};
use crate::reguidance;
use crate::rng;
use rand::Rng;
use std::time::Instant;

struct ProjectionTrial {
    err_projection: f64,
    err_raw: f64,
    measured_dev: f64,
    runtime_s: f64,
    guided: Option<Trajectory>,
}

/// Guided ODE runs from prior samples drive the output to the projection of
/// the input onto the consistency subspace. The error is measured against the
/// roundtrip-corrected target: observed coordinates pinned to `y`, free
/// coordinates carrying the unconditional-roundtrip values of the input,
/// which isolates the projection claim from inversion discretization error;
/// the raw distance to the plain projection of the input is reported
/// alongside.
pub fn verify_projection(preset: &ProjectionPreset) -> Result<ExperimentRun> {
    let start = Instant::now();
    if preset.indices.is_empty() || preset.indices.len() > preset.d {
        return Err(Error::ConfigMismatch(format!(
            "need 1 <= m <= d, got m = {}, d = {}",
            preset.indices.len(),
            preset.d
        )));
    }
    let model = ModelSpec::hypercube(preset.r, preset.d)?;
    let indices = preset.indices.clone();

    let mut table =
        TrialTable::new(&["sigma", "trial", "err_projection", "err_raw", "runtime_s"]);
    let mut report = VerifyReport::new("projection");
    report
        .param("d", preset.d)
        .param("indices", format!("{:?}", indices))
        .param("r", preset.r)
        .param("horizon", preset.horizon)
        .param("sigmas", format!("{:?}", preset.sigmas))
        .param("trials", preset.trials)
        .param("seed", preset.seed)
        .param("steps", preset.controls.steps)
        .param("rel_tol", preset.controls.rel_tol);

    let mut medians = Vec::with_capacity(preset.sigmas.len());
    let mut trajectories = Vec::new();
    for (si, &sigma) in preset.sigmas.iter().enumerate() {
        let trials: Vec<ProjectionTrial> = run_trials(preset.workers, preset.trials, |trial| {
            let t0 = Instant::now();
            // Streams depend on the trial index only, pairing the draws
            // across the sigma arms.
            let mut stream = rng::trial_stream(preset.seed, trial as u64);
            let mode: Vec<f64> = (0..preset.d)
                .map(|_| if stream.random::<bool>() { preset.r } else { -preset.r })
                .collect();
            let meas = Measurement::inpainting(&indices, &mode, sigma)?;
            let x = models::sample_prior(&model, &mut stream);

            let mut cfg = GuidanceConfig::for_measurement(&meas);
            cfg.horizon = preset.horizon;
            cfg.steps = preset.controls.steps;
            cfg.rel_tol = preset.controls.rel_tol;
            cfg.min_step = preset.controls.min_step;

            let res = reguidance::run_reguidance(&model, &meas, &x, &cfg)?;
            let free = dynamics::forward_unconditional(&model, &res.latent, &cfg)?;

            // Roundtrip-corrected target.
            let mut target = free.last_state().clone();
            for (k, &i) in indices.iter().enumerate() {
                target[i] = meas.observation()[k];
            }
            let err_projection = measure::norm(&measure::sub(&res.output, &target));
            let raw = measure::project_to_consistent(&meas, &x)?;
            let err_raw = measure::norm(&measure::sub(&res.output, &raw));
            let measured_dev = indices
                .iter()
                .enumerate()
                .map(|(k, &i)| (res.output[i] - meas.observation()[k]).abs())
                .fold(0.0f64, f64::max);
            Ok(ProjectionTrial {
                err_projection,
                err_raw,
                measured_dev,
                runtime_s: t0.elapsed().as_secs_f64(),
                guided: if preset.dump_trajectories && trial == 0 {
                    Some(res.guided_trajectory)
                } else {
                    None
                },
            })
        })?;

        let errs: Vec<f64> = trials.iter().map(|t| t.err_projection).collect();
        let med = median(&errs);
        medians.push(med);
        let max_dev = trials.iter().map(|t| t.measured_dev).fold(0.0f64, f64::max);
        report.metric(&format!("median_err_sigma_{sigma}"), med);
        report.metric(&format!("measured_max_dev_sigma_{sigma}"), max_dev);
        for (trial, t) in trials.iter().enumerate() {
            table.push(vec![sigma, trial as f64, t.err_projection, t.err_raw, t.runtime_s]);
        }
        for (trial, t) in trials.into_iter().enumerate() {
            if let Some(traj) = t.guided {
                trajectories.push((format!("projection_sigma{si}_trial{trial}_guided"), traj));
            }
        }
    }

    let smallest = *preset
        .sigmas
        .iter()
        .min_by(|a, b| a.partial_cmp(b).unwrap())
        .expect("nonempty sigma list");
    let med_at_smallest = report.metrics[&format!("median_err_sigma_{smallest}")];
    let dev_overall = preset
        .sigmas
        .iter()
        .map(|s| report.metrics[&format!("measured_max_dev_sigma_{s}")])
        .fold(0.0f64, f64::max);
    let margin = monotone_decrease_margin(&medians);
    report.trend("median_err_vs_sigma", medians);
    report.metric("monotone_decrease_margin", margin);
    report.metric("measured_max_dev_overall", dev_overall);
    report.verdict(
        "err_at_smallest_sigma",
        &format!("median_err_sigma_{smallest}"),
        0.05,
        med_at_smallest <= 0.05,
    );
    report.verdict("monotone_in_sigma", "monotone_decrease_margin", 0.0, margin > 0.0);
    report.verdict("measured_within_tol", "measured_max_dev_overall", 0.05, dev_overall <= 0.05);
    report.runtime_seconds = start.elapsed().as_secs_f64();
    report.validate()?;
    let mut run = ExperimentRun::new(report, table);
    run.trajectories = trajectories;
    Ok(run)
}

/// Replace the deterministic sampler with the stochastic one and the latent
/// initialization stops mattering: started exactly at a consistent mode, the
/// unmeasured coordinates of the outputs pool to the stationary two-component
/// mixture, while the deterministic control arm stays at the mode.
pub fn verify_sde_failure(preset: &SdeFailurePreset) -> Result<ExperimentRun> {
    let start = Instant::now();
    if preset.trials < SDE_FAILURE_MIN_TRIALS {
        return Err(Error::InsufficientTrials {
            required: SDE_FAILURE_MIN_TRIALS,
            got: preset.trials,
        });
    }
    if preset.indices.len() >= preset.d {
        return Err(Error::ConfigMismatch(
            "the failure experiment needs at least one unmeasured coordinate".into(),
        ));
    }
    let model = ModelSpec::hypercube(preset.r, preset.d)?;
    let mut stream = rng::stream(preset.seed);
    let mode: Vec<f64> = (0..preset.d)
        .map(|_| if stream.random::<bool>() { preset.r } else { -preset.r })
        .collect();
    let indices = preset.indices.clone();
    let meas = Measurement::inpainting(&indices, &mode, preset.sigma)?;

    let mut cfg = GuidanceConfig::for_measurement(&meas);
    cfg.horizon = preset.horizon;
    cfg.steps = preset.controls.steps;
    cfg.rel_tol = preset.controls.rel_tol;
    cfg.min_step = preset.controls.min_step;

    // Shared deterministic latent of the mode.
    let latent = dynamics::extract_latent(&model, &mode, &cfg)?;

    // Deterministic control arm.
    let ode_out = reguidance::guided_from_latent(&model, &meas, &latent, &cfg)?;
    let ode_arm_distance = measure::norm(&measure::sub(ode_out.last_state(), &mode));

    // Stochastic arm.
    let mut sde_cfg = cfg.clone();
    sde_cfg.sampler = SamplerKind::Sde;
    sde_cfg.steps = preset.sde_steps;
    let drift_cfg = sde_cfg.clone();
    let unmeasured: Vec<usize> =
        (0..preset.d).filter(|i| !indices.contains(i)).collect();
    let results: Vec<Vec<f64>> = run_trials(preset.workers, preset.trials, |trial| {
        let mut trial_rng = rng::trial_stream(preset.seed, trial as u64);
        let drift = dynamics::guided_sde_drift(&model, Some(&meas), &drift_cfg)?;
        let probe = TrajectoryProbe::generation(&model, Some(&meas), drift_cfg.horizon);
        let traj = dynamics::integrate_sde(
            drift,
            &latent,
            (0.0, drift_cfg.horizon),
            &drift_cfg,
            &probe,
            &mut trial_rng,
        )?;
        let last = traj.last_state();
        Ok(unmeasured.iter().map(|&i| last[i]).collect())
    })?;

    let mut table = {
        let mut cols: Vec<String> = vec!["trial".into()];
        cols.extend(unmeasured.iter().map(|i| format!("coord_{i}")));
        TrialTable { columns: cols, rows: Vec::new() }
    };
    let mut pooled = Vec::with_capacity(preset.trials * unmeasured.len());
    for (trial, coords) in results.iter().enumerate() {
        let mut row = vec![trial as f64];
        row.extend_from_slice(coords);
        table.push(row);
        pooled.extend_from_slice(coords);
    }

    let n_pooled = pooled.len();
    let ks = ks_statistic(&pooled, symmetric_mixture_cdf(preset.r))?;
    let ks_crit = ks_critical_95(n_pooled);
    let positive = pooled.iter().filter(|&&v| v > 0.0).count() as f64;
    let sign_dev = (positive / n_pooled as f64 - 0.5).abs();
    let sign_tol = 3.0 * 0.5 / (n_pooled as f64).sqrt();
    let mode_gaps: Vec<f64> = pooled.iter().map(|&v| (v.abs() - preset.r).abs()).collect();
    let median_mode_gap = median(&mode_gaps);

    let mut report = VerifyReport::new("sde-failure");
    report
        .param("d", preset.d)
        .param("indices", format!("{:?}", indices))
        .param("r", preset.r)
        .param("sigma", preset.sigma)
        .param("horizon", preset.horizon)
        .param("trials", preset.trials)
        .param("sde_steps", preset.sde_steps)
        .param("seed", preset.seed)
        .param("pooled_samples", n_pooled)
        .metric("ks_distance", ks)
        .metric("ks_critical_95", ks_crit)
        .metric("ode_arm_distance", ode_arm_distance)
        .metric("sign_split_deviation", sign_dev)
        .metric("sign_split_tolerance", sign_tol)
        .metric("median_mode_gap", median_mode_gap);
    report.verdict("ks_matches_mixture", "ks_distance", ks_crit, ks <= ks_crit);
    report.verdict("ode_arm_stays_at_mode", "ode_arm_distance", 0.05, ode_arm_distance <= 0.05);
    report.verdict("sign_split_balanced", "sign_split_deviation", sign_tol, sign_dev <= sign_tol);
    report.verdict("samples_leave_the_modes", "median_mode_gap", 0.5, median_mode_gap >= 0.5);
    report.runtime_seconds = start.elapsed().as_secs_f64();
    report.validate()?;
    Ok(ExperimentRun::new(report, table))
}
