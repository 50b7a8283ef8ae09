//! Distributional bias of the plain guided SDE on the one-dimensional
//! Gaussian, against the exact posterior.
//!
//! For `q = N(0, 1)`, a unit measurement and observation `y` with noise scale
//! `sigma`, the posterior is `N(y / (1 + sigma^2), sigma^2 / (1 + sigma^2))`
//! exactly. The guided SDE (drift `x + 2 grad ln q + 2 v_guid`, standard
//! normal initialization, no latent reinitialization) lands measurably away
//! from that posterior; the report also evaluates the closed-form lower
//! bound `y^2 (1 - e^{-2T})^3 / (6 sigma^4 (sigma^2 + 1)^2)` on the path KL
//! divergence.

use super::presets::{DpsBiasPreset, DPS_BIAS_MIN_TRIALS};
use super::report::{ExperimentRun, TrialTable, VerifyReport};
use super::run_trials;
use super::stats::mean_and_variance;
use crate::dynamics::{self, GuidanceConfig, GuidanceKind, SamplerKind, TrajectoryProbe};
use crate::error::{Error, Result};
use crate::measure::Measurement;
use crate::models::ModelSpec;
use crate::rng;
use std::time::Instant;

/// Closed-form lower bound on the KL divergence between the exact
/// conditional path measure and the guided-SDE path measure.
pub fn kl_lower_bound(y: f64, sigma: f64, horizon: f64) -> f64 {
    let s2 = sigma * sigma;
    let c = 1.0 - (-2.0 * horizon).exp();
    y * y * c * c * c / (6.0 * s2 * s2 * (s2 + 1.0) * (s2 + 1.0))
}

pub fn verify_dps_bias(preset: &DpsBiasPreset) -> Result<ExperimentRun> {
    let start = Instant::now();
    if preset.trials < DPS_BIAS_MIN_TRIALS {
        return Err(Error::InsufficientTrials {
            required: DPS_BIAS_MIN_TRIALS,
            got: preset.trials,
        });
    }
    let model = ModelSpec::iso_gaussian(1)?;
    let meas = Measurement::single_vector_with_observation(&[1.0], preset.y, preset.sigma)?;
    let mut cfg = GuidanceConfig::for_measurement(&meas);
    cfg.horizon = preset.horizon;
    cfg.sampler = SamplerKind::Sde;
    cfg.guidance = GuidanceKind::Dps;
    cfg.steps = preset.sde_steps;

    let terminals: Vec<f64> = run_trials(preset.workers, preset.trials, |trial| {
        let mut stream = rng::trial_stream(preset.seed, trial as u64);
        let x0 = vec![rng::standard_normal(&mut stream)];
        let drift = dynamics::guided_sde_drift(&model, Some(&meas), &cfg)?;
        let probe = TrajectoryProbe::generation(&model, Some(&meas), cfg.horizon);
        let traj =
            dynamics::integrate_sde(drift, &x0, (0.0, cfg.horizon), &cfg, &probe, &mut stream)?;
        Ok(traj.last_state()[0])
    })?;

    let (emp_mean, emp_var) = mean_and_variance(&terminals);
    let se = (emp_var / preset.trials as f64).sqrt();
    let s2 = preset.sigma * preset.sigma;
    let posterior_mean = preset.y / (1.0 + s2);
    let posterior_var = s2 / (1.0 + s2);
    let bias_z = (emp_mean - posterior_mean).abs() / se;

    let mut table = TrialTable::new(&["trial", "terminal"]);
    for (trial, &v) in terminals.iter().enumerate() {
        table.push(vec![trial as f64, v]);
    }

    let mut report = VerifyReport::new("dps-bias");
    report
        .param("y", preset.y)
        .param("sigma", preset.sigma)
        .param("horizon", preset.horizon)
        .param("trials", preset.trials)
        .param("sde_steps", preset.sde_steps)
        .param("seed", preset.seed)
        .metric("empirical_mean", emp_mean)
        .metric("empirical_var", emp_var)
        .metric("posterior_mean", posterior_mean)
        .metric("posterior_var", posterior_var)
        .metric("standard_error", se)
        .metric("bias_z_score", bias_z)
        .metric("kl_lower_bound", kl_lower_bound(preset.y, preset.sigma, preset.horizon))
        .metric("kl_lower_bound_large_horizon", kl_lower_bound(preset.y, preset.sigma, f64::INFINITY));
    report.verdict("bias_detected", "bias_z_score", 5.0, bias_z >= 5.0);
    report.runtime_seconds = start.elapsed().as_secs_f64();
    report.validate()?;
    Ok(ExperimentRun::new(report, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_bound_at_the_reference_point() {
        // y = 2, sigma = 1, horizon -> infinity: 4 / 24 = 1/6.
        let b = kl_lower_bound(2.0, 1.0, f64::INFINITY);
        assert!((b - 1.0 / 6.0).abs() <= 1e-15, "bound {b}");
    }

    #[test]
    fn symmetric_observation_shows_no_bias() {
        // y = 0 keeps the drift odd, so the empirical mean stays within noise
        // of the posterior mean 0.
        let preset = DpsBiasPreset { y: 0.0, sde_steps: 512, seed: 5, ..DpsBiasPreset::default() };
        let run = verify_dps_bias(&preset).unwrap();
        assert!(
            run.report.metrics["bias_z_score"] < 5.0,
            "spurious bias: {:?}",
            run.report.metrics
        );
    }

    #[test]
    fn too_few_trials_is_an_error() {
        let preset = DpsBiasPreset { trials: 10, ..DpsBiasPreset::default() };
        assert!(matches!(
            verify_dps_bias(&preset),
            Err(Error::InsufficientTrials { required: 5000, got: 10 })
        ));
    }
}
