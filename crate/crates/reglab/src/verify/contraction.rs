//! Mode contraction under modified guidance on the bimodal model.
//!
//! Inputs sit on the maximal-reward line `<v, x> = y` at distance `s` from
//! the mode `z1 = R e_1` (so `x = z1 + s v_perp`), with `s` drawn once per
//! trial and shared across the sigma arms. The measured contraction factor
//! `C = ||output - z1|| / s` must stay below 1 and approach `v[0]^2` as sigma
//! shrinks; the reward deviates from `y` by at most `10 R v[0] sigma ln(1/sigma)`.
//!
//! Two trajectory diagnostics are checked on every trial: the first
//! coordinate never goes (numerically) negative, and
//! `tanh(R e^{-(T-t)} x_t[0])` stays above `1 - 10 sigma` on the final
//! window `[T - ln(1/delta'), T]`, where `delta' = e^{-2(T - T1')}`,
//! `T1' = T1 + 3 ln ln(1/eps)`, `eps = 4 sigma^2`,
//! `T1 = T - ln(1/delta)/2` and `delta = 3 sigma^2 / (R v[0])`. At
//! desk-scale horizons the computed start can exceed `T`; the window is then
//! clipped to the terminal point, and the report carries the measured
//! saturation onset (the earliest time from which the floor holds through to
//! `T`) so the check stays informative.

use super::presets::ContractionPreset;
use super::report::{ExperimentRun, TrialTable, VerifyReport};
use super::stats::median;
use super::{monotone_decrease_margin, run_trials};
use crate::dynamics::{GuidanceConfig, GuidanceKind, SamplerKind};
use crate::error::{Error, Result};
use crate::measure::{self, Measurement};
use crate::models::ModelSpec;
use crate::reguidance;
use crate::rng;
use rand::Rng;
use std::time::Instant;

/// Diagnostic window `[start, T]` for the tanh floor, clipped to `[0, T]`.
/// The stopping-time constants follow the harness convention
/// `T1' = T1 + 3 ln ln(1/eps)`; the clip keeps the window nonempty (in the
/// degenerate case it is the single terminal point).
pub fn tanh_window_start(horizon: f64, sigma: f64, r: f64, v1: f64) -> f64 {
    let eps = 4.0 * sigma * sigma;
    let delta = 3.0 * sigma * sigma / (r * v1);
    let t1 = horizon - 0.5 * (1.0 / delta).ln();
    let t1_prime = t1 + 3.0 * (1.0 / eps).ln().ln();
    let delta_prime = (-2.0 * (horizon - t1_prime)).exp();
    (horizon - (1.0 / delta_prime).ln()).clamp(0.0, horizon)
}

struct ContractionTrial {
    s: f64,
    c_meas: f64,
    reward_err: f64,
    min_x1: f64,
    window_tanh_min: f64,
    /// Earliest time from which `tanh_diag >= floor` holds through to `T`.
    tanh_onset: f64,
    runtime_s: f64,
}

fn contraction_trial(
    model: &ModelSpec,
    meas: &Measurement,
    x: &[f64],
    cfg: &GuidanceConfig,
    s: f64,
    window_start: f64,
    floor: f64,
) -> Result<ContractionTrial> {
    let t0 = Instant::now();
    let z1 = vec![model.r, 0.0];
    let res = reguidance::run_reguidance(model, meas, x, cfg)?;
    let dist = measure::norm(&measure::sub(&res.output, &z1));
    let c_meas = if s > 0.0 { dist / s } else { f64::NAN };
    let v = match meas.kind() {
        crate::measure::MeasurementKind::SingleVector(v) => v.clone(),
        _ => unreachable!("validated by the caller"),
    };
    let reward_err =
        (measure::dot(&v, &res.output) - meas.observation()[0]).abs() / (model.r * v[0]);
    let traj = &res.guided_trajectory;
    let min_x1 = traj.states.iter().map(|st| st[0]).fold(f64::INFINITY, f64::min);
    let window_tanh_min = traj
        .times
        .iter()
        .zip(&traj.diagnostics)
        .filter(|(t, _)| **t >= window_start)
        .map(|(_, d)| d.tanh_diag)
        .fold(f64::INFINITY, f64::min);
    let tanh_onset = traj
        .times
        .iter()
        .zip(&traj.diagnostics)
        .rev()
        .take_while(|(_, d)| d.tanh_diag >= floor)
        .map(|(t, _)| *t)
        .last()
        .unwrap_or(cfg.horizon);
    Ok(ContractionTrial {
        s,
        c_meas,
        reward_err,
        min_x1,
        window_tanh_min,
        tanh_onset,
        runtime_s: t0.elapsed().as_secs_f64(),
    })
}

pub fn verify_contraction(preset: &ContractionPreset) -> Result<ExperimentRun> {
    let start = Instant::now();
    let v = preset.v;
    let vnorm = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if (vnorm - 1.0).abs() > 1e-12 {
        return Err(Error::ConfigMismatch(format!("v must be unit, got norm {vnorm}")));
    }
    if !(0.3 < v[0] && v[0] < 0.9) {
        return Err(Error::ConfigMismatch(format!(
            "v[0] must lie in (0.3, 0.9), got {}",
            v[0]
        )));
    }
    if !(preset.s_min > 0.0 && preset.s_max >= preset.s_min) {
        return Err(Error::ConfigMismatch("need 0 < s_min <= s_max".into()));
    }
    if preset.s_max * v[1] >= preset.r {
        return Err(Error::ConfigMismatch(
            "s_max too large: inputs would leave the x[0] > 0 half-plane".into(),
        ));
    }
    let model = ModelSpec::bimodal(preset.r, 2)?;
    let z1 = vec![preset.r, 0.0];
    let v_perp = [-v[1], v[0]];

    let mut table = TrialTable::new(&[
        "sigma",
        "trial",
        "s",
        "c_meas",
        "reward_err",
        "min_x1",
        "window_tanh_min",
        "tanh_onset",
        "runtime_s",
    ]);
    let mut report = VerifyReport::new("contraction");
    report
        .param("r", preset.r)
        .param("v", format!("[{}, {}]", v[0], v[1]))
        .param("sigmas", format!("{:?}", preset.sigmas))
        .param("trials", preset.trials)
        .param("horizon", preset.horizon)
        .param("s_range", format!("[{}, {}]", preset.s_min, preset.s_max))
        .param("seed", preset.seed);

    let target_c = v[0] * v[0];
    let mut gap_medians = Vec::new();
    let mut max_c = f64::NEG_INFINITY;
    let mut min_x1_overall = f64::INFINITY;
    let mut tanh_margin = f64::INFINITY;
    let mut reward_ratio_max: f64 = 0.0;
    for &sigma in &preset.sigmas {
        let meas = Measurement::single_vector(&v, &z1, sigma)?;
        let mut cfg = GuidanceConfig::for_measurement(&meas);
        cfg.horizon = preset.horizon;
        cfg.guidance = GuidanceKind::Mdps;
        cfg.sampler = SamplerKind::Ode;
        cfg.steps = preset.controls.steps;
        cfg.rel_tol = preset.controls.rel_tol;
        cfg.min_step = preset.controls.min_step;
        let window_start = tanh_window_start(preset.horizon, sigma, preset.r, v[0]);
        let floor = 1.0 - 10.0 * sigma;
        report.param(&format!("tanh_window_start_sigma_{sigma}"), window_start);
        if window_start >= preset.horizon {
            report.param(
                &format!("tanh_window_note_sigma_{sigma}"),
                "window degenerates to the terminal point at this horizon",
            );
        }

        let trials: Vec<ContractionTrial> =
            run_trials(preset.workers, preset.trials, |trial| {
                // s depends on the trial index only: paired across sigmas.
                let mut stream = rng::trial_stream(preset.seed, trial as u64);
                let s = preset.s_min + (preset.s_max - preset.s_min) * stream.random::<f64>();
                let x = vec![z1[0] + s * v_perp[0], z1[1] + s * v_perp[1]];
                debug_assert!(x[0] < preset.r);
                contraction_trial(&model, &meas, &x, &cfg, s, window_start, floor)
            })?;

        let cs: Vec<f64> = trials.iter().map(|t| t.c_meas).collect();
        let gaps: Vec<f64> = cs.iter().map(|c| (c - target_c).abs()).collect();
        let med_c = median(&cs);
        let med_gap = median(&gaps);
        let max_reward_err = trials.iter().map(|t| t.reward_err).fold(0.0f64, f64::max);
        let reward_cap = 10.0 * sigma * (1.0 / sigma).ln();
        let min_x1 = trials.iter().map(|t| t.min_x1).fold(f64::INFINITY, f64::min);
        let min_tanh = trials.iter().map(|t| t.window_tanh_min).fold(f64::INFINITY, f64::min);
        let worst_onset = trials.iter().map(|t| t.tanh_onset).fold(0.0f64, f64::max);

        report.metric(&format!("median_c_sigma_{sigma}"), med_c);
        report.metric(&format!("median_c_gap_sigma_{sigma}"), med_gap);
        report.metric(&format!("max_reward_err_sigma_{sigma}"), max_reward_err);
        report.metric(&format!("min_x1_sigma_{sigma}"), min_x1);
        report.metric(&format!("min_window_tanh_sigma_{sigma}"), min_tanh);
        report.metric(&format!("tanh_onset_sigma_{sigma}"), worst_onset);

        gap_medians.push(med_gap);
        max_c = max_c.max(cs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        min_x1_overall = min_x1_overall.min(min_x1);
        tanh_margin = tanh_margin.min(min_tanh - (1.0 - 10.0 * sigma));
        reward_ratio_max = reward_ratio_max.max(max_reward_err / reward_cap);

        for (trial, t) in trials.iter().enumerate() {
            table.push(vec![
                sigma,
                trial as f64,
                t.s,
                t.c_meas,
                t.reward_err,
                t.min_x1,
                t.window_tanh_min,
                t.tanh_onset,
                t.runtime_s,
            ]);
        }
    }

    let gap_margin = monotone_decrease_margin(&gap_medians);
    report
        .trend("median_c_gap_vs_sigma", gap_medians)
        .metric("max_c_meas", max_c)
        .metric("c_gap_decrease_margin", gap_margin)
        .metric("max_reward_err_ratio", reward_ratio_max)
        .metric("min_x1_overall", min_x1_overall)
        .metric("tanh_floor_margin", tanh_margin);
    report.verdict("contraction_below_one", "max_c_meas", 1.0, max_c < 1.0);
    report.verdict("c_gap_decreasing", "c_gap_decrease_margin", 0.0, gap_margin > 0.0);
    report.verdict("reward_error_bounded", "max_reward_err_ratio", 1.0, reward_ratio_max <= 1.0);
    report.verdict(
        "first_coordinate_nonnegative",
        "min_x1_overall",
        -1e-9,
        min_x1_overall >= -1e-9,
    );
    report.verdict("tanh_floor_on_final_window", "tanh_floor_margin", 0.0, tanh_margin >= 0.0);
    report.runtime_seconds = start.elapsed().as_secs_f64();
    report.validate()?;
    Ok(ExperimentRun::new(report, table))
}
