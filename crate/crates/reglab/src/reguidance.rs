//! The two-step pipeline: extract the latent of a candidate reconstruction by
//! running the unconditional probability flow ODE in reverse, then run the
//! guided sampler from that latent.
//!
//! Guidance applies to the second step only; latent extraction is strictly
//! unconditional. With the ODE sampler the pipeline is a pure function of
//! `(model, measurement, input, config)`; the SDE sampler draws its Brownian
//! increments from a stream seeded by `cfg.seed`.

use crate::dynamics::{
    self, GuidanceConfig, GuidanceKind, SamplerKind, Trajectory, TrajectoryProbe,
};
use crate::error::{Error, Result};
use crate::measure::{self, Measurement};
use crate::models::{self, ModelSpec, State};
use crate::rng::{self, RngStream};

/// Everything one pipeline run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ReguidanceResult {
    /// Latent `x*_T` extracted from the input.
    pub latent: State,
    /// Terminal state of the guided run.
    pub output: State,
    pub latent_trajectory: Trajectory,
    pub guided_trajectory: Trajectory,
    /// Reward of `output` under the measurement.
    pub final_reward: f64,
    /// Distance from `output` to the consistency subspace.
    pub final_distance_to_projection: f64,
    /// Distance from `output` to the nearest consistent mode when the mode
    /// oracle applies, otherwise to the nearest mode overall.
    pub nearest_mode_distance: f64,
}

/// Run the full pipeline on input `x`.
pub fn run_reguidance(
    model: &ModelSpec,
    meas: &Measurement,
    x: &[f64],
    cfg: &GuidanceConfig,
) -> Result<ReguidanceResult> {
    model.check_state(x)?;
    cfg.validate()?;
    if cfg.guidance == GuidanceKind::Mdps && model.kind != models::ModelKind::Bimodal {
        return Err(Error::ConfigMismatch(
            "modified guidance requires the bimodal model".into(),
        ));
    }
    let latent_trajectory = dynamics::extract_latent_trajectory(model, x, cfg)?;
    let latent = latent_trajectory.last_state().clone();
    let guided_trajectory = guided_from_latent(model, meas, &latent, cfg)?;
    let output = guided_trajectory.last_state().clone();

    let (_, _, final_reward) = measure::residual_and_reward(meas, &output)?;
    let projected = measure::project_to_consistent(meas, &output)?;
    let final_distance_to_projection = measure::norm(&measure::sub(&output, &projected));
    let nearest_mode_distance = match models::consistent_modes(model, meas) {
        Ok(modes) => modes
            .iter()
            .map(|z| measure::norm(&measure::sub(&output, z)))
            .fold(f64::INFINITY, f64::min),
        Err(_) => models::nearest_mode_distance(model, &output)?,
    };

    Ok(ReguidanceResult {
        latent,
        output,
        latent_trajectory,
        guided_trajectory,
        final_reward,
        final_distance_to_projection,
        nearest_mode_distance,
    })
}

/// Second pipeline step on its own: integrate the guided dynamics from a
/// given latent. Used directly by the latent-geometry sweeps.
pub fn guided_from_latent(
    model: &ModelSpec,
    meas: &Measurement,
    latent: &[f64],
    cfg: &GuidanceConfig,
) -> Result<Trajectory> {
    model.check_state(latent)?;
    let probe = TrajectoryProbe::generation(model, Some(meas), cfg.horizon);
    match cfg.sampler {
        SamplerKind::Ode => {
            let field = dynamics::guided_ode_field(model, Some(meas), cfg)?;
            dynamics::integrate_ode(field, latent, (0.0, cfg.horizon), cfg, &probe)
        }
        SamplerKind::Sde => {
            let drift = dynamics::guided_sde_drift(model, Some(meas), cfg)?;
            let mut stream = rng::stream(cfg.seed);
            dynamics::integrate_sde(drift, latent, (0.0, cfg.horizon), cfg, &probe, &mut stream)
        }
    }
}

/// Latent perturbation: `latent + std * xi` with `xi` standard normal.
pub fn perturb_latent(latent: &[f64], std: f64, rng: &mut RngStream) -> Result<State> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::ConfigMismatch(format!(
            "perturbation scale must be nonnegative, got {std}"
        )));
    }
    Ok(latent
        .iter()
        .map(|&l| l + std * rng::standard_normal(rng))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn hypercube_setup(
        d: usize,
        measured: &[usize],
        sigma: f64,
        seed: u64,
    ) -> (ModelSpec, Measurement, GuidanceConfig, RngStream) {
        let model = ModelSpec::hypercube(3.0, d).unwrap();
        let mut r = rng::stream(seed);
        let mode: Vec<f64> = models::sample_prior(&model, &mut r)
            .iter()
            .map(|&v| if v >= 0.0 { 3.0 } else { -3.0 })
            .collect();
        let meas = Measurement::inpainting(measured, &mode, sigma).unwrap();
        let cfg = GuidanceConfig::for_measurement(&meas);
        (model, meas, cfg, r)
    }

    #[test]
    fn measured_coordinates_land_on_the_observation() {
        let (model, meas, cfg, mut r) = hypercube_setup(4, &[0, 2], 0.05, 51);
        let x = models::sample_prior(&model, &mut r);
        let res = run_reguidance(&model, &meas, &x, &cfg).unwrap();
        for (row, y) in meas.rows().iter().zip(meas.observation()) {
            let coord = row.iter().position(|&v| v == 1.0).unwrap();
            assert!(
                (res.output[coord] - y).abs() <= 0.05,
                "coordinate {coord}: {} vs {y}",
                res.output[coord]
            );
        }
    }

    #[test]
    fn unmeasured_coordinates_follow_the_unconditional_flow() {
        let (model, meas, cfg, mut r) = hypercube_setup(4, &[0, 2], 0.05, 52);
        let x = models::sample_prior(&model, &mut r);
        let res = run_reguidance(&model, &meas, &x, &cfg).unwrap();
        let free_flow = dynamics::forward_unconditional(&model, &res.latent, &cfg).unwrap();
        for coord in [1usize, 3] {
            let gap = (res.output[coord] - free_flow.last_state()[coord]).abs();
            assert!(gap <= 0.05, "coordinate {coord} gap {gap}");
        }
    }

    #[test]
    fn consistent_mode_is_a_numerical_fixed_point() {
        let model = ModelSpec::hypercube(3.0, 4).unwrap();
        let mode = vec![3.0, -3.0, 3.0, 3.0];
        let meas = Measurement::inpainting(&[0, 1], &mode, 0.05).unwrap();
        let cfg = GuidanceConfig::for_measurement(&meas);
        let res = run_reguidance(&model, &meas, &mode, &cfg).unwrap();
        let dist = measure::norm(&measure::sub(&res.output, &mode));
        assert!(dist <= 0.05, "moved {dist} away from the mode");
        assert!(res.nearest_mode_distance <= 0.05);
    }

    #[test]
    fn ode_pipeline_is_deterministic() {
        let (model, meas, cfg, mut r) = hypercube_setup(3, &[1], 0.1, 53);
        let x = models::sample_prior(&model, &mut r);
        let a = run_reguidance(&model, &meas, &x, &cfg).unwrap();
        let b = run_reguidance(&model, &meas, &x, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reward_improves_across_preset_grid() {
        // Endpoint loss never exceeds the input loss for prior samples.
        for (d, measured, sigma, seed) in [
            (4usize, vec![0usize], 0.05, 61u64),
            (4, vec![0, 2], 0.1, 62),
            (8, vec![0, 3, 5], 0.05, 63),
            (8, vec![1], 0.1, 64),
        ] {
            let (model, meas, cfg, mut r) = hypercube_setup(d, &measured, sigma, seed);
            for _ in 0..3 {
                let x = models::sample_prior(&model, &mut r);
                let (_, loss_in, _) = measure::residual_and_reward(&meas, &x).unwrap();
                let res = run_reguidance(&model, &meas, &x, &cfg).unwrap();
                let (_, loss_out, _) = measure::residual_and_reward(&meas, &res.output).unwrap();
                assert!(
                    loss_out <= loss_in + 1e-9,
                    "loss went up: {loss_in} -> {loss_out} (d={d} sigma={sigma})"
                );
            }
        }
    }

    #[test]
    fn sde_outputs_differ_across_seeds_on_unmeasured_coordinates() {
        let (model, meas, mut cfg, mut r) = hypercube_setup(4, &[0], 0.05, 54);
        cfg.sampler = SamplerKind::Sde;
        let x = models::sample_prior(&model, &mut r);
        cfg.seed = 1;
        let a = run_reguidance(&model, &meas, &x, &cfg).unwrap();
        cfg.seed = 2;
        let b = run_reguidance(&model, &meas, &x, &cfg).unwrap();
        let diff: f64 = (1..4).map(|i| (a.output[i] - b.output[i]).abs()).sum();
        assert!(diff > 1e-3, "seeds produced identical unmeasured coordinates");
    }

    #[test]
    fn mdps_on_non_bimodal_model_is_rejected() {
        let (model, meas, mut cfg, _) = hypercube_setup(3, &[0], 0.1, 55);
        cfg.guidance = GuidanceKind::Mdps;
        assert!(run_reguidance(&model, &meas, &[0.0; 3], &cfg).is_err());
    }

    #[test]
    fn perturbation_is_identity_at_zero_scale() {
        let latent = vec![0.3, -0.7, 1.1];
        let out = perturb_latent(&latent, 0.0, &mut rng::stream(1)).unwrap();
        assert_eq!(out, latent);
    }

    #[test]
    fn perturbation_norm_matches_chi_mean() {
        let d = 8;
        let latent = vec![0.0; d];
        let std = 0.1;
        let mut r = rng::stream(56);
        let n = 10_000;
        let mut total = 0.0;
        for _ in 0..n {
            let p = perturb_latent(&latent, std, &mut r).unwrap();
            total += measure::norm(&p);
        }
        let mean = total / n as f64;
        let expect = std * (d as f64).sqrt();
        assert!(
            (mean - expect).abs() <= 0.05 * expect,
            "mean {mean} vs {expect}"
        );
    }

    #[test]
    fn perturbed_latents_stay_in_the_basin() {
        // A consistent sample's latent, nudged at std = 0.1, still lands
        // within 3x the unperturbed output's distance to the nearest mode.
        let model = ModelSpec::hypercube(3.0, 4).unwrap();
        let mode = vec![3.0, 3.0, -3.0, 3.0];
        let meas = Measurement::inpainting(&[0, 1], &mode, 0.05).unwrap();
        let cfg = GuidanceConfig::for_measurement(&meas);
        let mut r = rng::stream(57);
        // Consistent sample: noise only on the unmeasured coordinates.
        let mut x = mode.clone();
        for i in [2usize, 3] {
            x[i] += rng::standard_normal(&mut r);
        }
        let base = run_reguidance(&model, &meas, &x, &cfg).unwrap();
        let baseline = models::nearest_mode_distance(&model, &base.output).unwrap();
        let perturbed = perturb_latent(&base.latent, 0.1, &mut r).unwrap();
        let out = guided_from_latent(&model, &meas, &perturbed, &cfg).unwrap();
        let dist = models::nearest_mode_distance(&model, out.last_state()).unwrap();
        assert!(
            dist <= 3.0 * baseline.max(1e-3),
            "perturbed distance {dist} vs baseline {baseline}"
        );
    }
}
