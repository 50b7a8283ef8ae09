//! Experiment presets. The `Default` impls pin the reference configurations
//! the acceptance suite runs; the config layer can override any field.

use crate::dynamics::{DEFAULT_MIN_STEP, DEFAULT_ODE_STEPS, DEFAULT_REL_TOL, DEFAULT_SDE_STEPS};

/// Integration controls shared by the presets.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorControls {
    pub steps: usize,
    pub rel_tol: f64,
    pub min_step: f64,
}

impl Default for IntegratorControls {
    fn default() -> Self {
        IntegratorControls {
            steps: DEFAULT_ODE_STEPS,
            rel_tol: DEFAULT_REL_TOL,
            min_step: DEFAULT_MIN_STEP,
        }
    }
}

/// Analytic consistency sweep: score versus finite differences of the
/// log-density, the Tweedie identity, and the denoiser Jacobian versus
/// finite differences, across random states for all three models.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreCheckPreset {
    pub cases_per_model: usize,
    pub seed: u64,
}

impl Default for ScoreCheckPreset {
    fn default() -> Self {
        ScoreCheckPreset { cases_per_model: 100, seed: 0 }
    }
}

/// Inversion fidelity: extract the latent, run the unconditional flow
/// forward, measure the relative return error; repeated on a halving grid
/// ladder to expose the integrator order.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundtripPreset {
    pub r: f64,
    pub d: usize,
    pub horizon: f64,
    pub trials: usize,
    /// Fixed-grid sizes for the order measurement (each next one halves the
    /// step).
    pub grid_sizes: Vec<usize>,
    pub controls: IntegratorControls,
    pub seed: u64,
}

impl Default for RoundtripPreset {
    fn default() -> Self {
        RoundtripPreset {
            r: 3.0,
            d: 8,
            horizon: 10.0,
            trials: 5,
            grid_sizes: vec![512, 1024, 2048],
            controls: IntegratorControls::default(),
            seed: 0,
        }
    }
}

/// Projection experiment: hypercube + inpainting, guided ODE runs from prior
/// samples, error against the roundtrip-corrected projection target per
/// sigma.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPreset {
    pub d: usize,
    /// Observed coordinates (0-based, distinct).
    pub indices: Vec<usize>,
    pub r: f64,
    pub horizon: f64,
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub controls: IntegratorControls,
    pub seed: u64,
    pub workers: usize,
    pub dump_trajectories: bool,
}

impl Default for ProjectionPreset {
    fn default() -> Self {
        ProjectionPreset {
            d: 8,
            indices: vec![0, 1, 2],
            r: 3.0,
            horizon: 10.0,
            sigmas: vec![0.2, 0.1, 0.05],
            trials: 20,
            controls: IntegratorControls::default(),
            seed: 0,
            workers: 0,
            dump_trajectories: false,
        }
    }
}

/// Stochastic-sampler failure experiment: start from a consistent mode, run
/// the guided SDE many times, compare the pooled unmeasured coordinates to
/// the exact two-component mixture; the deterministic control arm stays put.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeFailurePreset {
    pub d: usize,
    /// Observed coordinates (0-based, distinct).
    pub indices: Vec<usize>,
    pub r: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub trials: usize,
    pub sde_steps: usize,
    pub controls: IntegratorControls,
    pub seed: u64,
    pub workers: usize,
}

impl Default for SdeFailurePreset {
    fn default() -> Self {
        SdeFailurePreset {
            d: 4,
            indices: vec![0],
            r: 3.0,
            sigma: 0.05,
            horizon: 10.0,
            trials: 2000,
            sde_steps: DEFAULT_SDE_STEPS,
            controls: IntegratorControls::default(),
            seed: 0,
            workers: 0,
        }
    }
}

/// Minimum trial count for the stochastic-failure experiment.
pub const SDE_FAILURE_MIN_TRIALS: usize = 2000;

/// Mode-contraction experiment on the bimodal model with modified guidance.
/// Inputs sit on the consistency line at distance `s` from the mode,
/// `s ~ U[s_min, s_max]`, paired across the sigma list.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionPreset {
    pub r: f64,
    /// Unit measurement direction (d = 2); the first component must lie in
    /// (0.3, 0.9).
    pub v: [f64; 2],
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub horizon: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub controls: IntegratorControls,
    pub seed: u64,
    pub workers: usize,
}

impl Default for ContractionPreset {
    fn default() -> Self {
        ContractionPreset {
            r: 5.0,
            v: [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
            sigmas: vec![0.05, 0.01, 0.005],
            trials: 10,
            horizon: 10.0,
            s_min: 1.0,
            s_max: 1.35,
            controls: IntegratorControls::default(),
            seed: 0,
            workers: 0,
        }
    }
}

/// Posterior-bias experiment: vanilla guided SDE from standard normal
/// initialization on the one-dimensional Gaussian, against the exact
/// posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct DpsBiasPreset {
    pub y: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub trials: usize,
    pub sde_steps: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for DpsBiasPreset {
    fn default() -> Self {
        DpsBiasPreset {
            y: 2.0,
            sigma: 1.0,
            horizon: 5.0,
            trials: 5000,
            sde_steps: DEFAULT_SDE_STEPS,
            seed: 0,
            workers: 0,
        }
    }
}

/// Minimum trial count for the bias experiment.
pub const DPS_BIAS_MIN_TRIALS: usize = 5000;

/// Latent-geometry sweep: invert several consistent modes, measure pairwise
/// latent distances and the robustness of each latent under perturbation,
/// plus an interpolation arm.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGeometryPreset {
    pub d: usize,
    /// Observed coordinates (0-based, distinct).
    pub indices: Vec<usize>,
    pub r: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub stds: Vec<f64>,
    pub mode_count: usize,
    pub reps_per_std: usize,
    pub controls: IntegratorControls,
    pub seed: u64,
}

impl Default for LatentGeometryPreset {
    fn default() -> Self {
        LatentGeometryPreset {
            d: 8,
            indices: vec![0, 1, 2],
            r: 3.0,
            sigma: 0.05,
            horizon: 10.0,
            stds: vec![0.0, 0.05, 0.1, 0.3],
            mode_count: 3,
            reps_per_std: 5,
            controls: IntegratorControls::default(),
            seed: 0,
        }
    }
}

/// Coordinate-decoupling and determinism experiment: the guided run on the
/// hypercube with inpainting equals its coordinatewise factorization, and
/// the deterministic pipeline is bit-identical across reruns.
#[derive(Debug, Clone, PartialEq)]
pub struct DecouplingPreset {
    pub d: usize,
    /// Observed coordinates (0-based, distinct).
    pub indices: Vec<usize>,
    pub r: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub controls: IntegratorControls,
    pub seed: u64,
}

impl Default for DecouplingPreset {
    fn default() -> Self {
        DecouplingPreset {
            d: 4,
            indices: vec![0, 1],
            r: 3.0,
            sigma: 0.05,
            horizon: 10.0,
            controls: IntegratorControls::default(),
            seed: 0,
        }
    }
}
