//! Experiment configuration files.
//!
//! Configs are flat sectioned key-value files in TOML syntax: a top-level
//! `command` plus the `[model]`, `[measurement]`, `[guidance]`, `[run]` and
//! optional `[experiment]` tables, with no nesting below that. Unknown keys
//! are rejected. Parsing applies the documented defaults (`rho = 1/sigma^2`,
//! `t = 10`, `steps = 2048` for the ODE sampler and `8192` for the SDE,
//! `seed = 0`, `format = csv`) and validates every field against the module
//! preconditions before any computation runs.
//!
//! ```toml
//! command = "verify projection"
//!
//! [model]
//! kind = "hypercube"      # iso | hypercube | bimodal
//! r = 3.0
//! d = 8
//!
//! [measurement]
//! kind = "inpainting"     # inpainting | single-vector
//! indices = [1, 2, 3]     # observed coordinates, 1-based
//! sigma = 0.05
//! sigma_list = [0.2, 0.1, 0.05]
//!
//! [run]
//! trials = 20
//! seed = 0
//! ```

use crate::dynamics::{GuidanceKind, SamplerKind, DEFAULT_HORIZON, DEFAULT_MIN_STEP, DEFAULT_ODE_STEPS, DEFAULT_REL_TOL, DEFAULT_SDE_STEPS};
use crate::error::{Error, Result};
use crate::models::ModelKind;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Top-level command dispatched by the binary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    ScoreCheck,
    Roundtrip,
    Reguidance,
    Verify(VerifyExperiment),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyExperiment {
    Projection,
    SdeFailure,
    Contraction,
    DpsBias,
    LatentGeometry,
    Decoupling,
}

impl Command {
    pub fn parse(text: &str) -> Result<Self> {
        let normalized = text.split_whitespace().collect::<Vec<_>>().join(" ");
        match normalized.as_str() {
            "score-check" => Ok(Command::ScoreCheck),
            "roundtrip" => Ok(Command::Roundtrip),
            "reguidance" => Ok(Command::Reguidance),
            "verify projection" => Ok(Command::Verify(VerifyExperiment::Projection)),
            "verify sde-failure" => Ok(Command::Verify(VerifyExperiment::SdeFailure)),
            "verify contraction" => Ok(Command::Verify(VerifyExperiment::Contraction)),
            "verify dps-bias" => Ok(Command::Verify(VerifyExperiment::DpsBias)),
            "verify latent-geometry" => Ok(Command::Verify(VerifyExperiment::LatentGeometry)),
            "verify decoupling" => Ok(Command::Verify(VerifyExperiment::Decoupling)),
            other => Err(Error::ConfigParse(format!(
                "unknown command '{other}'; expected one of: score-check, roundtrip, reguidance, \
                 verify projection, verify sde-failure, verify contraction, verify dps-bias, \
                 verify latent-geometry, verify decoupling"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Command::ScoreCheck => "score-check",
            Command::Roundtrip => "roundtrip",
            Command::Reguidance => "reguidance",
            Command::Verify(VerifyExperiment::Projection) => "verify projection",
            Command::Verify(VerifyExperiment::SdeFailure) => "verify sde-failure",
            Command::Verify(VerifyExperiment::Contraction) => "verify contraction",
            Command::Verify(VerifyExperiment::DpsBias) => "verify dps-bias",
            Command::Verify(VerifyExperiment::LatentGeometry) => "verify latent-geometry",
            Command::Verify(VerifyExperiment::Decoupling) => "verify decoupling",
        }
    }

    /// File-name slug for the report writers.
    pub fn slug(&self) -> &'static str {
        match self {
            Command::ScoreCheck => "score_check",
            Command::Roundtrip => "roundtrip",
            Command::Reguidance => "reguidance",
            Command::Verify(VerifyExperiment::Projection) => "projection",
            Command::Verify(VerifyExperiment::SdeFailure) => "sde_failure",
            Command::Verify(VerifyExperiment::Contraction) => "contraction",
            Command::Verify(VerifyExperiment::DpsBias) => "dps_bias",
            Command::Verify(VerifyExperiment::LatentGeometry) => "latent_geometry",
            Command::Verify(VerifyExperiment::Decoupling) => "decoupling",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Measurement operator spec as configured.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementSpec {
    /// Observed coordinates, stored 0-based (the file format is 1-based).
    Inpainting(Vec<usize>),
    SingleVector(Vec<f64>),
}

/// Fully validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub model_kind: ModelKind,
    pub r: f64,
    pub d: usize,
    pub measurement: MeasurementSpec,
    pub sigma: f64,
    /// Sweep list for the experiments that scan sigma; defaults to `[sigma]`.
    pub sigma_list: Vec<f64>,
    pub observation_noise: Option<f64>,
    /// Explicit observation for the bias experiment (single-vector only).
    pub observation: Option<f64>,
    /// Guidance strength; `None` means `1 / sigma^2`.
    pub rho: Option<f64>,
    pub horizon: f64,
    pub sampler: SamplerKind,
    pub guidance: GuidanceKind,
    pub steps: usize,
    pub rel_tol: f64,
    pub min_step: f64,
    pub trials: Option<usize>,
    pub seed: u64,
    pub workers: usize,
    pub format: OutputFormat,
    pub out_dir: PathBuf,
    pub dump_trajectories: bool,
    pub experiment: ExperimentKnobs,
}

/// Optional experiment-specific knobs (`[experiment]` table).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentKnobs {
    pub s_min: Option<f64>,
    pub s_max: Option<f64>,
    pub stds: Option<Vec<f64>>,
    pub grid_sizes: Option<Vec<usize>>,
    pub cases: Option<usize>,
    pub mode_count: Option<usize>,
    pub reps_per_std: Option<usize>,
    pub sde_steps: Option<usize>,
}

impl ExperimentConfig {
    /// Guidance strength for a given sigma (`rho` if set, else `1/sigma^2`).
    pub fn rho_for(&self, sigma: f64) -> f64 {
        self.rho.unwrap_or(1.0 / (sigma * sigma))
    }
}

// --- raw (serde) layer --------------------------------------------------------

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Option<String>,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    measurement: RawMeasurement,
    #[serde(default)]
    guidance: RawGuidance,
    #[serde(default)]
    run: RawRun,
    #[serde(default, skip_serializing_if = "RawExperiment::is_empty")]
    experiment: RawExperiment,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: Option<String>,
    r: Option<f64>,
    d: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasurement {
    kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    indices: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v: Option<Vec<f64>>,
    sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGuidance {
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    t: Option<f64>,
    sampler: Option<String>,
    guidance: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,
    rel_tol: Option<f64>,
    min_step: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
    format: Option<String>,
    out: Option<String>,
    dump_trajectories: Option<bool>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    #[serde(skip_serializing_if = "Option::is_none")]
    s_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    s_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stds: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cases: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reps_per_std: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sde_steps: Option<usize>,
}

impl RawExperiment {
    fn is_empty(&self) -> bool {
        self.s_min.is_none()
            && self.s_max.is_none()
            && self.stds.is_none()
            && self.grid_sizes.is_none()
            && self.cases.is_none()
            && self.mode_count.is_none()
            && self.reps_per_std.is_none()
            && self.sde_steps.is_none()
    }
}

fn constraint(key: &str, constraint: &str) -> Error {
    Error::ConstraintViolation { key: key.to_string(), constraint: constraint.to_string() }
}

/// Parse and validate a config file's text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    resolve(raw)
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig> {
    let command = Command::parse(
        raw.command
            .as_deref()
            .ok_or_else(|| constraint("command", "must be present"))?,
    )?;

    let model_kind = match raw.model.kind.as_deref().unwrap_or("hypercube") {
        "iso" | "iso-gaussian" => ModelKind::IsoGaussian,
        "hypercube" => ModelKind::HypercubeMixture,
        "bimodal" => ModelKind::Bimodal,
        other => {
            return Err(constraint(
                "model.kind",
                &format!("one of iso | hypercube | bimodal (got '{other}')"),
            ))
        }
    };
    let r = raw.model.r.unwrap_or(3.0);
    if !(r > 0.0) || !r.is_finite() {
        return Err(constraint("model.r", "> 0"));
    }
    let d = raw.model.d.unwrap_or(8);
    if d == 0 {
        return Err(constraint("model.d", ">= 1"));
    }
    if model_kind == ModelKind::Bimodal && d < 2 {
        return Err(constraint("model.d", ">= 2 for the bimodal model"));
    }

    let sigma = raw.measurement.sigma.unwrap_or(0.05);
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(constraint("measurement.sigma", "> 0"));
    }
    let sigma_list = match &raw.measurement.sigma_list {
        Some(list) if !list.is_empty() => {
            if list.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                return Err(constraint("measurement.sigma_list", "entries > 0"));
            }
            list.clone()
        }
        Some(_) => return Err(constraint("measurement.sigma_list", "nonempty when present")),
        None => vec![sigma],
    };

    let measurement = match raw.measurement.kind.as_deref().unwrap_or("inpainting") {
        "inpainting" => {
            let one_based = raw
                .measurement
                .indices
                .clone()
                .unwrap_or_else(|| vec![1, 2, 3].into_iter().take(d).collect());
            if one_based.is_empty() {
                return Err(constraint("measurement.indices", "nonempty"));
            }
            let mut zero_based = Vec::with_capacity(one_based.len());
            for &i in &one_based {
                if i == 0 || i > d {
                    return Err(constraint("measurement.indices", "within 1..=d"));
                }
                if zero_based.contains(&(i - 1)) {
                    return Err(constraint("measurement.indices", "distinct"));
                }
                zero_based.push(i - 1);
            }
            MeasurementSpec::Inpainting(zero_based)
        }
        "single-vector" => {
            let v = raw
                .measurement
                .v
                .clone()
                .ok_or_else(|| constraint("measurement.v", "present for single-vector"))?;
            if v.len() != d {
                return Err(constraint("measurement.v", "length d"));
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(constraint("measurement.v", "unit norm (within 1e-12)"));
            }
            MeasurementSpec::SingleVector(v)
        }
        other => {
            return Err(constraint(
                "measurement.kind",
                &format!("one of inpainting | single-vector (got '{other}')"),
            ))
        }
    };
    if let Some(n) = raw.measurement.noise {
        if !(n >= 0.0) || !n.is_finite() {
            return Err(constraint("measurement.noise", ">= 0"));
        }
    }

    let sampler = match raw.guidance.sampler.as_deref().unwrap_or("ode") {
        "ode" => SamplerKind::Ode,
        "sde" => SamplerKind::Sde,
        other => {
            return Err(constraint("guidance.sampler", &format!("ode | sde (got '{other}')")))
        }
    };
    let guidance = match raw.guidance.guidance.as_deref().unwrap_or("dps") {
        "none" => GuidanceKind::None,
        "dps" => GuidanceKind::Dps,
        "mdps" => GuidanceKind::Mdps,
        other => {
            return Err(constraint(
                "guidance.guidance",
                &format!("none | dps | mdps (got '{other}')"),
            ))
        }
    };
    if guidance == GuidanceKind::Mdps && model_kind != ModelKind::Bimodal {
        return Err(constraint("guidance.guidance", "mdps requires model.kind = bimodal"));
    }
    if guidance == GuidanceKind::Mdps && sampler == SamplerKind::Sde {
        return Err(constraint("guidance.sampler", "mdps is defined for the ode sampler only"));
    }
    if let Some(rho) = raw.guidance.rho {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(constraint("guidance.rho", ">= 0"));
        }
    }
    let horizon = raw.guidance.t.unwrap_or(DEFAULT_HORIZON);
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(constraint("guidance.t", "> 0"));
    }
    let steps = raw.guidance.steps.unwrap_or(match sampler {
        SamplerKind::Ode => DEFAULT_ODE_STEPS,
        SamplerKind::Sde => DEFAULT_SDE_STEPS,
    });
    if steps == 0 {
        return Err(constraint("guidance.steps", ">= 1"));
    }
    let rel_tol = raw.guidance.rel_tol.unwrap_or(DEFAULT_REL_TOL);
    if !(rel_tol > 0.0) {
        return Err(constraint("guidance.rel_tol", "> 0"));
    }
    let min_step = raw.guidance.min_step.unwrap_or(DEFAULT_MIN_STEP);
    if !(min_step > 0.0) || !min_step.is_finite() {
        return Err(constraint("guidance.min_step", "> 0"));
    }

    if let Some(t) = raw.run.trials {
        if t == 0 {
            return Err(constraint("run.trials", ">= 1"));
        }
    }
    let format = match raw.run.format.as_deref().unwrap_or("csv") {
        "csv" => OutputFormat::Csv,
        "json" => OutputFormat::Json,
        other => return Err(constraint("run.format", &format!("csv | json (got '{other}')"))),
    };

    if let (Some(lo), Some(hi)) = (raw.experiment.s_min, raw.experiment.s_max) {
        if !(lo > 0.0 && hi >= lo) {
            return Err(constraint("experiment.s_min/s_max", "0 < s_min <= s_max"));
        }
    }

    Ok(ExperimentConfig {
        command,
        model_kind,
        r,
        d,
        measurement,
        sigma,
        sigma_list,
        observation_noise: raw.measurement.noise,
        observation: raw.measurement.y,
        rho: raw.guidance.rho,
        horizon,
        sampler,
        guidance,
        steps,
        rel_tol,
        min_step,
        trials: raw.run.trials,
        seed: raw.run.seed.unwrap_or(0),
        workers: raw.run.workers.unwrap_or(0),
        format,
        out_dir: PathBuf::from(raw.run.out.unwrap_or_else(|| "out".to_string())),
        dump_trajectories: raw.run.dump_trajectories.unwrap_or(false),
        experiment: ExperimentKnobs {
            s_min: raw.experiment.s_min,
            s_max: raw.experiment.s_max,
            stds: raw.experiment.stds,
            grid_sizes: raw.experiment.grid_sizes,
            cases: raw.experiment.cases,
            mode_count: raw.experiment.mode_count,
            reps_per_std: raw.experiment.reps_per_std,
            sde_steps: raw.experiment.sde_steps,
        },
    })
}

/// Serialize a validated config back to the file format (normalized form).
pub fn to_toml(cfg: &ExperimentConfig) -> String {
    let raw = RawConfig {
        command: Some(cfg.command.as_str().to_string()),
        model: RawModel {
            kind: Some(
                match cfg.model_kind {
                    ModelKind::IsoGaussian => "iso",
                    ModelKind::HypercubeMixture => "hypercube",
                    ModelKind::Bimodal => "bimodal",
                }
                .to_string(),
            ),
            r: Some(cfg.r),
            d: Some(cfg.d),
        },
        measurement: RawMeasurement {
            kind: Some(
                match &cfg.measurement {
                    MeasurementSpec::Inpainting(_) => "inpainting",
                    MeasurementSpec::SingleVector(_) => "single-vector",
                }
                .to_string(),
            ),
            indices: match &cfg.measurement {
                MeasurementSpec::Inpainting(idx) => {
                    Some(idx.iter().map(|i| i + 1).collect())
                }
                _ => None,
            },
            v: match &cfg.measurement {
                MeasurementSpec::SingleVector(v) => Some(v.clone()),
                _ => None,
            },
            sigma: Some(cfg.sigma),
            sigma_list: Some(cfg.sigma_list.clone()),
            noise: cfg.observation_noise,
            y: cfg.observation,
        },
        guidance: RawGuidance {
            rho: cfg.rho,
            t: Some(cfg.horizon),
            sampler: Some(
                match cfg.sampler {
                    SamplerKind::Ode => "ode",
                    SamplerKind::Sde => "sde",
                }
                .to_string(),
            ),
            guidance: Some(
                match cfg.guidance {
                    GuidanceKind::None => "none",
                    GuidanceKind::Dps => "dps",
                    GuidanceKind::Mdps => "mdps",
                }
                .to_string(),
            ),
            steps: Some(cfg.steps),
            rel_tol: Some(cfg.rel_tol),
            min_step: Some(cfg.min_step),
        },
        run: RawRun {
            trials: cfg.trials,
            seed: Some(cfg.seed),
            workers: Some(cfg.workers),
            format: Some(
                match cfg.format {
                    OutputFormat::Csv => "csv",
                    OutputFormat::Json => "json",
                }
                .to_string(),
            ),
            out: Some(cfg.out_dir.display().to_string()),
            dump_trajectories: Some(cfg.dump_trajectories),
        },
        experiment: RawExperiment {
            s_min: cfg.experiment.s_min,
            s_max: cfg.experiment.s_max,
            stds: cfg.experiment.stds.clone(),
            grid_sizes: cfg.experiment.grid_sizes.clone(),
            cases: cfg.experiment.cases,
            mode_count: cfg.experiment.mode_count,
            reps_per_std: cfg.experiment.reps_per_std,
            sde_steps: cfg.experiment.sde_steps,
        },
    };
    toml::to_string(&raw).expect("config serialization cannot fail")
}
