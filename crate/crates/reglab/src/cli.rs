//! Command dispatch and report writers behind the `reglab` binary.
//!
//! `run_command` validates the configured command against the module
//! preconditions, runs it, and writes the report file (CSV or JSON) plus any
//! opted-in trajectory dumps into the output directory. The exit code is 0
//! exactly when every verdict in the emitted report passed.
//!
//! CSV layout: a header plus one row per trial, a blank line, then a summary
//! block (`kind, name, value, metric, threshold`) carrying the echoed
//! parameters, metrics, verdicts and the wall-clock runtime. Non-integer
//! numbers are printed with 17 significant digits so a double-precision
//! reader recovers them exactly; runtime fields are the only values that
//! differ between reruns at a fixed seed.

use crate::config::{
    Command, ExperimentConfig, MeasurementSpec, OutputFormat, VerifyExperiment,
};
use crate::dynamics::{GuidanceConfig, GuidanceKind, SamplerKind, Trajectory};
use crate::error::{Error, Result};
use crate::measure::{self, Measurement};
use crate::models::{self, ModelKind, ModelSpec};
use crate::reguidance;
use crate::rng;
use crate::verify::{
    self, ContractionPreset, DecouplingPreset, DpsBiasPreset, ExperimentRun, IntegratorControls,
    LatentGeometryPreset, ProjectionPreset, RoundtripPreset, ScoreCheckPreset, SdeFailurePreset,
    TrialTable, VerifyReport,
};
use rand::Rng;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

/// What one `run_command` invocation produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub report: VerifyReport,
    pub report_path: PathBuf,
    pub trajectory_paths: Vec<PathBuf>,
}

impl RunOutcome {
    /// Machine-readable summary of the failed verdicts (`None` when all
    /// passed).
    pub fn failure_summary(&self) -> Option<String> {
        if self.report.all_pass() {
            return None;
        }
        let failed: Vec<serde_json::Value> = self
            .report
            .verdicts
            .iter()
            .filter(|v| !v.pass)
            .map(|v| {
                serde_json::json!({
                    "name": v.name,
                    "metric": v.metric,
                    "value": self.report.metrics.get(&v.metric),
                    "threshold": v.threshold,
                })
            })
            .collect();
        Some(
            serde_json::json!({
                "experiment": self.report.experiment,
                "failed_verdicts": failed,
            })
            .to_string(),
        )
    }
}

/// Dispatch a validated config, write its outputs, and report the exit code.
pub fn run_command(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let run = match &cfg.command {
        Command::ScoreCheck => verify::verify_score_check(&score_check_preset(cfg))?,
        Command::Roundtrip => verify::verify_roundtrip(&roundtrip_preset(cfg)?)?,
        Command::Reguidance => run_reguidance_command(cfg)?,
        Command::Verify(VerifyExperiment::Projection) => {
            verify::verify_projection(&projection_preset(cfg)?)?
        }
        Command::Verify(VerifyExperiment::SdeFailure) => {
            verify::verify_sde_failure(&sde_failure_preset(cfg)?)?
        }
        Command::Verify(VerifyExperiment::Contraction) => {
            verify::verify_contraction(&contraction_preset(cfg)?)?
        }
        Command::Verify(VerifyExperiment::DpsBias) => {
            verify::verify_dps_bias(&dps_bias_preset(cfg)?)?
        }
        Command::Verify(VerifyExperiment::LatentGeometry) => {
            verify::latent_geometry_sweep(&latent_geometry_preset(cfg)?)?
        }
        Command::Verify(VerifyExperiment::Decoupling) => {
            verify::verify_decoupling(&decoupling_preset(cfg)?)?
        }
    };

    fs::create_dir_all(&cfg.out_dir)?;
    let slug = cfg.command.slug();
    let report_path = match cfg.format {
        OutputFormat::Csv => {
            let path = cfg.out_dir.join(format!("{slug}_report.csv"));
            fs::write(&path, render_csv(&run))?;
            path
        }
        OutputFormat::Json => {
            let path = cfg.out_dir.join(format!("{slug}_report.json"));
            fs::write(&path, render_json(&run)?)?;
            path
        }
    };
    let mut trajectory_paths = Vec::new();
    for (name, traj) in &run.trajectories {
        let path = cfg.out_dir.join(format!("{name}.csv"));
        fs::write(&path, render_trajectory_csv(traj))?;
        trajectory_paths.push(path);
    }

    let exit_code = if run.report.all_pass() { 0 } else { 1 };
    Ok(RunOutcome { exit_code, report: run.report, report_path, trajectory_paths })
}

// --- preset builders -----------------------------------------------------------

fn controls(cfg: &ExperimentConfig, steps: usize) -> IntegratorControls {
    IntegratorControls { steps, rel_tol: cfg.rel_tol, min_step: cfg.min_step }
}

fn require(ok: bool, key: &str, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::ConstraintViolation { key: key.to_string(), constraint: what.to_string() })
    }
}

fn inpainting_indices(cfg: &ExperimentConfig, command: &str) -> Result<Vec<usize>> {
    match &cfg.measurement {
        MeasurementSpec::Inpainting(idx) => Ok(idx.clone()),
        _ => Err(Error::ConstraintViolation {
            key: "measurement.kind".into(),
            constraint: format!("inpainting for {command}"),
        }),
    }
}

fn score_check_preset(cfg: &ExperimentConfig) -> ScoreCheckPreset {
    ScoreCheckPreset {
        cases_per_model: cfg.experiment.cases.unwrap_or(100),
        seed: cfg.seed,
    }
}

fn roundtrip_preset(cfg: &ExperimentConfig) -> Result<RoundtripPreset> {
    require(cfg.model_kind == ModelKind::HypercubeMixture, "model.kind", "hypercube for roundtrip")?;
    Ok(RoundtripPreset {
        r: cfg.r,
        d: cfg.d,
        horizon: cfg.horizon,
        trials: cfg.trials.unwrap_or(5),
        grid_sizes: cfg.experiment.grid_sizes.clone().unwrap_or_else(|| vec![512, 1024, 2048]),
        controls: controls(cfg, cfg.steps),
        seed: cfg.seed,
    })
}

fn projection_preset(cfg: &ExperimentConfig) -> Result<ProjectionPreset> {
    require(cfg.model_kind == ModelKind::HypercubeMixture, "model.kind", "hypercube for verify projection")?;
    require(cfg.sampler == SamplerKind::Ode, "guidance.sampler", "ode for verify projection")?;
    require(cfg.guidance == GuidanceKind::Dps, "guidance.guidance", "dps for verify projection")?;
    require(cfg.rho.is_none(), "guidance.rho", "omitted for sigma sweeps (auto 1/sigma^2)")?;
    Ok(ProjectionPreset {
        d: cfg.d,
        indices: inpainting_indices(cfg, "verify projection")?,
        r: cfg.r,
        horizon: cfg.horizon,
        sigmas: cfg.sigma_list.clone(),
        trials: cfg.trials.unwrap_or(20),
        controls: controls(cfg, cfg.steps),
        seed: cfg.seed,
        workers: cfg.workers,
        dump_trajectories: cfg.dump_trajectories,
    })
}

fn sde_failure_preset(cfg: &ExperimentConfig) -> Result<SdeFailurePreset> {
    require(cfg.model_kind == ModelKind::HypercubeMixture, "model.kind", "hypercube for verify sde-failure")?;
    require(cfg.sampler == SamplerKind::Sde, "guidance.sampler", "sde for verify sde-failure")?;
    require(cfg.guidance == GuidanceKind::Dps, "guidance.guidance", "dps for verify sde-failure")?;
    require(cfg.rho.is_none(), "guidance.rho", "omitted (auto 1/sigma^2)")?;
    Ok(SdeFailurePreset {
        d: cfg.d,
        indices: inpainting_indices(cfg, "verify sde-failure")?,
        r: cfg.r,
        sigma: cfg.sigma,
        horizon: cfg.horizon,
        trials: cfg.trials.unwrap_or(2000),
        sde_steps: cfg.experiment.sde_steps.unwrap_or(cfg.steps),
        controls: controls(cfg, crate::dynamics::DEFAULT_ODE_STEPS),
        seed: cfg.seed,
        workers: cfg.workers,
    })
}

fn contraction_preset(cfg: &ExperimentConfig) -> Result<ContractionPreset> {
    require(cfg.model_kind == ModelKind::Bimodal, "model.kind", "bimodal for verify contraction")?;
    require(cfg.d == 2, "model.d", "2 for verify contraction")?;
    require(cfg.guidance == GuidanceKind::Mdps, "guidance.guidance", "mdps for verify contraction")?;
    require(cfg.sampler == SamplerKind::Ode, "guidance.sampler", "ode for verify contraction")?;
    let v = match &cfg.measurement {
        MeasurementSpec::SingleVector(v) if v.len() == 2 => [v[0], v[1]],
        _ => {
            return Err(Error::ConstraintViolation {
                key: "measurement.kind".into(),
                constraint: "single-vector with length 2 for verify contraction".into(),
            })
        }
    };
    let defaults = ContractionPreset::default();
    Ok(ContractionPreset {
        r: cfg.r,
        v,
        sigmas: cfg.sigma_list.clone(),
        trials: cfg.trials.unwrap_or(defaults.trials),
        horizon: cfg.horizon,
        s_min: cfg.experiment.s_min.unwrap_or(defaults.s_min),
        s_max: cfg.experiment.s_max.unwrap_or(defaults.s_max),
        controls: controls(cfg, cfg.steps),
        seed: cfg.seed,
        workers: cfg.workers,
    })
}

fn dps_bias_preset(cfg: &ExperimentConfig) -> Result<DpsBiasPreset> {
    require(cfg.model_kind == ModelKind::IsoGaussian, "model.kind", "iso for verify dps-bias")?;
    require(cfg.d == 1, "model.d", "1 for verify dps-bias")?;
    require(cfg.sampler == SamplerKind::Sde, "guidance.sampler", "sde for verify dps-bias")?;
    match &cfg.measurement {
        MeasurementSpec::SingleVector(v) if v.len() == 1 && (v[0] - 1.0).abs() <= 1e-12 => {}
        _ => {
            return Err(Error::ConstraintViolation {
                key: "measurement.v".into(),
                constraint: "[1.0] for verify dps-bias".into(),
            })
        }
    }
    Ok(DpsBiasPreset {
        y: cfg.observation.unwrap_or(2.0),
        sigma: cfg.sigma,
        horizon: cfg.horizon,
        trials: cfg.trials.unwrap_or(5000),
        sde_steps: cfg.experiment.sde_steps.unwrap_or(cfg.steps),
        seed: cfg.seed,
        workers: cfg.workers,
    })
}

fn latent_geometry_preset(cfg: &ExperimentConfig) -> Result<LatentGeometryPreset> {
    require(cfg.model_kind == ModelKind::HypercubeMixture, "model.kind", "hypercube for verify latent-geometry")?;
    let defaults = LatentGeometryPreset::default();
    Ok(LatentGeometryPreset {
        d: cfg.d,
        indices: inpainting_indices(cfg, "verify latent-geometry")?,
        r: cfg.r,
        sigma: cfg.sigma,
        horizon: cfg.horizon,
        stds: cfg.experiment.stds.clone().unwrap_or(defaults.stds),
        mode_count: cfg.experiment.mode_count.unwrap_or(defaults.mode_count),
        reps_per_std: cfg.experiment.reps_per_std.unwrap_or(defaults.reps_per_std),
        controls: controls(cfg, cfg.steps),
        seed: cfg.seed,
    })
}

fn decoupling_preset(cfg: &ExperimentConfig) -> Result<DecouplingPreset> {
    require(cfg.model_kind == ModelKind::HypercubeMixture, "model.kind", "hypercube for verify decoupling")?;
    Ok(DecouplingPreset {
        d: cfg.d,
        indices: inpainting_indices(cfg, "verify decoupling")?,
        r: cfg.r,
        sigma: cfg.sigma,
        horizon: cfg.horizon,
        controls: controls(cfg, cfg.steps),
        seed: cfg.seed,
    })
}

// --- the single-run pipeline command ---------------------------------------------

fn run_reguidance_command(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    let start = Instant::now();
    let model = match cfg.model_kind {
        ModelKind::IsoGaussian => ModelSpec::iso_gaussian(cfg.d)?,
        ModelKind::HypercubeMixture => ModelSpec::hypercube(cfg.r, cfg.d)?,
        ModelKind::Bimodal => ModelSpec::bimodal(cfg.r, cfg.d)?,
    };
    let mut stream = rng::stream(cfg.seed);
    // Observation source: a mode of the model (the origin for the isotropic
    // model).
    let source: Vec<f64> = match cfg.model_kind {
        ModelKind::IsoGaussian => vec![0.0; cfg.d],
        ModelKind::HypercubeMixture => (0..cfg.d)
            .map(|_| if stream.random::<bool>() { cfg.r } else { -cfg.r })
            .collect(),
        ModelKind::Bimodal => {
            let mut z = vec![0.0; cfg.d];
            z[0] = cfg.r;
            z
        }
    };
    let meas = match &cfg.measurement {
        MeasurementSpec::Inpainting(idx) => Measurement::inpainting(idx, &source, cfg.sigma)?,
        MeasurementSpec::SingleVector(v) => match cfg.observation {
            Some(y) => Measurement::single_vector_with_observation(v, y, cfg.sigma)?,
            None => Measurement::single_vector(v, &source, cfg.sigma)?,
        },
    };
    let meas = match cfg.observation_noise {
        Some(n) if n > 0.0 => meas.with_observation_noise(n, &mut stream),
        _ => meas,
    };

    let gcfg = GuidanceConfig {
        rho: cfg.rho_for(cfg.sigma),
        horizon: cfg.horizon,
        sampler: cfg.sampler,
        guidance: cfg.guidance,
        steps: cfg.steps,
        rel_tol: cfg.rel_tol,
        min_step: cfg.min_step,
        seed: cfg.seed,
    };
    let x = models::sample_prior(&model, &mut stream);
    let (_, loss_in, _) = measure::residual_and_reward(&meas, &x)?;
    let res = reguidance::run_reguidance(&model, &meas, &x, &gcfg)?;
    let (_, loss_out, _) = measure::residual_and_reward(&meas, &res.output)?;

    let mut table = TrialTable::new(&["coord", "input", "latent", "output"]);
    for (i, ((xi, li), oi)) in x.iter().zip(&res.latent).zip(&res.output).enumerate() {
        table.push(vec![i as f64, *xi, *li, *oi]);
    }
    let mut report = VerifyReport::new("reguidance");
    report
        .param("command", cfg.command.as_str())
        .param("model", format!("{:?}", cfg.model_kind))
        .param("d", cfg.d)
        .param("r", cfg.r)
        .param("sigma", cfg.sigma)
        .param("seed", cfg.seed)
        .metric("final_reward", res.final_reward)
        .metric("final_distance_to_projection", res.final_distance_to_projection)
        .metric("nearest_mode_distance", res.nearest_mode_distance)
        .metric("input_loss", loss_in)
        .metric("output_loss", loss_out);
    report.runtime_seconds = start.elapsed().as_secs_f64();
    report.validate()?;
    let mut run = ExperimentRun::new(report, table);
    if cfg.dump_trajectories {
        run.trajectories = vec![
            ("latent_trajectory".to_string(), res.latent_trajectory),
            ("guided_trajectory".to_string(), res.guided_trajectory),
        ];
    }
    Ok(run)
}

// --- writers ---------------------------------------------------------------------

/// 17-significant-digit formatting for doubles; exact integers print plainly.
pub fn fmt_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 && v.is_finite() {
        format!("{v:.0}")
    } else {
        format!("{v:.16e}")
    }
}

/// Render the per-trial table plus the summary block.
pub fn render_csv(run: &ExperimentRun) -> String {
    let mut out = String::new();
    out.push_str(&run.table.columns.join(", "));
    out.push('\n');
    for row in &run.table.rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_value(*v)).collect();
        out.push_str(&cells.join(", "));
        out.push('\n');
    }
    out.push('\n');
    out.push_str("kind, name, value, metric, threshold\n");
    for (k, v) in &run.report.params {
        out.push_str(&format!("param, {k}, {v}, , \n"));
    }
    for (k, v) in &run.report.metrics {
        out.push_str(&format!("metric, {k}, {}, , \n", fmt_value(*v)));
    }
    for v in &run.report.verdicts {
        out.push_str(&format!(
            "verdict, {}, {}, {}, {}\n",
            v.name,
            if v.pass { "pass" } else { "fail" },
            v.metric,
            fmt_value(v.threshold)
        ));
    }
    out.push_str(&format!(
        "runtime, runtime_seconds, {}, , \n",
        fmt_value(run.report.runtime_seconds)
    ));
    out
}

/// JSON rendering of the report plus the per-trial table.
pub fn render_json(run: &ExperimentRun) -> Result<String> {
    let value = serde_json::json!({
        "report": run.report,
        "columns": run.table.columns,
        "rows": run.table.rows,
    });
    serde_json::to_string_pretty(&value)
        .map_err(|e| Error::ConfigParse(format!("report serialization: {e}")))
}

/// Trajectory CSV with the fixed header
/// `t, x_0, ..., x_{d-1}, reward, tanh_diag, meas_proj`.
pub fn render_trajectory_csv(traj: &Trajectory) -> String {
    let d = traj.states.first().map(|s| s.len()).unwrap_or(0);
    let mut out = String::from("t");
    for i in 0..d {
        out.push_str(&format!(", x_{i}"));
    }
    out.push_str(", reward, tanh_diag, meas_proj\n");
    for ((t, state), diag) in traj.times.iter().zip(&traj.states).zip(&traj.diagnostics) {
        out.push_str(&fmt_value(*t));
        for v in state {
            out.push_str(", ");
            out.push_str(&fmt_value(*v));
        }
        out.push_str(&format!(
            ", {}, {}, {}\n",
            fmt_value(diag.reward),
            fmt_value(diag.tanh_diag),
            fmt_value(diag.meas_proj)
        ));
    }
    out
}

/// Strip the wall-clock fields from a rendered CSV (for byte-identity
/// comparisons across reruns; runtime is the only nondeterministic content).
pub fn strip_runtime_fields(csv: &str) -> String {
    let mut out = String::new();
    let mut runtime_col: Option<usize> = None;
    for (i, line) in csv.lines().enumerate() {
        if i == 0 {
            runtime_col = line
                .split(", ")
                .position(|c| c.trim() == "runtime_s");
        }
        if line.starts_with("runtime, ") {
            continue;
        }
        match runtime_col {
            Some(col) if !line.is_empty() && !line.starts_with("kind, ") => {
                let cells: Vec<&str> = line.split(", ").collect();
                if cells.len() > col {
                    let kept: Vec<&str> = cells
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != col)
                        .map(|(_, c)| *c)
                        .collect();
                    out.push_str(&kept.join(", "));
                } else {
                    out.push_str(line);
                }
            }
            _ => out.push_str(line),
        }
        out.push('\n');
    }
    out
}

/// Write a string to a file, creating parent directories.
pub fn write_text(path: &PathBuf, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_formatting_is_roundtrip_safe() {
        for v in [0.05, 1.0 / 3.0, 2.0_f64.sqrt(), 1e-17, 123456.75] {
            let s = fmt_value(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, v, "{s}");
        }
        assert_eq!(fmt_value(5.0), "5");
        assert_eq!(fmt_value(-3.0), "-3");
    }

    #[test]
    fn trajectory_header_is_pinned() {
        let traj = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![vec![0.1, 0.2], vec![0.3, 0.4]],
            diagnostics: vec![
                crate::dynamics::StepDiagnostics { reward: 0.0, tanh_diag: 0.0, meas_proj: 0.0 },
                crate::dynamics::StepDiagnostics { reward: -1.0, tanh_diag: 0.5, meas_proj: 0.2 },
            ],
        };
        let csv = render_trajectory_csv(&traj);
        assert!(csv.starts_with("t, x_0, x_1, reward, tanh_diag, meas_proj\n"), "{csv}");
    }

    #[test]
    fn runtime_stripping_removes_only_runtime() {
        let csv = "sigma, trial, err_projection, err_raw, runtime_s\n\
                   0.05, 0, 1, 2, 0.123\n\n\
                   kind, name, value, metric, threshold\n\
                   metric, median, 1, , \n\
                   runtime, runtime_seconds, 9.9, , \n";
        let stripped = strip_runtime_fields(csv);
        assert!(!stripped.contains("runtime"));
        assert!(stripped.contains("0.05, 0, 1, 2"));
        assert!(stripped.contains("metric, median, 1"));
    }
}
