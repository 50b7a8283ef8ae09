//! End-to-end tests of the config format, the command dispatcher, the emitted
//! file formats and the binary's exit-status contract.

use reglab::cli::{self, run_command};
use reglab::config::{parse_config, Command, OutputFormat, VerifyExperiment};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

fn small_projection_config(out: &Path, format: &str) -> String {
    format!(
        r#"
command = "verify projection"

[model]
kind = "hypercube"
r = 3.0
d = 4

[measurement]
kind = "inpainting"
indices = [1, 2]
sigma = 0.05
sigma_list = [0.1, 0.05]

[run]
trials = 3
seed = 11
format = "{format}"
out = "{}"
"#,
        out.display()
    )
}

#[test]
fn projection_csv_has_the_pinned_columns_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&small_projection_config(dir.path(), "csv")).unwrap();
    let outcome = run_command(&cfg).unwrap();
    assert_eq!(outcome.exit_code, 0);
    let text = fs::read_to_string(&outcome.report_path).unwrap();
    assert!(
        text.starts_with("sigma, trial, err_projection, err_raw, runtime_s\n"),
        "header: {}",
        text.lines().next().unwrap()
    );
    assert!(text.contains("kind, name, value, metric, threshold"));
    assert!(text.contains("verdict, err_at_smallest_sigma, pass"));
    assert!(text.contains("metric, median_err_sigma_0.05"));
    // 3 trials x 2 sigmas data rows.
    let data_rows = text
        .lines()
        .skip(1)
        .take_while(|l| !l.is_empty())
        .count();
    assert_eq!(data_rows, 6);
}

#[test]
fn reruns_are_byte_identical_modulo_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&small_projection_config(dir.path(), "csv")).unwrap();
    let a = run_command(&cfg).unwrap();
    let first = fs::read_to_string(&a.report_path).unwrap();
    let b = run_command(&cfg).unwrap();
    let second = fs::read_to_string(&b.report_path).unwrap();
    assert_eq!(
        cli::strip_runtime_fields(&first),
        cli::strip_runtime_fields(&second),
        "deterministic ODE reruns must agree byte for byte outside the wall-clock fields"
    );
}

#[test]
fn json_report_parses_and_carries_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&small_projection_config(dir.path(), "json")).unwrap();
    let outcome = run_command(&cfg).unwrap();
    let text = fs::read_to_string(&outcome.report_path).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(value["report"]["experiment"], "projection");
    assert!(value["report"]["verdicts"].as_array().unwrap().len() >= 3);
    assert_eq!(value["columns"][0], "sigma");
    assert_eq!(value["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn reguidance_dump_writes_pinned_trajectory_headers() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
command = "reguidance"

[model]
kind = "hypercube"
r = 3.0
d = 3

[measurement]
kind = "inpainting"
indices = [1]
sigma = 0.1

[run]
seed = 3
dump_trajectories = true
out = "{}"
"#,
        dir.path().display()
    );
    let cfg = parse_config(&text).unwrap();
    let outcome = run_command(&cfg).unwrap();
    assert_eq!(outcome.exit_code, 0);
    assert_eq!(outcome.trajectory_paths.len(), 2);
    for path in &outcome.trajectory_paths {
        let t = fs::read_to_string(path).unwrap();
        assert!(
            t.starts_with("t, x_0, x_1, x_2, reward, tanh_diag, meas_proj\n"),
            "{}: {}",
            path.display(),
            t.lines().next().unwrap()
        );
    }
}

#[test]
fn failing_verdicts_exit_nonzero_with_summary() {
    // A reversed sigma list makes the contraction gap trend fail by
    // construction.
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
command = "verify contraction"

[model]
kind = "bimodal"
r = 5.0
d = 2

[measurement]
kind = "single-vector"
v = [0.70710678118654752, 0.70710678118654752]
sigma = 0.05
sigma_list = [0.005, 0.05]

[guidance]
guidance = "mdps"

[run]
trials = 2
seed = 0
out = "{}"
"#,
        dir.path().display()
    );
    let cfg = parse_config(&text).unwrap();
    let outcome = run_command(&cfg).unwrap();
    assert_eq!(outcome.exit_code, 1);
    let summary = outcome.failure_summary().expect("failure summary");
    let value: serde_json::Value = serde_json::from_str(&summary).unwrap();
    let failed = value["failed_verdicts"].as_array().unwrap();
    assert!(failed.iter().any(|v| v["name"] == "c_gap_decreasing"), "{summary}");
}

#[test]
fn shipped_presets_all_parse() {
    let presets = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("presets");
    let mut count = 0;
    for entry in fs::read_dir(presets).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let text = fs::read_to_string(&path).unwrap();
        let cfg = parse_config(&text)
            .unwrap_or_else(|e| panic!("{} failed to parse: {e}", path.display()));
        count += 1;
        if path.file_name().unwrap() == "projection.toml" {
            assert_eq!(cfg.command, Command::Verify(VerifyExperiment::Projection));
            assert_eq!(cfg.d, 8);
            assert_eq!(cfg.sigma_list, vec![0.2, 0.1, 0.05]);
            assert_eq!(cfg.trials, Some(20));
        }
        if path.file_name().unwrap() == "sde_failure.toml" {
            assert_eq!(cfg.trials, Some(2000));
            assert_eq!(cfg.steps, 8192);
        }
    }
    assert!(count >= 9, "expected the full preset set, found {count}");
}

#[test]
fn binary_runs_a_preset_and_respects_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("score.toml");
    fs::write(&config_path, "command = \"score-check\"\n\n[experiment]\ncases = 10\n").unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_reglab"))
        .arg("--config")
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path())
        .arg("--format")
        .arg("json")
        .env("REGLAB_WORKERS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("score_check_report.json").exists());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("verdict score_matches_log_density: PASS"), "{stderr}");
}

#[test]
fn binary_rejects_unknown_commands_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("bad.toml");
    fs::write(&config_path, "command = \"frobnicate\"\n").unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_reglab"))
        .arg("--config")
        .arg(&config_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown command"), "{stderr}");
    assert!(stderr.contains("score-check"), "usage should list the commands: {stderr}");
}

#[test]
fn seed_override_changes_the_draws() {
    let dir = tempfile::tempdir().unwrap();
    let base = small_projection_config(dir.path(), "csv");
    let mut cfg = parse_config(&base).unwrap();
    let a = run_command(&cfg).unwrap();
    let first = fs::read_to_string(&a.report_path).unwrap();
    cfg.seed = 99;
    let b = run_command(&cfg).unwrap();
    let second = fs::read_to_string(&b.report_path).unwrap();
    assert_ne!(
        cli::strip_runtime_fields(&first),
        cli::strip_runtime_fields(&second)
    );
}

#[test]
fn output_format_flag_is_validated() {
    assert_eq!(
        match parse_config(&small_projection_config(Path::new("x"), "yaml")) {
            Err(reglab::Error::ConstraintViolation { key, .. }) => key,
            other => panic!("expected constraint violation, got {other:?}"),
        },
        "run.format"
    );
    let _ = OutputFormat::Csv;
}
