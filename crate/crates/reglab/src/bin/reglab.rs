//! Thin command-line front end: load a config file, dispatch it, report the
//! verdicts. All real work lives in the library.

use clap::Parser;
use reglab::config::{self, OutputFormat};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "reglab",
    version,
    about = "Numerical laboratory for guided diffusion sampling on analytic Gaussian mixtures",
    after_help = "Exit status is 0 exactly when every verdict in the emitted report passed;\n\
                  1 when a verdict failed (a JSON failure summary goes to stdout);\n\
                  2 on configuration errors."
)]
struct Args {
    /// Experiment config file (see presets/ for the shipped examples).
    #[arg(long)]
    config: PathBuf,
    /// Override the base seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for trial parallelism (0 = all cores). Falls back to
    /// the REGLAB_WORKERS environment variable, then the config file.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format override.
    #[arg(long, value_name = "csv|json")]
    format: Option<String>,
    /// Also write per-step trajectory files (large).
    #[arg(long)]
    dump_trajectories: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(args: Args) -> reglab::Result<u8> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = config::parse_config(&text)?;

    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    } else if let Ok(env_workers) = std::env::var("REGLAB_WORKERS") {
        cfg.workers = env_workers.parse().map_err(|_| {
            reglab::Error::ConfigParse(format!(
                "REGLAB_WORKERS must be an unsigned integer, got '{env_workers}'"
            ))
        })?;
    }
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    if let Some(format) = &args.format {
        cfg.format = match format.as_str() {
            "csv" => OutputFormat::Csv,
            "json" => OutputFormat::Json,
            other => {
                return Err(reglab::Error::ConfigParse(format!(
                    "--format must be csv or json, got '{other}'"
                )))
            }
        };
    }
    if args.dump_trajectories {
        cfg.dump_trajectories = true;
    }

    let outcome = reglab::cli::run_command(&cfg)?;
    eprintln!("report: {}", outcome.report_path.display());
    for path in &outcome.trajectory_paths {
        eprintln!("trajectory: {}", path.display());
    }
    for v in &outcome.report.verdicts {
        eprintln!(
            "verdict {}: {} ({} vs threshold {})",
            v.name,
            if v.pass { "PASS" } else { "FAIL" },
            outcome
                .report
                .metrics
                .get(&v.metric)
                .map(|m| reglab::cli::fmt_value(*m))
                .unwrap_or_default(),
            reglab::cli::fmt_value(v.threshold)
        );
    }
    if let Some(summary) = outcome.failure_summary() {
        println!("{summary}");
    }
    Ok(outcome.exit_code as u8)
}
