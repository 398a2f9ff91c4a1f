//! Experiment runner for the clique-coupled solvers.
//!
//! Exit codes: 0 success, 2 parameter-validation failure, 3 method
//! divergence, 4 configuration or I/O error, 1 anything else.

mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cliquewise::experiment::{
    generate_instance, run_experiment, validate_methods, ExperimentConfig,
};
use cliquewise::solver::RunStatus;
use cliquewise::Error;

#[derive(Parser)]
#[command(
    name = "cliquewise",
    version,
    about = "Clique-coupled distributed optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write per-method CSVs plus a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run even if parameter validation fails.
        #[arg(long)]
        force: bool,
        /// Use the full-size instance (n = 50, edge probability 0.1).
        #[arg(long)]
        paper_scale: bool,
    },
    /// Generate the instance and report parameter-validation margins.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the built-in property suites.
    Selftest,
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::ValidationFailed(_) => 2,
        Error::Divergence { .. } => 3,
        Error::Io(_) | Error::Config(_) | Error::InvalidGraph(_) => 4,
        _ => 1,
    }
}

fn print_validation(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let instance = generate_instance(cfg)?;
    println!(
        "instance: n={} edges={} maximal_cliques={}",
        cfg.n,
        instance.graph.edge_count(),
        instance.family_maximal.len()
    );
    let reports = validate_methods(cfg, &instance)?;
    let mut all_ok = true;
    for (name, report) in &reports {
        match report {
            None => println!("{name}: no splitting parameters to validate"),
            Some(r) => {
                let worst = r.worst().map(|m| m.margin).unwrap_or(f64::INFINITY);
                println!(
                    "{name}: {} (worst margin {worst:+.3e})",
                    if r.ok() { "ok" } else { "FAILED" }
                );
                for m in r.failing() {
                    println!("  {} #{} margin {:+.6e}", m.condition, m.index, m.margin);
                }
                all_ok &= r.ok();
            }
        }
    }
    Ok(all_ok)
}

fn cmd_run(config: PathBuf, force: bool, paper_scale: bool) -> Result<u8, Error> {
    let mut cfg = load_config(&config)?;
    if paper_scale {
        cfg.apply_paper_scale();
    }
    let ok = print_validation(&cfg)?;
    if !ok && !force {
        return Err(Error::ValidationFailed(
            "validation failed; pass --force to run anyway".into(),
        ));
    }
    let outcome = run_experiment(&cfg, force)?;
    println!(
        "reference objective {:.12e} ({} iterations)",
        outcome.reference.objective, outcome.reference.iterations
    );
    for m in &outcome.methods {
        let status = match m.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::Diverged { iteration } => format!("DIVERGED at {iteration}"),
        };
        println!(
            "{}: {status}, final rel residual {}",
            m.name,
            m.final_rel_residual().map(|v| format!("{v:.3e}")).unwrap_or_else(|| "n/a".into())
        );
    }
    if let Some(check) = &outcome.lyapunov {
        println!(
            "lyapunov[{}]: monotone={} max_violation={:+.3e}",
            check.method, check.monotone, check.max_violation
        );
    }
    println!("wrote CSVs and summary to {}", cfg.output_dir.display());
    Ok(if outcome.any_divergence() { 3 } else { 0 })
}

fn cmd_validate(config: PathBuf) -> Result<u8, Error> {
    let cfg = load_config(&config)?;
    Ok(if print_validation(&cfg)? { 0 } else { 2 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, force, paper_scale } => cmd_run(config, force, paper_scale),
        Command::Validate { config } => cmd_validate(config),
        Command::Selftest => Ok(selftest::run_all()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
