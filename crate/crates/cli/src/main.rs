use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use kasnerlab::verify::{run_checks, SuiteConfig};
use kasnerlab::Execution;
use kasnerlab_cli::output::{config_json, output_paths, reproducibility, write_json};
use kasnerlab_cli::{experiments, CliError, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "kasnerlab", version, about = "Stochastic moduli experiments")]
struct Cli {
    /// Seed override (64-bit unsigned).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for CSV and JSON outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// `key=value` config override, repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write its CSV and JSON outputs.
    Run { config: PathBuf },
    /// Run the validation checks relevant to the configured experiment.
    Verify { config: PathBuf },
    /// List experiment names.
    ListExperiments,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode, CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    match &cli.command {
        Command::ListExperiments => {
            for e in Experiment::ALL {
                println!("{:<13} {}", e.name(), e.description());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config } => {
            let cfg = load(cli, config)?;
            run(&cfg, &cli.out_dir)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { config } => {
            let cfg = load(cli, config)?;
            verify(&cfg, &cli.out_dir)
        }
    }
}

fn load(cli: &Cli, path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::load(&text, cli.seed, &cli.overrides)
}

fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), CliError> {
    let (table, results) = experiments::run(cfg, Execution::Parallel)?;
    fs::create_dir_all(out_dir)?;
    let (csv_path, json_path) = output_paths(cfg, out_dir);
    fs::write(&csv_path, table.to_csv()?)?;
    let summary = json!({
        "experiment": cfg.experiment.name(),
        "config": config_json(cfg),
        "results": results,
        "reproducibility": reproducibility(cfg),
    });
    write_json(&json_path, &summary)?;
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn verify(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExitCode, CliError> {
    let ids = if cfg.verify_checks.is_empty() { cfg.experiment.checks() } else { cfg.verify_checks.clone() };
    let suite = SuiteConfig {
        seed: cfg.seed,
        scale: cfg.verify_scale,
        corrupt_lambda: cfg.verify_corrupt_lambda,
        exec: Execution::Parallel,
    };
    let results = run_checks(&ids, &suite);
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<u8> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    fs::create_dir_all(out_dir)?;
    let summary = json!({
        "experiment": cfg.experiment.name(),
        "config": config_json(cfg),
        "checks": results,
        "passed": failed.is_empty(),
        "failed": failed,
        "reproducibility": reproducibility(cfg),
    });
    write_json(&out_dir.join("verify.json"), &summary)?;
    if failed.is_empty() {
        println!("all {} checks passed", results.len());
        Ok(ExitCode::SUCCESS)
    } else {
        let list: Vec<String> = failed.iter().map(|id| format!("{id:02}")).collect();
        println!("{} of {} checks failed: {}", failed.len(), results.len(), list.join(", "));
        Ok(ExitCode::FAILURE)
    }
}
