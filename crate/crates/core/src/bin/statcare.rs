use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use statcare::experiments::{
    self, cmd_asymptotics, cmd_estimate, cmd_estimate_paths, cmd_simulate, cmd_validate, ExperimentConfig,
};
use statcare::Error;

/// Riccati-equation estimation of multivariate stationary processes.
#[derive(Parser)]
#[command(name = "statcare", version)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the number of reps.
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate paths and write one CSV per rep plus a manifest.
    Simulate(RunArgs),
    /// Simulate (or read) paths and estimate on each.
    Estimate {
        #[command(flatten)]
        run: RunArgs,
        /// Estimate on these path CSVs instead of simulating.
        #[arg(long, num_args = 1..)]
        paths: Vec<PathBuf>,
    },
    /// Run validation suites (all when none named).
    Validate {
        suites: Vec<String>,
        /// List the registered suites and exit.
        #[arg(long)]
        list: bool,
    },
    /// Sample the limiting law of the scaled estimation error.
    Asymptotics(RunArgs),
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> Result<(), Error> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), Error> {
    emit(&serde_json::to_string_pretty(v)?)
}

/// Exit 0 on success, 1 when validation fails.
fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = load(&args)?;
            let m = experiments::with_jobs(cli.jobs, || cmd_simulate(&cfg))??;
            eprintln!("wrote {} paths under {}", m.paths.len(), cfg.output_dir.display());
            Ok(0)
        }
        Command::Estimate { run, paths } => {
            let cfg = load(&run)?;
            let rec = experiments::with_jobs(cli.jobs, || {
                if paths.is_empty() {
                    cmd_estimate(&cfg)
                } else {
                    cmd_estimate_paths(&cfg, &paths)
                }
            })??;
            print_json(&rec.aggregate)?;
            Ok(if rec.checks.iter().all(|c| c.passed) { 0 } else { 1 })
        }
        Command::Validate { suites, list } => {
            if list {
                let list: Vec<String> = experiments::suites::registry()
                    .iter()
                    .map(|s| format!("{:<20} {}", s.name, s.description))
                    .collect();
                emit(&list.join("\n"))?;
                return Ok(0);
            }
            let report = experiments::with_jobs(cli.jobs, || cmd_validate(&suites))??;
            print_json(&report)?;
            Ok(if report.passed { 0 } else { 1 })
        }
        Command::Asymptotics(args) => {
            let cfg = load(&args)?;
            let s = experiments::with_jobs(cli.jobs, || cmd_asymptotics(&cfg))??;
            eprintln!(
                "{} draws, {} gate failures, R² = {}",
                s.draws.len(),
                s.gate_failures,
                s.r_squared.map_or("n/a".to_string(), |r| format!("{r:.4}"))
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
