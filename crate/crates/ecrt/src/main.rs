use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ecrt::config::one_line_message;
use ecrt::io::write_file;
use ecrt::parallel::thread_pool;
use ecrt::{run_estimation, run_simulation, run_summary, CliError, OutputFormat, RunConfig};

/// Generalize and transport cluster randomized trial results to a target
/// population of clusters.
#[derive(Parser)]
#[command(name = "ecrt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the working models and report every requested estimator.
    Estimate(Common),
    /// Compute the oracle truth and run the misspecification scenarios.
    Simulate(Common),
    /// Load and validate the data without fitting anything.
    Validate(Common),
    /// Print a summary of the dataset.
    Summary(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Override the seed of the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; one per core by default.
    #[arg(long)]
    threads: Option<usize>,
    /// Show estimates on the percentage scale.
    #[arg(long)]
    percent: bool,
}

fn execute(command: Command) -> Result<(String, Vec<String>, Option<PathBuf>), CliError> {
    let (Command::Estimate(common) | Command::Simulate(common) | Command::Validate(common) | Command::Summary(common)) =
        &command;
    let mut cfg = RunConfig::from_path(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let format = common.format.or(cfg.format).unwrap_or_default();
    let percent = common.percent || cfg.percent;
    let out = common.out.clone().or_else(|| cfg.output.clone());
    let pool = thread_pool(common.threads)?;
    let (text, warnings) = match command {
        Command::Estimate(_) => {
            let report = run_estimation(&cfg, &pool)?;
            (report.render(format, percent), report.warnings)
        }
        Command::Simulate(_) => {
            let report = run_simulation(&cfg, &pool)?;
            (report.render(format), report.warnings)
        }
        Command::Summary(_) => {
            let report = run_summary(&cfg)?;
            (report.render(format), report.warnings)
        }
        Command::Validate(_) => {
            let report = run_summary(&cfg)?;
            let s = &report.summary;
            let text = format!(
                "ok: {} clusters ({} randomized), {} individuals, {} arms\n",
                s.clusters,
                s.trial_clusters,
                s.individuals,
                s.clusters_per_arm.len()
            );
            (text, report.warnings)
        }
    };
    Ok((text, warnings, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok((text, warnings, out)) => {
            for w in &warnings {
                eprintln!("warning: {}", one_line_message(w));
            }
            match out {
                Some(path) => {
                    if let Err(e) = write_file(&path, &text) {
                        eprintln!("error[{}]: {}", e.code(), one_line_message(&e.to_string()));
                        return ExitCode::FAILURE;
                    }
                }
                None => print!("{text}"),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), one_line_message(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
