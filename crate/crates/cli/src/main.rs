use std::path::PathBuf;
use std::process::ExitCode as ProcessExit;

use clap::{Parser, Subcommand};

use puzzlelab_cli::config::ExperimentConfig;
use puzzlelab_cli::report::{aggregate_files, aggregates_to_csv, find_row_files, render_table};
use puzzlelab_cli::{run_to_dir, CliError, ExitCode};

/// Reproducible experiment harness for the sampling-reduction lab.
#[derive(Parser)]
#[command(name = "puzzlelab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config into an output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate result rows from a directory of CSV files.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| CliError::other(format!("reading {}: {e}", config.display())))?;
            let cfg = ExperimentConfig::from_json(&text).map_err(CliError::schema)?;
            let summary = run_to_dir(&cfg, &out)?;
            println!(
                "{}: {} ({} -> {})",
                summary.experiment,
                if summary.pass { "pass" } else { "fail" },
                summary.config_hash,
                out.display()
            );
            for (k, v) in &summary.metrics {
                println!("  {k} = {v}");
            }
            Ok(())
        }
        Command::Report { input } => {
            let files = find_row_files(&input)?;
            let aggs = aggregate_files(&files)?;
            print!("{}", render_table(&aggs));
            let csv = aggregates_to_csv(&aggs);
            std::fs::write(input.join("aggregate.csv"), csv)
                .map_err(|e| CliError::other(format!("writing aggregate.csv: {e}")))?;
            Ok(())
        }
    }
}

fn main() -> ProcessExit {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ProcessExit::from(ExitCode::Ok as u8),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ProcessExit::from(e.code as u8)
        }
    }
}
