use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sparsign::experiment::{
    bound_check, render_bound_report, run_experiment, BoundCheckSpec, ExperimentOptions,
    ExperimentSpec,
};

/// Simulator and analysis toolkit for sign- and ternary-compressed
/// distributed SGD under data heterogeneity.
#[derive(Parser)]
#[command(name = "sparsign", version, about)]
struct Cli {
    /// Worker threads for parallel repeats (defaults to the CPU count).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec: one CSV per repeat plus a summary file.
    Run {
        /// Path to the experiment JSON spec.
        spec: PathBuf,
        /// Override the spec's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the spec's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify the wrong-aggregation bound against exact enumeration.
    BoundCheck {
        /// Path to the bound-check JSON spec.
        spec: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // Best effort; a pool may already exist in embedded use.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match execute(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn execute(command: Command) -> sparsign::Result<ExitCode> {
    match command {
        Command::Run { spec, seed, out } => {
            let spec = ExperimentSpec::load(&spec)?;
            let options = ExperimentOptions {
                seed_override: seed,
                out_override: out,
            };
            let outcome = run_experiment(&spec, &options)?;
            for path in &outcome.csv_paths {
                println!("wrote {}", path.display());
            }
            println!("wrote {}", outcome.summary_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::BoundCheck { spec } => {
            let spec = BoundCheckSpec::load(&spec)?;
            let (rows, all_ok) = bound_check(&spec)?;
            print!("{}", render_bound_report(&rows));
            let checked = rows.iter().filter(|r| r.slack.is_some()).count();
            println!("checked {checked} configurations; all slack >= 0: {all_ok}");
            if all_ok {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
    }
}
