use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ne_sgd::harness::{self, ExperimentConfig};
use ne_sgd::Error;

#[derive(Parser)]
#[command(name = "ne-sgd", version, about = "Evolve retain/reinitialize masks of network blocks with SGD retraining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Converge a network, evolve block masks and save the best retrained network.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for fitness evaluation (0 = all cores). Results do not depend on it.
        #[arg(long)]
        parallel: Option<usize>,
        /// Output directory; defaults to `output.dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the same architecture repeatedly with plain SGD and summarize accuracy.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        /// Number of repeats; defaults to `baseline.repeats` from the config.
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        parallel: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render report.svg and report.txt from a run directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, Error> {
    ExperimentConfig::load(path)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, parallel, out } => load(&config).and_then(|cfg| {
            let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
            let artifacts = harness::run_experiment(&cfg, &dir, parallel.unwrap_or(cfg.parallel))?;
            let best = &artifacts.outcome.best;
            println!(
                "best individual {} genome {} validation {:.4} test {:.4} (base validation {:.4})",
                best.id,
                best.genome,
                best.raw_fitness.unwrap_or(0.0),
                artifacts.test_accuracy,
                artifacts.outcome.base_validation_accuracy
            );
            println!("wrote {}", dir.display());
            Ok(())
        }),
        Command::Baseline {
            config,
            repeats,
            parallel,
            out,
        } => load(&config).and_then(|cfg| {
            let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
            let repeats = repeats.unwrap_or(cfg.baseline.repeats);
            let artifacts = harness::run_baseline(&cfg, &dir, repeats, parallel.unwrap_or(cfg.parallel))?;
            let s = artifacts.summary;
            println!(
                "test accuracy over {repeats} runs: min {:.4} q1 {:.4} median {:.4} q3 {:.4} max {:.4} sd {:.4}",
                s.minimum, s.lower_quartile, s.median, s.upper_quartile, s.maximum, s.standard_deviation
            );
            println!("wrote {}", dir.display());
            Ok(())
        }),
        Command::Report { dir } => harness::report(&dir).map(|summary| {
            println!(
                "{} generations, best accuracy {:.4}; wrote {}",
                summary.generations,
                summary.best_accuracy,
                dir.join(harness::output::REPORT_SVG).display()
            );
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
