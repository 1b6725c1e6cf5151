use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use memlab::{acceptance, config::ExperimentKind, init_threads, run_file};

/// Bayes training-error experiments.
#[derive(Parser)]
#[command(name = "memlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in an INI config file.
    Run { config: PathBuf },
    /// List the available experiment kinds.
    ListExperiments,
    /// Run the acceptance suite.
    Check,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    match cli.command {
        Command::ListExperiments => {
            for kind in ExperimentKind::ALL {
                println!("{:<16} {}", kind.name(), kind.summary());
            }
            ExitCode::SUCCESS
        }
        Command::Run { config } => match run_file(&config) {
            Ok(manifests) => {
                let mut passed = true;
                for (path, manifest) in &manifests {
                    for run in &manifest.runs {
                        let status = if run.failures.is_empty() {
                            "ok"
                        } else {
                            "FAILED"
                        };
                        println!(
                            "{} [{}] {} checks, {} files, {:.1}s: {status}",
                            run.name,
                            run.experiment,
                            run.checks,
                            run.outputs.len(),
                            run.wall_clock_seconds
                        );
                        for f in &run.failures {
                            println!("  - {f}");
                        }
                    }
                    println!("manifest: {}", path.display());
                    passed &= manifest.passed;
                }
                if passed {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Check => {
            let results = acceptance::run_all(|r| println!("{r}"));
            let failed = results.iter().filter(|r| !r.passed).count();
            println!(
                "{} of {} criteria passed",
                results.len() - failed,
                results.len()
            );
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
