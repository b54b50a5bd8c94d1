//! Command-line front end: `run` a configured sweep, `verify` the invariant
//! suites, `plot` tabular figure data from a results CSV.
//!
//! Exit codes: 0 success, 1 config error, 2 verification failure,
//! 3 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mlse::error::Error;
use mlse::harness::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mlse", version, about = "Multiscale GP level-set estimation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment sweep described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Added to every seed, for sharding sweeps across invocations.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Run the cross-module verification suite at the config's setting.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Write plot data files from a results CSV.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &std::path::Path) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Ok(dir) = std::env::var("MLSE_OUTPUT_DIR") {
        if !dir.is_empty() {
            cfg.output_dir = PathBuf::from(dir);
        }
    }
    Ok(cfg)
}

fn exit_for(err: &Error) -> ExitCode {
    match err {
        Error::Config { .. } | Error::Json(_) => ExitCode::from(1),
        _ => ExitCode::from(3),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            threads,
            seed_offset,
        } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(1);
                }
            };
            match harness::run_experiment(&cfg, threads, seed_offset) {
                Ok(result) => {
                    println!(
                        "wrote {} rows to {}",
                        result.rows.len(),
                        cfg.output_dir.join("results.csv").display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("run failed: {e}");
                    exit_for(&e)
                }
            }
        }
        Command::Verify { config, threads } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(1);
                }
            };
            match harness::verify_suite(&cfg, threads) {
                Ok(report) => {
                    print!("{}", report.render());
                    if report.all_passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(2)
                    }
                }
                Err(e) => {
                    eprintln!("verify failed: {e}");
                    exit_for(&e)
                }
            }
        }
        Command::Plot { input, out } => match harness::read_results_csv(&input)
            .and_then(|rows| harness::emit_plot_data(&rows, &out))
        {
            Ok(files) => {
                for f in files {
                    println!("wrote {}", f.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("plot failed: {e}");
                exit_for(&e)
            }
        },
    }
}
