//! `qesgd` — run quantized-SGD experiments, fit convergence rates, and
//! compare methods.
//!
//! Exit codes: 0 success, 1 validation error (bad arguments or config),
//! 2 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use qesgd_cli::{compare_methods, csvio, fit::fit_convergence_slope, parse_config, run_experiment};

#[derive(Parser)]
#[command(name = "qesgd", version, about = "Quantized Epoch-SGD experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        /// Path to the experiment config.
        config: PathBuf,
        /// Write outputs here instead of the config's out_dir.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Run only this seed, ignoring the config's seed list.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Fit a log-log convergence slope to a trajectory CSV.
    Fit {
        /// Trajectory CSV produced by `run`.
        trajectory: PathBuf,
        /// Epoch window `t_lo t_hi` for the fit.
        #[arg(long, num_args = 2, value_names = ["T_LO", "T_HI"], required = true)]
        window: Vec<u64>,
    },
    /// Tabulate two or more method summaries on the same problem.
    Compare {
        /// Summary CSVs produced by `run`.
        #[arg(required = true, num_args = 2..)]
        summaries: Vec<PathBuf>,
        /// Also write the comparison as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };

    match cli.command {
        Command::Run {
            config,
            out_dir,
            seed_override,
        } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(EXIT_RUNTIME);
                }
            };
            let parsed = match parse_config(&text) {
                Ok(c) => c,
                Err(errors) => {
                    for e in errors {
                        eprintln!("error: {}: {e}", config.display());
                    }
                    return ExitCode::from(EXIT_VALIDATION);
                }
            };
            match run_experiment(&parsed, out_dir.as_deref(), seed_override) {
                Ok(artifacts) => {
                    for p in &artifacts.trajectory_paths {
                        println!("trajectory: {}", p.display());
                    }
                    println!("summary: {}", artifacts.summary_path.display());
                    let s = &artifacts.summary;
                    println!(
                        "{}: initial {:.6e}, final median {:.6e}, slope {:.4}, uplink {} B, downlink {} B",
                        s.method,
                        s.initial_suboptimality,
                        s.final_suboptimality_median,
                        s.slope,
                        s.uplink_bytes,
                        s.downlink_bytes
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Command::Fit { trajectory, window } => {
            let rows = match csvio::read_trajectory(&trajectory) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            };
            let series: Vec<(u64, f64)> = rows
                .iter()
                .filter(|r| r.inner == 0)
                .map(|r| (r.epoch, r.suboptimality))
                .collect();
            match fit_convergence_slope(&series, window[0], window[1]) {
                Ok(fit) => {
                    println!("{fit}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_VALIDATION)
                }
            }
        }
        Command::Compare { summaries, csv } => {
            let mut all = Vec::new();
            for path in &summaries {
                match csvio::read_summary(path) {
                    Ok(mut s) => all.append(&mut s),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(EXIT_RUNTIME);
                    }
                }
            }
            match compare_methods(&all) {
                Ok(report) => {
                    print!("{}", report.markdown);
                    if let Some(path) = csv {
                        if let Err(e) = std::fs::write(&path, &report.csv) {
                            eprintln!("error: cannot write {}: {e}", path.display());
                            return ExitCode::from(EXIT_RUNTIME);
                        }
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_VALIDATION)
                }
            }
        }
    }
}
