//! `esdc` — driver binary for single runs, convergence sweeps, and
//! robustness matrices. See the README for the configuration format.

use clap::{Parser, Subcommand};
use esdc::{config, driver, Error};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "esdc",
    about = "Entropy-stable spectral-element solver for 3D compressible flow",
    long_about = "Runs the entropy-stable (es-c), split-form (sf-kg), and divergence-form (dc)\n\
                  collocation discretizations of the 3D compressible Euler/Navier-Stokes\n\
                  equations from a plain-text configuration file.\n\n\
                  Exit codes: 0 clean finish, 2 configuration error, 10 blow-up,\n\
                  1 failed order assertion (sweep only).\n\n\
                  Set ESDC_THREADS to bound the element-parallel thread pool."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and write timeseries/summary artifacts.
    Run {
        /// Path to the configuration file (needs a [run] section).
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a (p, K) grid sequence and fit convergence orders.
    Sweep {
        /// Path to the configuration file (needs [run] and [sweep]).
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a scheme × p × K stability matrix and render the ✓/✗ table.
    Robustness {
        /// Path to the configuration file (needs [run] and [robustness]).
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("ESDC_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                // Errors only if a global pool already exists, which cannot
                // happen this early; ignore to stay idempotent anyway.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: ESDC_THREADS must be a positive integer, got `{threads}`");
                return ExitCode::from(driver::EXIT_CONFIG as u8);
            }
        }
    }

    let cli = Cli::parse();
    let code = match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            driver::EXIT_CONFIG
        }
    };
    ExitCode::from(code as u8)
}

fn dispatch(cli: &Cli) -> Result<i32, Error> {
    match &cli.command {
        Command::Run { config } => {
            let text = std::fs::read_to_string(config)?;
            let cfg = config::load_run(&text)?;
            let summary = driver::run(&cfg)?;
            let p = &summary.payload;
            println!(
                "{} {} p={} K={}x{}x{} -> {} at t={:.6} ({} steps, {} rhs evals, {:.2}s)",
                p.case,
                p.scheme,
                p.p,
                p.elements[0],
                p.elements[1],
                p.elements[2],
                p.outcome,
                p.t_reached,
                p.steps_accepted,
                p.rhs_evaluations,
                summary.wall_clock_seconds
            );
            if let Some(b) = &p.blow_up {
                println!(
                    "blow-up: {} in element {} node {} at t={:.6}",
                    b.what, b.element, b.node, b.time
                );
            }
            println!("artifacts in {}", cfg.output.display());
            Ok(driver::exit_code(&p.outcome))
        }
        Command::Sweep { config } => {
            let text = std::fs::read_to_string(config)?;
            let (template, spec) = config::load_sweep(&text)?;
            let report = driver::sweep(&template, &spec)?;
            for row in &report.rows {
                let err = row
                    .l2_error
                    .map(|e| format!("{:.3e}", e[0]))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "p={} K={}^3 dofs/dir={} err_rho={} {} ({:.2}s)",
                    row.p,
                    row.k,
                    row.dofs_per_direction,
                    err,
                    row.outcome,
                    row.wall_clock_seconds
                );
            }
            let mut ok = true;
            for fit in &report.fits {
                println!(
                    "p={}: fitted order rho={:.3} over {} grids",
                    fit.p, fit.order[0], fit.points
                );
                if spec.assert_order && !(fit.order[0] >= fit.p as f64 - 0.3) {
                    println!(
                        "order assertion FAILED for p={}: {:.3} < {:.3}",
                        fit.p,
                        fit.order[0],
                        fit.p as f64 - 0.3
                    );
                    ok = false;
                }
            }
            println!("tables in {}", template.output.display());
            Ok(if ok { driver::EXIT_OK } else { 1 })
        }
        Command::Robustness { config } => {
            let text = std::fs::read_to_string(config)?;
            let (template, spec) = config::load_robustness(&text)?;
            let report = driver::robustness_matrix(&template, &spec)?;
            print!("{}", report.table);
            println!("tables in {}", template.output.display());
            Ok(driver::EXIT_OK)
        }
    }
}
