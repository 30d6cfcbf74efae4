//! Scenario-driven command line front end.
//!
//! Exit codes: 0 suite passed, 1 suite failed, 2 validation error,
//! 3 numerical failure.

use clap::{Parser, Subcommand};
use hjgeo::scenario::{bundled, run_flow, run_scenario, Scenario, ScenarioError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "hjgeo", version, about = "Geometric Hamilton-Jacobi verification suites")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file (or every bundled scenario with --all)
    Run {
        /// Path to a scenario JSON file
        file: Option<PathBuf>,
        /// Run all bundled scenarios instead of a file
        #[arg(long)]
        all: bool,
        /// Directory for report files
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Report format
        #[arg(long, default_value = "json", value_parser = ["json", "csv"])]
        format: String,
        /// Override the scenario tolerance
        #[arg(long)]
        tol: Option<f64>,
        /// Override the sampling seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the bundled scenarios
    ListScenarios {
        /// Only show scenarios of this kind
        #[arg(long)]
        kind: Option<String>,
    },
    /// Integrate the scenario's dynamical field from numeric.x0 and dump CSV
    Flow {
        /// Path to a scenario JSON file
        file: PathBuf,
        /// Final time (integration runs over [t0, t0 + tmax])
        #[arg(long)]
        tmax: f64,
        /// Step size
        #[arg(long)]
        h: f64,
    },
}

const EXIT_FAIL: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn error_code(e: &ScenarioError) -> u8 {
    match e {
        ScenarioError::Validation(_) => EXIT_VALIDATION,
        ScenarioError::Numerical(_) => EXIT_NUMERICAL,
    }
}

fn load(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Validation(format!("{}: {e}", path.display())))?;
    Scenario::from_json(&text)
}

fn run_one(
    sc: &Scenario,
    out: &Path,
    format: &str,
    tol: Option<f64>,
    seed: Option<u64>,
) -> Result<bool, ScenarioError> {
    let started = Instant::now();
    let report = run_scenario(sc, tol, seed)?;
    let (ext, body) = match format {
        "csv" => ("csv", report.to_csv()),
        _ => ("json", report.to_json()),
    };
    let path = out.join(format!("{}.report.{ext}", report.name));
    std::fs::write(&path, body)
        .map_err(|e| ScenarioError::Validation(format!("{}: {e}", path.display())))?;
    println!(
        "{}: {} ({} checks, report {})",
        report.name,
        report.verdict,
        report.checks.len(),
        path.display()
    );
    eprintln!("{}: {:.3}s", report.name, started.elapsed().as_secs_f64());
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run {
            file,
            all,
            out,
            format,
            tol,
            seed,
        } => {
            let scenarios: Vec<Scenario> = if all {
                let mut list = Vec::new();
                for (name, text) in bundled() {
                    match Scenario::from_json(text) {
                        Ok(sc) => list.push(sc),
                        Err(e) => {
                            eprintln!("error: {name}: {e}");
                            return ExitCode::from(EXIT_VALIDATION);
                        }
                    }
                }
                list
            } else {
                let Some(path) = file else {
                    eprintln!("error: provide a scenario file or --all");
                    return ExitCode::from(EXIT_VALIDATION);
                };
                match load(&path) {
                    Ok(sc) => vec![sc],
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(error_code(&e));
                    }
                }
            };
            let mut all_passed = true;
            for sc in &scenarios {
                match run_one(sc, &out, &format, tol, seed) {
                    Ok(passed) => all_passed &= passed,
                    Err(e) => {
                        eprintln!("error: {}: {e}", sc.name);
                        return ExitCode::from(error_code(&e));
                    }
                }
            }
            if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            }
        }
        Cmd::ListScenarios { kind } => {
            println!("{:<26} {:<22} description", "name", "kind");
            for (_, text) in bundled() {
                let sc = Scenario::from_json(text).expect("bundled scenarios validate");
                if let Some(k) = &kind {
                    if sc.kind.as_str() != k {
                        continue;
                    }
                }
                println!("{:<26} {:<22} {}", sc.name, sc.kind.as_str(), sc.description);
            }
            ExitCode::SUCCESS
        }
        Cmd::Flow { file, tmax, h } => {
            let sc = match load(&file) {
                Ok(sc) => sc,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(error_code(&e));
                }
            };
            match run_flow(&sc, tmax, h) {
                Ok(csv) => {
                    print!("{csv}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(error_code(&e))
                }
            }
        }
    }
}
