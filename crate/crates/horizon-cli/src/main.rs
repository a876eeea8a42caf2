//! `horizon-rbsde`: run scenario files and calibrate the estimate constants.
//!
//! Exit codes: 0 success, 1 a suite failed, 2 unreadable or malformed
//! input, 3 validation error, 4 enumeration budget exceeded. Errors are
//! also printed to stderr as a JSON block.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use horizon::calibration::{self, CorpusSpec};
use horizon::report::{self, RunOptions};
use horizon::scenario::{parse_error, Scenario};
use horizon::{Backend, HorizonError};

const BUDGET_VAR: &str = "HORIZON_RBSDE_BUDGET";

#[derive(Parser)]
#[command(name = "horizon-rbsde", version, about = "Optimal stopping and reflected BSDEs under a random horizon")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites of a scenario file and write report.json and tables/*.csv.
    Run {
        file: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the backend named in the scenario.
        #[arg(long)]
        backend: Option<BackendArg>,
        /// Worker threads for suites and corpus runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Evaluate a corpus spec and write the frozen-constant ledger.
    Calibrate {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Rational,
    Float,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Rational => Backend::Rational,
            BackendArg::Float => Backend::Float,
        }
    }
}

enum Failure {
    Horizon(HorizonError),
    Io(PathBuf, std::io::Error),
    SuitesFailed(Vec<String>),
}

impl From<HorizonError> for Failure {
    fn from(e: HorizonError) -> Self {
        Failure::Horizon(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::SuitesFailed(_) => 1,
            Failure::Io(..) | Failure::Horizon(HorizonError::Parse { .. }) => 2,
            Failure::Horizon(HorizonError::Budget { .. }) => 4,
            Failure::Horizon(_) => 3,
        }
    }

    fn block(&self) -> serde_json::Value {
        let (kind, extra) = match self {
            Failure::SuitesFailed(s) => ("suite_failure", serde_json::json!({ "failed_suites": s })),
            Failure::Io(p, _) => ("io", serde_json::json!({ "path": p.display().to_string() })),
            Failure::Horizon(HorizonError::Parse { line, column, .. }) => {
                ("parse", serde_json::json!({ "line": line, "column": column }))
            }
            Failure::Horizon(HorizonError::Budget { needed, budget }) => (
                "budget",
                serde_json::json!({ "needed": needed.to_string(), "budget": budget.to_string() }),
            ),
            Failure::Horizon(_) => ("validation", serde_json::json!({})),
        };
        let message = match self {
            Failure::Horizon(e) => e.to_string(),
            Failure::Io(p, e) => format!("{}: {e}", p.display()),
            Failure::SuitesFailed(s) => format!("suites failed: {}", s.join(", ")),
        };
        serde_json::json!({ "error": { "kind": kind, "exit_code": self.code(), "message": message, "detail": extra } })
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(path.to_path_buf(), e))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(dir.to_path_buf(), e))?;
    }
    std::fs::write(path, contents).map_err(|e| Failure::Io(path.to_path_buf(), e))
}

fn env_budget() -> Result<Option<u128>, Failure> {
    match std::env::var(BUDGET_VAR) {
        Ok(v) => v
            .trim()
            .parse::<u128>()
            .map(Some)
            .map_err(|_| HorizonError::Validation(format!("{BUDGET_VAR}={v:?} is not a nonnegative integer")).into()),
        Err(_) => Ok(None),
    }
}

fn run(file: &Path, out: &Path, backend: Option<BackendArg>, jobs: usize) -> Result<(), Failure> {
    let sc = Scenario::parse(&read(file)?)?;
    let opts = RunOptions { backend: backend.map(Backend::from), jobs, budget: env_budget()?, ..RunOptions::default() };
    let rep = report::run(&sc, &opts)?;
    write(&out.join("report.json"), &rep.to_json())?;
    for t in rep.tables() {
        write(&out.join("tables").join(&t.name), &t.csv)?;
    }
    for s in &rep.suites {
        let failed: Vec<&str> = s.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        let status = if s.passed { "PASS" } else { "FAIL" };
        if failed.is_empty() {
            println!("{status} {}: {} checks", s.suite.name(), s.checks.len());
        } else {
            println!("{status} {}: failing {}", s.suite.name(), failed.join(", "));
        }
    }
    if rep.passed {
        Ok(())
    } else {
        Err(Failure::SuitesFailed(rep.suites.iter().filter(|s| !s.passed).map(|s| s.suite.name().to_string()).collect()))
    }
}

fn calibrate(file: &Path, out: &Path, jobs: usize) -> Result<(), Failure> {
    let spec: CorpusSpec = serde_json::from_str(&read(file)?).map_err(parse_error)?;
    let ledger = calibration::calibrate(&spec, jobs)?;
    write(out, &ledger.to_json())?;
    println!("{} entries, corpus {}", ledger.entries.len(), ledger.corpus_hash);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { file, out, backend, jobs } => run(file, out, *backend, *jobs),
        Command::Calibrate { file, out, jobs } => calibrate(file, out, *jobs),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", serde_json::to_string_pretty(&f.block()).expect("error block serialises"));
            ExitCode::from(f.code())
        }
    }
}
