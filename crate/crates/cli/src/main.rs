//! `qce`: experiment runner for the strictly quasiconvex envelope solver.
//!
//! Every subcommand writes its artifacts into `--out`. Grid CSVs and tables
//! carry the full run configuration in `#` comment lines; JSON documents carry
//! it under a `config` key.

mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "qce", version, about = "Strictly quasiconvex envelopes by a monotone obstacle scheme")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the obstacle problem once.
    Solve(Common),
    /// Solve for several ε and compare each solution with the line-sweep envelope.
    EpsSweep(Common),
    /// Euler iteration counts with and without line-sweep acceleration.
    AccelTable(Common),
    /// Scheme-versus-oracle errors on random quadratics.
    ConsistencyReport(ConsistencyArgs),
    /// Solve, then audit the solution and fuzz the scheme.
    Verify(VerifyArgs),
    /// Full scheme against the relaxed-constraint robust operator.
    CompareRobust(RobustArgs),
    /// Full scheme against the first-order scheme.
    CompareFirstOrder(Common),
}

#[derive(Args, Clone)]
pub struct Common {
    /// Corpus obstacle: double-well, parabola, square, pacman or circles.
    #[arg(long, conflicts_with = "obstacle_csv")]
    pub example: Option<String>,

    /// Obstacle from a grid CSV; off-lattice points use the nearest node.
    #[arg(long, value_name = "FILE")]
    pub obstacle_csv: Option<PathBuf>,

    /// Points per axis; a comma list for accel-table.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,

    /// ε; a comma list for eps-sweep. Defaults to h/2.
    #[arg(long, value_delimiter = ',')]
    pub eps: Vec<f64>,

    /// Stencil width W.
    #[arg(long)]
    pub width: Option<usize>,

    /// Stop when the sup-norm update is at most tol·δ.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,

    #[arg(long)]
    pub max_iter: Option<usize>,

    #[arg(long, value_enum)]
    pub init: Option<InitArg>,

    #[arg(long, value_enum, default_value_t = AccelArg::None)]
    pub accel: AccelArg,

    /// Euler step; defaults to the CFL step 1/K.
    #[arg(long)]
    pub step: Option<f64>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ConsistencyArgs {
    #[arg(long, default_value_t = 20)]
    pub count: usize,

    #[arg(long, default_value_t = 2024)]
    pub seed: u64,

    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,

    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 5])]
    pub width: Vec<usize>,

    /// Every N - 1 must be a multiple of the smallest N - 1.
    #[arg(long, value_delimiter = ',', default_values_t = [33, 65, 129, 257])]
    pub n: Vec<usize>,

    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,

    /// Trials for each scheme fuzzer.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,

    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
}

#[derive(Args)]
pub struct RobustArgs {
    #[command(flatten)]
    pub common: Common,

    /// Constraint width of the robust operator; defaults to ε.
    #[arg(long)]
    pub eps_r: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Min,
    Obstacle,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AccelArg {
    None,
    Line,
}

/// How a run ended, short of an error.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Done,
    NotConverged,
    ChecksFailed,
}

/// Errors split by exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<qce_core::Error> for Failure {
    fn from(e: qce_core::Error) -> Self {
        use qce_core::Error;
        match e {
            Error::Parameter(_) | Error::OutOfDomain { .. } | Error::Format { .. } => Failure::Usage(e.to_string()),
            Error::Io(_) | Error::Csv(_) => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => experiments::solve(&a),
        Command::EpsSweep(a) => experiments::eps_sweep(&a),
        Command::AccelTable(a) => experiments::accel_table(&a),
        Command::ConsistencyReport(a) => experiments::consistency_report(&a),
        Command::Verify(a) => experiments::verify(&a),
        Command::CompareRobust(a) => experiments::compare_robust(&a),
        Command::CompareFirstOrder(a) => experiments::compare_first_order(&a),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => {
            eprintln!("qce: iteration limit reached before convergence; artifacts written");
            ExitCode::from(3)
        }
        Ok(Outcome::ChecksFailed) => {
            eprintln!("qce: at least one check failed; see checks.json");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("qce: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("qce: {msg}");
            ExitCode::from(1)
        }
    }
}
