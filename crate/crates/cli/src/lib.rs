//! Command-line frontend: validate POVM files, compile them into measurement
//! trees, simulate trees and print gate-count comparisons.

pub mod commands;
pub mod files;
pub mod walkthrough;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use povm_tree::linalg::Tolerances;
use povm_tree::povm::PovmError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const VERIFICATION: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("invalid: {0}")]
    Validation(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse(_) | CliError::Io(_) => exit::USAGE,
            CliError::Validation(_) => exit::VALIDATION,
            CliError::Verification(_) => exit::VERIFICATION,
        }
    }
}

/// Short name of a POVM validation failure, e.g. `IncompleteSum`.
pub fn povm_error_kind(e: &PovmError) -> &'static str {
    match e {
        PovmError::Empty => "Empty",
        PovmError::NotSquare { .. } => "NotSquare",
        PovmError::DimensionMismatch { .. } => "DimensionMismatch",
        PovmError::NotHermitian { .. } => "NotHermitian",
        PovmError::NotPsd { .. } => "NotPsd",
        PovmError::IncompleteSum { .. } => "IncompleteSum",
        PovmError::LabelCount { .. } => "LabelCount",
        PovmError::CountMismatch { .. } => "CountMismatch",
        PovmError::NotUnitary { .. } => "NotUnitary",
        PovmError::KrausMismatch { .. } => "KrausMismatch",
        PovmError::Linalg(_) => "Linalg",
    }
}

impl From<PovmError> for CliError {
    fn from(e: PovmError) -> Self {
        CliError::Validation(format!("{}: {e}", povm_error_kind(&e)))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "povm-tree",
    version,
    about = "Compile POVMs into binary measurement trees and simulate them"
)]
pub struct Cli {
    /// Numerical check tolerance (residual threshold for all verifications).
    #[arg(long, global = true, value_name = "FLOAT")]
    pub tol: Option<f64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a POVM file and print per-element residuals.
    Validate {
        /// POVM JSON file.
        path: PathBuf,
    },
    /// Compile a POVM file into a measurement tree file.
    Compile {
        /// POVM JSON file.
        path: PathBuf,
        /// Leaf grouping, e.g. "0,3|1,2": groups become sibling subtrees.
        #[arg(long)]
        grouping: Option<String>,
        /// Apply seeded random unitary freedom to the leaf Kraus operators.
        #[arg(long)]
        seed: Option<u64>,
        /// Output tree file [default: <input stem>.tree.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Propagate a state through a compiled tree.
    Simulate {
        /// Tree JSON file written by `compile`.
        tree: PathBuf,
        /// `pure:<k>`, `mixed:max`, or a state JSON file.
        #[arg(default_value = "pure:0")]
        state: String,
        /// Number of sampled shots (0 prints exact probabilities only).
        #[arg(long, default_value_t = 0)]
        shots: u64,
        /// Sampling seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare two-level operation counts of the three implementation schemes.
    Cost {
        /// Number of outcomes.
        n: u64,
        /// System dimension.
        d: u64,
    },
    /// Write the tetrad example: POVM file, tree file and a walkthrough.
    ExampleTetrad {
        /// Output directory.
        #[arg(long, default_value = "tetrad-example")]
        out: PathBuf,
    },
}

pub fn tolerances(tol: Option<f64>) -> Result<Tolerances, CliError> {
    match tol {
        None => Ok(Tolerances::default()),
        Some(t) => Tolerances::with_check(t).map_err(|e| CliError::Usage(format!("--tol: {e}"))),
    }
}

/// Runs a parsed command, writing the report to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let tol = tolerances(cli.tol)?;
    match &cli.command {
        Command::Validate { path } => commands::validate(path, &tol, out),
        Command::Compile {
            path,
            grouping,
            seed,
            out: out_path,
        } => commands::compile(path, grouping.as_deref(), *seed, out_path.as_deref(), &tol, out),
        Command::Simulate {
            tree,
            state,
            shots,
            seed,
        } => commands::simulate(tree, state, *shots, *seed, &tol, out),
        Command::Cost { n, d } => commands::cost(*n, *d, out),
        Command::ExampleTetrad { out: dir } => commands::example_tetrad(dir, &tol, out),
    }
}

/// Parses `"0,3|1,2"` into a leaf order for an `n`-outcome POVM.
///
/// Every outcome must appear exactly once. When `n` is a power of two the
/// groups must also be equal-sized with a power-of-two count, so that each
/// group is a subtree; with padding the grouping only fixes the leaf order.
pub fn parse_grouping(spec: &str, n: usize) -> Result<Vec<usize>, CliError> {
    let usage = |msg: String| CliError::Usage(format!("--grouping {spec:?}: {msg}"));
    let mut groups = Vec::new();
    for part in spec.split('|') {
        let group = part
            .split(',')
            .map(|s| {
                let s = s.trim();
                s.parse::<usize>()
                    .map_err(|_| usage(format!("{s:?} is not an outcome index")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        groups.push(group);
    }
    let order: Vec<usize> = groups.concat();
    let mut seen = vec![false; n];
    for &j in &order {
        if j >= n {
            return Err(usage(format!("index {j} out of range for {n} outcomes")));
        }
        if std::mem::replace(&mut seen[j], true) {
            return Err(usage(format!("index {j} appears twice")));
        }
    }
    if order.len() != n {
        return Err(usage(format!("covers {} of {n} outcomes", order.len())));
    }
    if n.is_power_of_two() {
        let size = groups[0].len();
        if groups.iter().any(|g| g.len() != size) || !groups.len().is_power_of_two() {
            return Err(usage("groups must be equal-sized and a power of two in number".into()));
        }
    }
    Ok(order)
}
