//! `qgraph`: generate metric graphs, solve elliptic problems on them, and
//! run iteration-count, convergence and conditioning studies.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 when a
//! numerical method fails.

mod commands;
mod list;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qgraph::precond::PrecondKind;

#[derive(Parser, Debug)]
#[command(name = "qgraph", version, about = "Elliptic problems on metric graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a generated graph as JSON.
    Generate(GenerateArgs),
    /// Solve the problem described by a JSON config.
    Solve(SolveArgs),
    /// Iteration counts over a grid of graphs, mesh levels and preconditioners.
    Bench(BenchArgs),
    /// Discretization errors and fitted orders over mesh levels.
    Convergence(ConvergenceArgs),
    /// Condition number estimates of the Schur complement.
    Cond(CondArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(subcommand)]
    family: GenerateFamily,
    /// Output file; the JSON goes to standard output when omitted.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum GenerateFamily {
    /// Dorogovtsev–Goltsev–Mendes graph.
    Dgm {
        #[arg(long)]
        level: u32,
    },
    /// Barabási–Albert preferential attachment graph.
    Ba {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Star with the centre at vertex 0.
    Star {
        #[arg(long)]
        leaves: usize,
        #[arg(long, default_value_t = 1.0)]
        length: f64,
    },
    /// Path of equal edges.
    Path {
        #[arg(long)]
        edges: usize,
        #[arg(long, default_value_t = 1.0)]
        length: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Bicgstab,
    Pcg,
    Richardson,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Bicgstab => "bicgstab",
            SolverKind::Pcg => "pcg",
            SolverKind::Richardson => "richardson",
        }
    }
}

/// Interface solver settings shared by `solve` and `bench`.
#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value_t = SolverKind::Bicgstab)]
    solver: SolverKind,
    /// Relative residual tolerance (default √ε).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    maxit: usize,
    /// Richardson damping.
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    /// Neumann–Neumann without multiplicity scaling.
    #[arg(long)]
    nn_unscaled: bool,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Problem config (JSON).
    config: PathBuf,
    #[arg(long, default_value = "nn", value_parser = parse_prec)]
    prec: PrecondKind,
    #[command(flatten)]
    solver: SolverArgs,
    /// Solve the assembled system directly instead of the Schur system.
    #[arg(long)]
    direct: bool,
    /// Solution CSV (one row per dof).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Report JSON; printed to standard output when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for MatrixMarket dumps of A, and of S and g_Γ when d ≤ 1000.
    #[arg(long)]
    dump: Option<PathBuf>,
}

/// A graph family with a list of parameters, as used by `bench` and `cond`.
#[derive(Args, Debug, Clone)]
pub struct FamilyArgs {
    #[arg(long, value_enum)]
    family: Family,
    /// Family parameters: DGM levels, BA sizes, star leaves or path
    /// lengths, as a list `5,6,7` or range `5..9`.
    #[arg(long, value_parser = list::parse_usize_list)]
    params: list::UsizeList,
    /// Mesh levels log₂(ĥ⁻¹).
    #[arg(long, value_parser = list::parse_usize_list, default_value = "6")]
    levels: list::UsizeList,
    /// Attachment count for BA graphs.
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Dgm,
    Ba,
    Star,
    Path,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Dgm => "dgm",
            Family::Ba => "ba",
            Family::Star => "star",
            Family::Path => "path",
        }
    }
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    graphs: FamilyArgs,
    /// Preconditioners to compare.
    #[arg(long, value_delimiter = ',', default_value = "none,diag,poly,nn", value_parser = parse_prec)]
    prec: Vec<PrecondKind>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = "1")]
    c: String,
    #[arg(long, default_value = "1")]
    p: String,
    /// Load; the default `x` avoids the constant solution of `f = 1`.
    #[arg(long, default_value = "x")]
    f: String,
    /// CSV output; standard output when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Also print an iteration table.
    #[arg(long)]
    table: bool,
}

#[derive(Args, Debug)]
struct ConvergenceArgs {
    /// Problem config with an `exact` solution; its mesh is ignored.
    config: PathBuf,
    #[arg(long, value_parser = list::parse_usize_list, default_value = "3..8")]
    levels: list::UsizeList,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CondArgs {
    #[command(flatten)]
    graphs: FamilyArgs,
    /// Relative change of successive eigenvalue estimates to stop at.
    #[arg(long, default_value_t = 1e-2)]
    rel_tol: f64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn parse_prec(s: &str) -> Result<PrecondKind, String> {
    s.parse()
        .map_err(|e: qgraph::precond::PrecondError| e.to_string())
}

/// A failed command with its exit code class.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Failure {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        Failure::Usage(e.into())
    }

    pub fn numerical(e: impl Into<anyhow::Error>) -> Self {
        Failure::Numerical(e.into())
    }
}

/// The cause chain, skipping causes the previous message already quotes.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a.family, a.out.as_deref()),
        Command::Solve(a) => commands::solve(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Convergence(a) => commands::convergence(&a),
        Command::Cond(a) => commands::cond(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}
