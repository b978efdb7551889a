//! `optinfo`: drives the quadrature, elliptic design, discrete and
//! regression case studies and writes their reports as JSON and CSV.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod regression;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use optinfo_core::decision::NormOrder;

/// Process exit status. Argument and input problems map to 2, numerical
/// failures inside the library to 3.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<optinfo_core::Error> for Failure {
    fn from(e: optinfo_core::Error) -> Self {
        use optinfo_core::Error as E;
        match e {
            E::InvalidSpec(_)
            | E::InvalidProblem { .. }
            | E::PreconditionViolated(_)
            | E::UnknownExperiment(_)
            | E::MissingLossTable
            | E::LengthMismatch { .. }
            | E::DimensionMismatch(_)
            | E::NonPsdInput(_)
            | E::InvalidDensity(_) => Failure::Usage(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "optinfo",
    version,
    about = "Optimality criteria for probabilistic numerical methods"
)]
struct Cli {
    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Base seed for every Monte Carlo stream.
    #[arg(long, global = true, env = "OPTINFO_SEED", default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Trapezoid rule under the Wiener prior.
    Quadrature(QuadratureArgs),
    /// Greedy design of Laplacian observations for the elliptic problem.
    PdeDesign(PdeArgs),
    /// Criteria for a finite-state problem.
    Discrete(DiscreteArgs),
    /// Alphabet criteria for linear-Gaussian regression designs.
    Regression(RegressionArgs),
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("design").required(true).args(["nodes", "optimize"])))]
pub struct QuadratureArgs {
    /// Number of intervals of the optimized design.
    #[arg(long, requires = "optimize")]
    pub n: Option<usize>,

    /// Interior nodes in [0, 1], comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    pub nodes: Option<Vec<f64>>,

    /// Optimize the nodes for `--n` intervals.
    #[arg(long, requires = "n", conflicts_with = "nodes")]
    pub optimize: bool,

    #[arg(long, value_enum, default_value_t = Optimizer::ClosedForm)]
    pub optimizer: Optimizer,

    #[arg(long, value_enum, default_value_t = Objective::Bpn)]
    pub objective: Objective,

    /// Add Monte Carlo estimates of BPN and the Bayes risk.
    #[arg(long)]
    pub mc: bool,

    /// Outer Monte Carlo samples.
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,

    /// Posterior draws per outer sample.
    #[arg(long, default_value_t = 4)]
    pub inner: usize,

    /// Simulation sub-steps per interval.
    #[arg(long, default_value_t = optinfo_core::quadrature::DEFAULT_POINTS_PER_INTERVAL)]
    pub points_per_interval: usize,

    /// Path values at every node including both endpoints, for the posterior mean.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    pub values: Option<Vec<f64>>,

    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Optimizer {
    ClosedForm,
    CoordinateDescent,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Objective {
    Bpn,
    Bdt,
}

#[derive(Args, Debug)]
pub struct PdeArgs {
    /// Number of greedy steps.
    #[arg(long, default_value_t = 9, value_parser = clap::value_parser!(u64).range(1..))]
    pub m: u64,

    /// Norm of the grid loss: `2` or `inf`.
    #[arg(long, default_value = "2", value_parser = parse_norm)]
    pub p: NormOrder,

    /// Minimize the weighted posterior trace instead of BPN.
    #[arg(long)]
    pub trace: bool,

    #[arg(long, default_value_t = 32)]
    pub grid_size: usize,

    #[arg(long, default_value_t = 25)]
    pub candidate_size: usize,

    #[arg(long, default_value_t = 32)]
    pub boundary_points: usize,

    #[arg(long, default_value_t = 0.35)]
    pub lengthscale: f64,

    /// Monte Carlo samples for the max norm.
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,

    #[arg(long, default_value = ".")]
    pub outdir: PathBuf,
}

fn parse_norm(s: &str) -> Result<NormOrder, String> {
    match s {
        "2" => Ok(NormOrder::Finite(2.0)),
        "inf" => Ok(NormOrder::Infinity),
        _ => Err(format!("unsupported norm `{s}`; expected `2` or `inf`")),
    }
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["problem", "counterexample"])))]
pub struct DiscreteArgs {
    /// Problem file in JSON.
    #[arg(long)]
    pub problem: Option<PathBuf>,

    /// Build the three-state counterexample from its prior.
    #[arg(long, num_args = 3, value_names = ["PI1", "PI2", "PI3"])]
    pub counterexample: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct RegressionArgs {
    /// Configuration file in JSON.
    #[arg(long)]
    pub config: PathBuf,

    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Numerical(m) => eprintln!("numerical failure: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Quadrature(a) => commands::quadrature(&a, cli.seed),
        Command::PdeDesign(a) => commands::pde_design(&a, cli.seed),
        Command::Discrete(a) => commands::discrete(&a),
        Command::Regression(a) => regression::run(&a),
    }
}
