//! `fpt`: passage-time moments, densities, simulation and fitting for the
//! harvested stochastic logistic model.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fpt_core::{Direction, FptError};

#[derive(Debug, Parser)]
#[command(name = "fpt", version, about = "First-passage times of the harvested stochastic logistic model")]
pub struct Cli {
    /// Working precision in bits for the arbitrary-precision stages.
    #[arg(long, global = true, default_value_t = 256)]
    pub precision: u32,
    /// Master seed for stochastic commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Emit numerical diagnostics alongside the main output.
    #[arg(long, global = true)]
    pub diagnostics: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DirArg {
    Up,
    Down,
}

impl From<DirArg> for Direction {
    fn from(d: DirArg) -> Self {
        match d {
            DirArg::Up => Direction::Up,
            DirArg::Down => Direction::Down,
        }
    }
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Model config (JSON with r, K, q, E, sigma, x0; optional direction, threshold).
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub direction: Option<DirArg>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Recursion,
    Bell,
    /// Finite differences of the directly evaluated transform (orders <= 4).
    Fd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derived parameters and regime diagnostics.
    Derive {
        config: PathBuf,
    },
    /// Moments, cumulants and cumulant ratios.
    Moments {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 4)]
        order: usize,
        #[arg(long, value_enum, default_value_t = MethodArg::Recursion)]
        method: MethodArg,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Laguerre-Gamma density on a grid, with a JSON sidecar.
    Density {
        /// Model config; required when moments come from theory.
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        direction: Option<DirArg>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 10)]
        nmax: usize,
        /// Fixed expansion order instead of the selection rules.
        #[arg(long)]
        order: Option<usize>,
        #[arg(long, default_value = "0:40:0.05")]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// `theory`, `samples:FILE` or `moments:FILE`.
        #[arg(long, default_value = "theory")]
        moments_from: String,
    },
    /// Monte Carlo first-passage samples.
    Simulate {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 60.0)]
        horizon: f64,
        /// Record the first grid time past the threshold instead of interpolating.
        #[arg(long)]
        no_interpolate: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Agreement metrics between a density curve and a sample.
    Compare {
        #[arg(long)]
        density: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximum likelihood fit of a parameter subset.
    Mle {
        #[arg(long)]
        samples: PathBuf,
        /// Comma-separated subset of sigma, r, x0, U, K, q, E.
        #[arg(long, default_value = "")]
        estimate: String,
        /// Config holding every parameter value, including the threshold.
        #[arg(long)]
        fixed: PathBuf,
        /// Starting values aligned with --estimate (defaults to the fixed values).
        #[arg(long)]
        init: Option<String>,
        #[arg(long, default_value_t = 10)]
        nmax: usize,
        #[arg(long, default_value_t = 300)]
        max_iter: usize,
        #[arg(long, value_enum)]
        direction: Option<DirArg>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated simulate-and-fit study in the layout of a bias/MSE table.
    Study {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Comma-separated sample sizes.
        #[arg(long, default_value = "100,500,1000")]
        sizes: String,
        #[arg(long, default_value_t = 20)]
        replications: usize,
        /// Subsets separated by ';', parameters by ',' (e.g. "sigma,r;sigma,x0").
        #[arg(long, default_value = "sigma,r")]
        subsets: String,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Direct transform against the moment series on a lambda grid.
    Oracle {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value = "0:0.1:0.01")]
        lambda_grid: String,
        /// Number of series terms.
        #[arg(long, default_value_t = 30)]
        order: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit status for a failure: 2 for infeasible regimes, 3 for numerical
/// non-convergence, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<FptError>() {
            if e.is_regime() || matches!(e, FptError::NoFeasibleStart(_)) {
                return 2;
            }
            if e.is_numerical() {
                return 3;
            }
            return 1;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
