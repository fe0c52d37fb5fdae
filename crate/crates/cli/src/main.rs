//! `dualview` — experiment harness for the dual-view spiked matrix model.

mod commands;
mod config;
mod error;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "dualview",
    version,
    about = "Dual-view spiked matrix model: AMP, state evolution, thresholds and baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Args)]
pub struct Common {
    /// Run file (JSON): a model config, optionally wrapped with sweeps, seeds and solver settings.
    #[arg(long)]
    pub config: PathBuf,
    /// Output file (CSV, or JSON for `threshold`).
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads for independent runs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Number of consecutive seeds starting at the model seed (overrides the run file).
    #[arg(long)]
    pub seeds: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum MethodArg {
    Amp,
    Linamp,
    PlsSvd,
    PlsCanonical,
    Cca,
    Pca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum InitArg {
    ApproxNishimori,
    Informed,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SeInitArg {
    Uninformative,
    Informative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum KindArg {
    Alg,
    It,
    Spinodal,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModeArg {
    Boundary,
    Cs2Surface,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate data, run an estimator and score it against the ground truth.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "amp")]
        method: MethodArg,
        /// AMP initialisation (ignored by other methods).
        #[arg(long, value_enum, default_value = "approx_nishimori")]
        init: InitArg,
        /// Emit one row per AMP iteration instead of the final state.
        #[arg(long)]
        trajectory: bool,
        /// Add a wall-time column (makes the output run-dependent).
        #[arg(long)]
        timing: bool,
    },
    /// State-evolution fixed points (or trajectories) over the sweep grid.
    Se {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "uninformative,informative")]
        inits: Vec<SeInitArg>,
        #[arg(long)]
        trajectory: bool,
    },
    /// Algorithmic, information-theoretic and spinodal thresholds as JSON.
    Threshold {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "all")]
        kind: KindArg,
        /// sigma_xi, sigma_xi_x, alpha or lambda (default: run file, else sigma_xi).
        #[arg(long)]
        axis: Option<String>,
        /// Search range as `lo,hi`.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        range: Option<Vec<f64>>,
        /// Bisection tolerance of the free-energy thresholds.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Phase diagrams of the weak-recovery boundary and SE performance.
    PhaseDiagram {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "boundary")]
        mode: ModeArg,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    dualview::linalg::set_blas_threads(1);
    let res = match cli.command {
        Command::Run {
            common,
            method,
            init,
            trajectory,
            timing,
        } => commands::run(&common, method, init, trajectory, timing),
        Command::Se {
            common,
            inits,
            trajectory,
        } => commands::se(&common, &inits, trajectory),
        Command::Threshold {
            common,
            kind,
            axis,
            range,
            tol,
        } => commands::threshold(&common, kind, axis.as_deref(), range, tol),
        Command::PhaseDiagram { common, mode } => commands::phase_diagram(&common, mode),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
