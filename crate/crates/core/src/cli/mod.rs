//! Command-line front end.

mod commands;
mod grid;
mod manifest;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use l3_splitting::Error;

pub use grid::MuGrid;
pub use manifest::RunManifest;

/// Environment variable holding the default sweep worker count.
pub const WORKERS_ENV: &str = "L3SPLIT_WORKERS";

#[derive(Parser, Debug, Serialize)]
#[command(name = "l3split", version, about = "Splitting of the L3 invariant manifolds in the RPC3BP")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Serialize)]
pub struct GlobalOpts {
    /// Output file (standard output if omitted).
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Shorthand for `--format json`.
    #[arg(long, global = true)]
    pub json: bool,
    /// Run manifest destination (standard error if omitted).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionArg {
    Auto,
    Native,
    Compensated,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Both,
    XIntegral,
    LambdaIntegral,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SectionArg {
    Theta,
    Lambda,
}

#[derive(Args, Debug, Serialize, Clone)]
pub struct TrackArgs {
    /// Relative integrator tolerance.
    #[arg(long, default_value_t = 1e-12)]
    pub rel_tol: f64,
    /// Absolute tolerance (rel_tol·1e-3 if omitted).
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Auto)]
    pub precision: PrecisionArg,
    /// Seed offset ε along the hyperbolic eigenvector.
    #[arg(long, default_value_t = 1e-7)]
    pub eps: f64,
    /// Integration horizon in units of 1/√μ.
    #[arg(long, default_value_t = 200.0)]
    pub horizon: f64,
    /// Closest admissible approach to a primary.
    #[arg(long, default_value_t = 1e-4)]
    pub min_distance: f64,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Lagrange points and their linear spectra.
    Lagrange {
        #[arg(long)]
        mu: f64,
    },
    /// The singularity constant A by quadrature.
    ConstantA {
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Both)]
        method: MethodArg,
    },
    /// Samples of the pendulum separatrix.
    Separatrix {
        #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
        t_min: f64,
        #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
        t_max: f64,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
    },
    /// Splitting of W^{u,+} and W^{s,+} at one mass ratio.
    Splitting {
        #[arg(long)]
        mu: f64,
        #[arg(long, value_enum, default_value_t = SectionArg::Theta)]
        section: SectionArg,
        /// Angle θ* of Σ(θ*).
        #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
        theta: f64,
        /// λ* of the scaled section S(λ*).
        #[arg(long, default_value_t = 1.0)]
        lambda_star: f64,
        #[command(flatten)]
        track: TrackArgs,
    },
    /// Splitting over a grid of mass ratios.
    Sweep {
        /// Grid `lo:hi:log:n` or `lo:hi:lin:n`.
        #[arg(long)]
        mu_grid: MuGrid,
        #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
        theta: f64,
        /// Fit the asymptotic model to the successful points.
        #[arg(long)]
        fit: bool,
        /// Destination of the fit report (standard error if omitted).
        #[arg(long)]
        fit_output: Option<PathBuf>,
        /// Worker threads (defaults to $L3SPLIT_WORKERS, then all cores).
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
        #[command(flatten)]
        track: TrackArgs,
    },
    /// Stokes constant of the inner equation.
    Stokes {
        /// Path level ρ (repeatable).
        #[arg(long, num_args = 1.., default_values_t = vec![8.0, 12.0, 16.0])]
        rho: Vec<f64>,
        /// Abscissa |Re U| = R where the series seeds the solutions.
        #[arg(long, default_value_t = 40.0)]
        re_max: f64,
        #[arg(long, default_value_t = 130)]
        order: usize,
        #[arg(long, default_value_t = 1e-13)]
        tol: f64,
        /// Largest admissible relative spread across ρ.
        #[arg(long, default_value_t = 0.01)]
        max_spread: f64,
        /// Also run the conjugate pipeline on Im U = +ρ.
        #[arg(long)]
        conjugate: bool,
        /// CSV file for the θ(U) samples.
        #[arg(long)]
        samples_csv: Option<PathBuf>,
    },
    /// Randomized coordinate and flow property checks.
    CheckCoords {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Include the (slower) flow and inner-equation checks.
        #[arg(long)]
        dynamics: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Lagrange { .. } => "lagrange",
            Command::ConstantA { .. } => "constant-a",
            Command::Separatrix { .. } => "separatrix",
            Command::Splitting { .. } => "splitting",
            Command::Sweep { .. } => "sweep",
            Command::Stokes { .. } => "stokes",
            Command::CheckCoords { .. } => "check-coords",
        }
    }
}

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;

pub fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_NUMERICAL
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let start = Instant::now();
    let mut manifest = RunManifest::new(&cli);
    let result = commands::run(&cli, &mut manifest);
    manifest.finish(start.elapsed(), result.as_ref().err());
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e)
        }
    };
    if let Err(e) = manifest.write(cli.global.manifest.as_deref()) {
        eprintln!("error: could not write the run manifest: {e}");
        return ExitCode::from(code.max(EXIT_VALIDATION));
    }
    let _ = std::io::stdout().flush();
    ExitCode::from(code)
}
