//! `frontmix`: generating functions, Laplace inversion and front-tracking
//! simulation of mixing fronts from JSON configs.

mod commands;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use frontmix::inversion::InversionMethod;
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("criteria not met: {0}")]
    Criteria(String),
    #[error("criteria violated during the run: {0}")]
    Runtime(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Core(frontmix::Error),
}

impl From<frontmix::Error> for CliError {
    fn from(e: frontmix::Error) -> Self {
        use frontmix::Error as E;
        match e {
            E::Config(_)
            | E::Overlap(..)
            | E::Separation(_)
            | E::NegativeDensity { .. }
            | E::Discontinuity { .. }
            | E::DivergentFlux(_)
            | E::Domain { .. }
            | E::Network(_) => CliError::Config(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Criteria(_) => 3,
            CliError::Runtime(_) => 4,
            CliError::Io(_) | CliError::Core(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "frontmix", version, about = "Mixing-front generating functions, Laplace inversion and front-tracking simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SGrid {
    /// Smallest s (default 1e-3 D/ell^2).
    #[arg(long)]
    pub s_min: Option<f64>,
    /// Largest s (default 1e3 D/ell^2).
    #[arg(long)]
    pub s_max: Option<f64>,
    #[arg(long, default_value_t = 64)]
    pub s_points: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TGrid {
    #[arg(long, default_value_t = 0.01)]
    pub t_min: f64,
    /// Largest t (default: the horizon).
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long, default_value_t = 41)]
    pub t_points: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SimArgs {
    /// Nodes per path length (interval: grid nodes including both ends).
    #[arg(long, default_value_t = 2001)]
    pub nx: usize,
    /// Time step (default 1e-5 ell^2/D).
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Stehfest,
    Euler,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct InvArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Stehfest)]
    pub method: MethodArg,
    /// Stehfest terms (even, 8..=20) or Euler's M.
    #[arg(long)]
    pub terms: Option<usize>,
}

impl InvArgs {
    pub fn method(&self) -> CliResult<InversionMethod> {
        Ok(match (self.method, self.terms) {
            (MethodArg::Stehfest, None) => InversionMethod::default(),
            (MethodArg::Stehfest, Some(n)) => InversionMethod::stehfest(n).map_err(|e| CliError::Config(e.to_string()))?,
            (MethodArg::Euler, m) => InversionMethod::euler(m.unwrap_or(frontmix::inversion::DEFAULT_EULER_M)),
        })
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample f(s) and y(s) and evaluate the persistence criteria.
    Analytic {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        s: SGrid,
    },
    /// Invert f(s) and f(s)/s to F(t) and its running integral.
    Invert {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        t: TGrid,
        #[command(flatten)]
        inv: InvArgs,
    },
    /// Run the front-tracking simulation.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Compare simulated and inverted cumulative flux.
    Validate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        s: SGrid,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        t: TGrid,
        #[command(flatten)]
        inv: InvArgs,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 0.02)]
        tol: f64,
    },
    /// Per-front gyration radii and persistence verdicts.
    Multifront {
        #[command(flatten)]
        common: Common,
        /// Also run the simulation and report front survival.
        #[arg(long)]
        simulate: bool,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Generating function on a tree network and graph simulation.
    Network {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        s: SGrid,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        t: TGrid,
        #[command(flatten)]
        inv: InvArgs,
        /// Source interval (between sources i and i+1); defaults to the
        /// interval holding the simulated front at the horizon.
        #[arg(long)]
        interval: Option<usize>,
    },
    /// Built-in oracle checks.
    Selftest,
}

fn configure_threads() {
    if let Some(n) = std::env::var("FRONTMIX_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // fails only when a pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let result = match cli.command {
        Command::Analytic { common, s } => commands::analytic(&common, &s),
        Command::Invert { common, t, inv } => commands::invert(&common, &t, &inv),
        Command::Simulate { common, sim } => commands::simulate(&common, &sim),
        Command::Validate {
            common,
            s,
            sim,
            t,
            inv,
            tol,
        } => commands::validate(&common, &s, &sim, &t, &inv, tol),
        Command::Multifront { common, simulate, sim } => commands::multifront(&common, simulate, &sim),
        Command::Network {
            common,
            s,
            sim,
            t,
            inv,
            interval,
        } => commands::network(&common, &s, &sim, &t, &inv, interval),
        Command::Selftest => commands::selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("frontmix: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
