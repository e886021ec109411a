use clap::{Args, Parser, Subcommand, ValueEnum};
use nilflow_core::stochastic::{Engine, DEFAULT_STEPS};

/// Nilpotent extension groups: validation, geometry and heat-kernel Monte Carlo.
#[derive(Debug, Parser)]
#[command(name = "nilflow", version)]
pub struct Cli {
    /// Worker threads; affects wall time only.
    #[arg(long, global = true, env = "NILFLOW_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Emit a model from the zoo as spec JSON.
    Zoo {
        #[arg(long, value_parser = ["heisenberg", "beta", "pathspace", "step2", "step3", "step3kl"])]
        model: String,
        /// Family size parameter (m for most families, k for path space).
        #[arg(long)]
        size: Option<usize>,
        /// Seed for randomly generated couplings (beta).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<String>,
    },
    /// Run every structural check on a spec.
    Validate {
        spec: String,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        out: Option<String>,
    },
    /// Hilbert–Schmidt and uniform norms with their inequalities.
    Norms {
        spec: String,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[arg(long, default_value_t = 1.05)]
        slack: f64,
        #[arg(long)]
        out: Option<String>,
    },
    /// Group product g·h of two comma-separated elements.
    Multiply {
        spec: String,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, allow_hyphen_values = true)]
        g: String,
        #[arg(long, allow_hyphen_values = true)]
        h: String,
        #[arg(long)]
        out: Option<String>,
    },
    /// Ricci form and its lower bound.
    Ricci {
        spec: String,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        out: Option<String>,
    },
    /// Bounds on the distance from the identity to y.
    Distance {
        spec: String,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, allow_hyphen_values = true)]
        y: String,
        /// Maximum number of path-length evaluations.
        #[arg(long, default_value_t = 400)]
        budget: usize,
        #[arg(long)]
        out: Option<String>,
    },
    /// Sample heat-kernel endpoints to CSV.
    Simulate {
        spec: String,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: Option<String>,
    },
    /// Monte Carlo check of a heat-kernel property.
    Verify {
        spec: String,
        #[arg(long, value_enum)]
        test: TestKind,
        #[command(flatten)]
        sim: SimArgs,
        /// Translation for the quasi-invariance test (default: first basis vector).
        #[arg(long, allow_hyphen_values = true)]
        h: Option<String>,
        /// Hölder exponent for the quasi-invariance test.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Increasing W ranks for the convergence study (default: powers of two below m).
        #[arg(long)]
        ells: Option<String>,
        #[arg(long)]
        out: Option<String>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Zoo { .. } => "zoo",
            Command::Validate { .. } => "validate",
            Command::Norms { .. } => "norms",
            Command::Multiply { .. } => "multiply",
            Command::Ricci { .. } => "ricci",
            Command::Distance { .. } => "distance",
            Command::Simulate { .. } => "simulate",
            Command::Verify { .. } => "verify",
        }
    }
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// rollout, expansion or signature.
    #[arg(long, default_value = "rollout")]
    pub engine: Engine,
    /// Tolerance for the structural checks run on the spec.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TestKind {
    Inversion,
    Logsob,
    Quasi,
    Convergence,
}

impl TestKind {
    pub fn name(self) -> &'static str {
        match self {
            TestKind::Inversion => "inversion",
            TestKind::Logsob => "logsob",
            TestKind::Quasi => "quasi",
            TestKind::Convergence => "convergence",
        }
    }
}
