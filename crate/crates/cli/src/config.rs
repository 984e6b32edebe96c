use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Solvers for backward stochastic difference equations on finite Markov
/// chains. Reports are JSON; a short summary goes to standard output.
#[derive(Parser, Clone, Debug, PartialEq, Serialize)]
#[command(name = "ebsde", version)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,

    /// Master seed; every random stream is derived from it by name.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Report path. `-` writes the report to standard output. Defaults to
    /// `<command>.json` under $EBSDE_OUT_DIR or the working directory.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,

    #[arg(short, long, global = true, action = ArgAction::Count)]
    #[serde(skip)]
    pub verbose: u8,
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Finite-horizon equation by backward induction.
    SolveBsde(SolveBsdeArgs),
    /// Discounted infinite-horizon equation.
    SolveDiscounted(SolveDiscountedArgs),
    /// Ergodic equation by vanishing discount.
    SolveEbsde(SolveEbsdeArgs),
    /// Uniform-ergodicity constants for all kernels controlled by a chain.
    Certify(CertifyArgs),
    /// Ergodic optimal control.
    SolveControl(SolveControlArgs),
    /// Monte Carlo check of the coupling bounds.
    SimulateCoupling(SimulateCouplingArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SolveBsde(_) => "solve-bsde",
            Command::SolveDiscounted(_) => "solve-discounted",
            Command::SolveEbsde(_) => "solve-ebsde",
            Command::Certify(_) => "certify",
            Command::SolveControl(_) => "solve-control",
            Command::SimulateCoupling(_) => "simulate-coupling",
        }
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be positive, got {}", v)),
        Err(e) => Err(e.to_string()),
    }
}

fn state_index(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("states are numbered from 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeMode {
    Markovian,
    Tree,
    Both,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize)]
pub struct SolveBsdeArgs {
    /// Chain: a matrix, or `{"kernels": [...], "initial": {...}}`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub driver: PathBuf,
    /// Terminal values `φ(x_T)`.
    #[arg(long)]
    pub terminal: PathBuf,
    #[arg(long)]
    pub horizon: usize,
    #[arg(long, value_enum, default_value_t = TreeMode::Both)]
    pub solver: TreeMode,
    #[arg(long, default_value_t = ebsde_core::bsde::DEFAULT_NODE_CAP)]
    pub node_cap: usize,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize)]
pub struct SolveDiscountedArgs {
    /// Chain matrix; defaults to the driver's reference kernel.
    #[arg(long, visible_alias = "model")]
    pub chain: Option<PathBuf>,
    #[arg(long)]
    pub driver: PathBuf,
    #[arg(long, value_parser = positive)]
    pub alpha: f64,
    #[arg(long, value_parser = positive, default_value_t = ebsde_core::bsde::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = 50_000_000)]
    pub max_iter: usize,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize)]
pub struct SolveEbsdeArgs {
    /// Chain matrix; defaults to the driver's reference kernel.
    #[arg(long, visible_alias = "model")]
    pub chain: Option<PathBuf>,
    #[arg(long)]
    pub driver: PathBuf,
    /// Normalisation state, `v(anchor) = 0`.
    #[arg(long, value_parser = state_index, default_value_t = 1)]
    pub anchor: usize,
    #[arg(long, value_parser = positive, default_value_t = ebsde_core::ebsde::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, value_parser = positive, default_value_t = 1.0)]
    pub alpha0: f64,
    /// Discount ladder ratio, in (0, 1).
    #[arg(long, value_parser = positive, default_value_t = 0.5)]
    pub ratio: f64,
    /// `ε` of the certificate behind the a-priori bounds.
    #[arg(long, value_parser = positive, default_value_t = ebsde_core::ergodicity::DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Skip the certificate bounds.
    #[arg(long)]
    pub no_certificate: bool,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize)]
pub struct CertifyArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long, value_parser = positive)]
    pub gamma: f64,
    #[arg(long, value_parser = positive, default_value_t = ebsde_core::ergodicity::DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Sampled kernels for the exact envelope check; 0 skips it.
    #[arg(long, default_value_t = 200)]
    pub verify_samples: usize,
    #[arg(long, default_value_t = ebsde_core::ergodicity::DEFAULT_T_MAX)]
    pub tmax: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Oracle {
    Rvi,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize)]
pub struct SolveControlArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub oracle: Option<Oracle>,
    /// Simulate the extracted policy: horizon, runs and seed.
    #[arg(long, num_args = 3, value_names = ["T", "RUNS", "SEED"])]
    pub simulate: Option<Vec<u64>>,
    #[arg(long, value_parser = positive, default_value_t = ebsde_core::ebsde::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, value_parser = positive, default_value_t = 1e-12)]
    pub oracle_tol: f64,
    #[arg(long, value_parser = state_index, default_value_t = 1)]
    pub anchor: usize,
    /// Starting state of simulated runs.
    #[arg(long, value_parser = state_index, default_value_t = 1)]
    pub x0: usize,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize)]
pub struct SimulateCouplingArgs {
    /// Reference kernel `A`.
    #[arg(long)]
    pub chain: PathBuf,
    /// Kernel `B` controlled by `A`; defaults to `A`.
    #[arg(long)]
    pub b: Option<PathBuf>,
    #[arg(long, value_parser = positive)]
    pub gamma: f64,
    #[arg(long, value_parser = positive, default_value_t = ebsde_core::ergodicity::DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Exponent of the moment estimate; defaults to the certified rate.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub runs: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_steps: usize,
}
