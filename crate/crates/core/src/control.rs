//! Ergodic optimal control over a finite action set.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::bsde::ValueTable;
use crate::chain::{self, ChainError, ErgodicityClass, TransitionMatrix};
use crate::driver::{hamiltonian_driver, Driver, HamiltonianDriver};
use crate::ebsde::{self, EbsdeError, EbsdeOptions, EbsdeSolution};
use crate::random::{self, ColumnSampler};

#[derive(Clone, Debug, PartialEq)]
pub enum ControlError {
    EmptyActionSet,
    InvalidGamma(f64),
    DimensionMismatch { expected: usize, found: usize },
    NotGammaEquivalent { action: String },
    NonFiniteCost { action: String, state: usize },
    /// The policy has the wrong length or names an unknown action.
    InvalidPolicy,
    PolicyKernelNotErgodic,
    /// `f(x, v) ≠ L(x, κ(x)) + vᵀ(B^κ(x) − A)x` at `state`.
    OptimalityIdentity { state: usize, defect: f64 },
    NoConvergence { iterations: usize, span: f64 },
    InvalidHorizon,
    Ebsde(EbsdeError),
    Chain(ChainError),
}

impl fmt::Display for ControlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlError::EmptyActionSet => write!(f, "action set is empty"),
            ControlError::InvalidGamma(g) => write!(f, "gamma must lie in (0, 1], got {}", g),
            ControlError::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {}, found {}", expected, found)
            }
            ControlError::NotGammaEquivalent { action } => write!(
                f,
                "kernel of action {} is not gamma-equivalent to the reference kernel",
                action
            ),
            ControlError::NonFiniteCost { action, state } => {
                write!(f, "cost of action {} at state {} is not finite", action, state + 1)
            }
            ControlError::InvalidPolicy => write!(f, "policy does not match the model"),
            ControlError::PolicyKernelNotErgodic => {
                write!(f, "policy-induced kernel is not uniformly ergodic")
            }
            ControlError::OptimalityIdentity { state, defect } => write!(
                f,
                "optimality identity fails at state {} (defect {:e})",
                state + 1,
                defect
            ),
            ControlError::NoConvergence { iterations, span } => write!(
                f,
                "relative value iteration did not converge after {} iterations (span {:e})",
                iterations, span
            ),
            ControlError::InvalidHorizon => write!(f, "horizon and run count must be positive"),
            ControlError::Ebsde(e) => write!(f, "{}", e),
            ControlError::Chain(e) => write!(f, "{}", e),
        }
    }
}

impl core::error::Error for ControlError {}

impl From<EbsdeError> for ControlError {
    fn from(e: EbsdeError) -> Self {
        ControlError::Ebsde(e)
    }
}

impl From<ChainError> for ControlError {
    fn from(e: ChainError) -> Self {
        ControlError::Chain(e)
    }
}

/// Reference kernel `A`, actions `u` with kernels `B^u ∼_γ A` and costs
/// `L(x, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlModel {
    a: TransitionMatrix,
    gamma: f64,
    actions: Vec<String>,
    kernels: Vec<TransitionMatrix>,
    // cost[u][x]
    cost: Vec<Vec<f64>>,
}

impl ControlModel {
    pub fn new(
        a: TransitionMatrix,
        gamma: f64,
        actions: Vec<String>,
        kernels: Vec<TransitionMatrix>,
        cost: Vec<Vec<f64>>,
    ) -> Result<Self, ControlError> {
        if actions.is_empty() {
            return Err(ControlError::EmptyActionSet);
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(ControlError::InvalidGamma(gamma));
        }
        for len in [kernels.len(), cost.len()] {
            if len != actions.len() {
                return Err(ControlError::DimensionMismatch {
                    expected: actions.len(),
                    found: len,
                });
            }
        }
        let n = a.n();
        for ((name, b), l) in actions.iter().zip(&kernels).zip(&cost) {
            if l.len() != n {
                return Err(ControlError::DimensionMismatch {
                    expected: n,
                    found: l.len(),
                });
            }
            if let Some(state) = l.iter().position(|v| !v.is_finite()) {
                return Err(ControlError::NonFiniteCost {
                    action: name.clone(),
                    state,
                });
            }
            if !chain::is_gamma_equivalent(&a, b, gamma)? {
                return Err(ControlError::NotGammaEquivalent {
                    action: name.clone(),
                });
            }
        }
        Ok(ControlModel {
            a,
            gamma,
            actions,
            kernels,
            cost,
        })
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reference(&self) -> &TransitionMatrix {
        &self.a
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn kernel(&self, u: usize) -> &TransitionMatrix {
        &self.kernels[u]
    }

    pub fn cost(&self, u: usize, x: usize) -> f64 {
        self.cost[u][x]
    }

    pub fn cost_vector(&self, u: usize) -> &[f64] {
        &self.cost[u]
    }
}

/// Random model: dense reference kernel, `B^u` from
/// [`random::random_equivalent`], costs uniform on `[0, 1)`. Action names are
/// `u1, u2, …`.
pub fn random_model<R: rand::Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    actions: usize,
    gamma: f64,
) -> ControlModel {
    let a = random::random_stochastic(rng, n);
    let names = (1..=actions).map(|k| alloc::format!("u{}", k)).collect();
    let kernels = (0..actions)
        .map(|_| random::random_equivalent(rng, &a, gamma))
        .collect();
    let cost = (0..actions)
        .map(|_| random::uniform_vec(rng, n, 0.0, 1.0))
        .collect();
    ControlModel::new(a, gamma, names, kernels, cost).expect("equivalent kernels by construction")
}

/// A rule choosing actions: stationary feedback `κ(x)` or a time-dependent
/// schedule `τ(s, x)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Policy {
    Feedback(Vec<usize>),
    Schedule(Schedule),
}

/// `τ(s, x)` for `s < horizon`; later times reuse the last row.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    /// `actions[s][x]`.
    pub actions: Vec<Vec<usize>>,
    /// Slack allowed at time `s`.
    pub slack: Vec<f64>,
}

impl Schedule {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn action(&self, s: usize, x: usize) -> usize {
        self.actions[s.min(self.actions.len() - 1)][x]
    }
}

impl Policy {
    fn action(&self, s: usize, x: usize) -> usize {
        match self {
            Policy::Feedback(k) => k[x],
            Policy::Schedule(t) => t.action(s, x),
        }
    }

    fn validate(&self, model: &ControlModel) -> Result<(), ControlError> {
        let ok_row = |row: &[usize]| {
            row.len() == model.n() && row.iter().all(|&u| u < model.num_actions())
        };
        let ok = match self {
            Policy::Feedback(k) => ok_row(k),
            Policy::Schedule(t) => {
                !t.actions.is_empty()
                    && t.slack.len() == t.actions.len()
                    && t.actions.iter().all(|r| ok_row(r))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(ControlError::InvalidPolicy)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalControl {
    pub lambda_bar: f64,
    pub v: ValueTable,
    /// `κ(x) = argmin_u {L(x, u) + vᵀ(B^u − A)x}`, lowest index on ties.
    pub policy: Vec<usize>,
    /// Largest `|f(x, v) − L(x, κ(x)) − vᵀ(B^κ(x) − A)x|`.
    pub identity_defect: f64,
    pub ebsde: EbsdeSolution,
}

const IDENTITY_TOL: f64 = 1e-12;

/// Solves the EBSDE with the Hamiltonian driver of `model` and extracts the
/// feedback minimiser.
pub fn solve_optimal(
    model: &ControlModel,
    options: &EbsdeOptions,
) -> Result<OptimalControl, ControlError> {
    let driver = hamiltonian_driver(model.clone()).map_err(EbsdeError::from)?;
    let sol = ebsde::solve_ebsde(model.reference(), &driver, options)?;
    let (policy, identity_defect) = feedback_from(&driver, &sol.v)?;
    Ok(OptimalControl {
        lambda_bar: sol.lambda,
        v: sol.v.clone(),
        policy,
        identity_defect,
        ebsde: sol,
    })
}

fn feedback_from(driver: &HamiltonianDriver, v: &[f64]) -> Result<(Vec<usize>, f64), ControlError> {
    let model = driver.model();
    let a = model.reference();
    let scale = 1.0 + v.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    let mut policy = Vec::with_capacity(model.n());
    let mut worst = 0.0f64;
    for x in 0..model.n() {
        let u = driver.argmin(x, v);
        let tilt = model.kernel(u).expect_from(x, v) - a.expect_from(x, v);
        let defect = (driver.eval(x, 0, 0.0, v) - model.cost(u, x) - tilt).abs();
        if defect > IDENTITY_TOL * scale {
            return Err(ControlError::OptimalityIdentity { state: x, defect });
        }
        worst = worst.max(defect);
        policy.push(u);
    }
    Ok((policy, worst))
}

/// Kernel of the chain under stationary feedback: column `x` of
/// `B^{κ(x)}`.
pub fn policy_kernel(model: &ControlModel, policy: &[usize]) -> Result<TransitionMatrix, ControlError> {
    Policy::Feedback(policy.to_vec()).validate(model)?;
    let columns = (0..model.n())
        .map(|x| model.kernel(policy[x]).column(x).to_vec())
        .collect();
    Ok(TransitionMatrix::from_columns(columns)?)
}

/// `Σ π_κ(x) L(x, κ(x))` with `π_κ` stationary for the policy kernel.
pub fn ergodic_cost_exact(model: &ControlModel, policy: &[usize]) -> Result<f64, ControlError> {
    let k = policy_kernel(model, policy)?;
    if chain::classify_uniform_ergodicity(&k) != ErgodicityClass::UniformlyErgodic {
        return Err(ControlError::PolicyKernelNotErgodic);
    }
    let pi = chain::stationary_distribution(&k)?;
    Ok(pi
        .weights()
        .iter()
        .enumerate()
        .map(|(x, p)| p * model.cost(policy[x], x))
        .sum())
}

pub const SIMULATION_WINDOWS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationReport {
    pub horizon: usize,
    pub runs: usize,
    /// Mean over runs of `(1/T) Σ_{s<T} L(X_s, U_s)`.
    pub mean: f64,
    pub stderr: f64,
    /// Averages over consecutive windows of `T/10` steps, pooled over runs;
    /// the tail of this sequence approximates the limsup.
    pub window_means: Vec<f64>,
}

pub fn ergodic_cost_simulate(
    model: &ControlModel,
    policy: &Policy,
    horizon: usize,
    runs: usize,
    seed: u64,
    x0: usize,
) -> Result<SimulationReport, ControlError> {
    if horizon == 0 || runs == 0 {
        return Err(ControlError::InvalidHorizon);
    }
    policy.validate(model)?;
    model.reference().check_state(x0)?;
    let samplers: Vec<ColumnSampler> = (0..model.num_actions())
        .map(|u| ColumnSampler::new(model.kernel(u)))
        .collect();
    let windows = SIMULATION_WINDOWS.min(horizon);
    let window_len = horizon / windows;
    let mut window_sums = vec![0.0; windows];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut values = Vec::with_capacity(runs);
    for run in 0..runs {
        let mut rng = random::indexed_stream(seed, "ergodic_cost_simulate", run as u64);
        let mut x = x0;
        let mut total = 0.0;
        for s in 0..horizon {
            let u = policy.action(s, x);
            let l = model.cost(u, x);
            total += l;
            window_sums[(s / window_len).min(windows - 1)] += l;
            x = samplers[u].step(x, &mut rng);
        }
        let j = total / horizon as f64;
        values.push(j);
        sum += j;
    }
    let n = runs as f64;
    let mean = sum / n;
    for j in &values {
        sum_sq += (j - mean) * (j - mean);
    }
    let var = if runs > 1 { sum_sq / (n - 1.0) } else { 0.0 };
    let window_means = window_sums
        .iter()
        .enumerate()
        .map(|(w, s)| {
            let len = if w + 1 == windows {
                horizon - window_len * (windows - 1)
            } else {
                window_len
            };
            s / (len as f64 * n)
        })
        .collect();
    Ok(SimulationReport {
        horizon,
        runs,
        mean,
        stderr: libm::sqrt(var / n),
        window_means,
    })
}

pub const RVI_MAX_ITER: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct RviSolution {
    pub lambda_star: f64,
    /// Bias normalised to zero at the anchor.
    pub h: ValueTable,
    pub iterations: usize,
    /// `span(Th − h)` at exit.
    pub span: f64,
    /// Damping `½` was needed.
    pub damped: bool,
}

/// `(Th)(x) = min_u {L(x, u) + Σ_i B^u_{ix} h(i)}`.
fn bellman_average(model: &ControlModel, h: &[f64], out: &mut [f64]) {
    for (x, o) in out.iter_mut().enumerate() {
        *o = (0..model.num_actions())
            .map(|u| model.cost(u, x) + model.kernel(u).expect_from(x, h))
            .fold(f64::INFINITY, f64::min);
    }
}

fn rvi(
    model: &ControlModel,
    tol: f64,
    anchor: usize,
    tau: f64,
    max_iter: usize,
) -> Result<RviSolution, ControlError> {
    let n = model.n();
    let mut h = vec![0.0; n];
    let mut th = vec![0.0; n];
    let mut span = f64::INFINITY;
    for it in 1..=max_iter {
        bellman_average(model, &h, &mut th);
        let (lo, hi) = h
            .iter()
            .zip(&th)
            .map(|(a, b)| b - a)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), d| (l.min(d), u.max(d)));
        span = hi - lo;
        if span < tol {
            return Ok(RviSolution {
                lambda_star: 0.5 * (lo + hi),
                h: ValueTable::new(h),
                iterations: it,
                span,
                damped: tau < 1.0,
            });
        }
        for (hx, tx) in h.iter_mut().zip(&th) {
            *hx += tau * (tx - *hx);
        }
        let shift = h[anchor];
        h.iter_mut().for_each(|v| *v -= shift);
    }
    Err(ControlError::NoConvergence {
        iterations: max_iter,
        span,
    })
}

/// Relative value iteration for the average-cost problem, stopped when
/// `span(Th − h) < tol`. Retried with the damped operator `h + ½(Th − h)`
/// when the plain iteration does not converge.
pub fn rvi_oracle(model: &ControlModel, tol: f64, anchor: usize) -> Result<RviSolution, ControlError> {
    model.reference().check_state(anchor)?;
    match rvi(model, tol, anchor, 1.0, RVI_MAX_ITER) {
        Err(ControlError::NoConvergence { .. }) => rvi(model, tol, anchor, 0.5, RVI_MAX_ITER),
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicySearch {
    pub best_cost: f64,
    pub best_policy: Vec<usize>,
    pub policies: usize,
}

/// Minimum of [`ergodic_cost_exact`] over all `|U|^N` feedback policies.
pub fn exhaustive_policy_search(model: &ControlModel) -> Result<PolicySearch, ControlError> {
    let n = model.n();
    let m = model.num_actions();
    let mut policy = vec![0usize; n];
    let mut best = PolicySearch {
        best_cost: f64::INFINITY,
        best_policy: policy.clone(),
        policies: 0,
    };
    loop {
        let cost = ergodic_cost_exact(model, &policy)?;
        best.policies += 1;
        if cost < best.best_cost {
            best.best_cost = cost;
            best.best_policy = policy.clone();
        }
        let mut i = 0;
        loop {
            if i == n {
                return Ok(best);
            }
            policy[i] += 1;
            if policy[i] < m {
                break;
            }
            policy[i] = 0;
            i += 1;
        }
    }
}

/// Schedule that at time `s` plays the costliest action whose Hamiltonian
/// term at `z = v` stays below `f(x, v) + 2^{−s}`.
pub fn epsilon_schedule(
    model: &ControlModel,
    v: &[f64],
    horizon: usize,
) -> Result<Schedule, ControlError> {
    if horizon == 0 {
        return Err(ControlError::InvalidHorizon);
    }
    if v.len() != model.n() {
        return Err(ControlError::DimensionMismatch {
            expected: model.n(),
            found: v.len(),
        });
    }
    let a = model.reference();
    let terms: Vec<Vec<f64>> = (0..model.n())
        .map(|x| {
            (0..model.num_actions())
                .map(|u| model.cost(u, x) + model.kernel(u).expect_from(x, v) - a.expect_from(x, v))
                .collect()
        })
        .collect();
    let mut actions = Vec::with_capacity(horizon);
    let mut slack = Vec::with_capacity(horizon);
    for s in 0..horizon {
        let eps = libm::pow(2.0, -(s as f64));
        let row = terms
            .iter()
            .map(|t| {
                let mut pick = 0;
                for (u, &tu) in t.iter().enumerate() {
                    if tu < t[pick] {
                        pick = u;
                    }
                }
                let f = t[pick];
                for (u, &tu) in t.iter().enumerate() {
                    if tu < f + eps && tu > t[pick] {
                        pick = u;
                    }
                }
                pick
            })
            .collect();
        actions.push(row);
        slack.push(eps);
    }
    Ok(Schedule { actions, slack })
}
