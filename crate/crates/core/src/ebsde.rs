//! Ergodic BSDEs by vanishing discount.
//!
//! For a γ-balanced Markovian driver the discounted values `v^α` satisfy
//! `α v^α(x₀) → λ` and `v^α − v^α(x₀) → v` as `α ↓ 0`, and `(v, λ)` solves
//! the vector equation
//!
//! ```text
//! v − f(·, v) + λ·1 − Aᵀv = 0,   v(x₀) = 0.
//! ```

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::bsde::{self, BsdeError, ValueTable};
use crate::chain::{self, ChainError, Distribution, TransitionMatrix};
use crate::driver::{self, Driver, DriverError};
use crate::ergodicity::{self, ErgodicityError};
use crate::random;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_HALVINGS: usize = 60;
/// Random `z` draws per state in [`compare`].
pub const DOMINANCE_SAMPLES: usize = 1000;

const INNER_TOL_FACTOR: f64 = 1e-2;
const INNER_MAX_ITER: usize = 10_000_000;
const REFERENCE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum EbsdeError {
    NoCertificate,
    /// The driver's reference kernel is not `A`.
    ReferenceMismatch,
    NoConvergence {
        halvings: usize,
        lambda_step: f64,
        v_step: f64,
    },
    ResidualTooLarge {
        residual: f64,
        bound: f64,
    },
    DominanceNotVerified {
        state: usize,
        gap: f64,
    },
    InvalidOptions,
    Bsde(BsdeError),
    Driver(DriverError),
    Ergodicity(ErgodicityError),
    Chain(ChainError),
}

impl fmt::Display for EbsdeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EbsdeError::NoCertificate => write!(f, "driver carries no gamma-balance certificate"),
            EbsdeError::ReferenceMismatch => {
                write!(f, "driver reference kernel differs from the chain")
            }
            EbsdeError::NoConvergence {
                halvings,
                lambda_step,
                v_step,
            } => write!(
                f,
                "vanishing-discount ladder did not settle after {} halvings \
                 (last lambda step {:e}, last v step {:e})",
                halvings, lambda_step, v_step
            ),
            EbsdeError::ResidualTooLarge { residual, bound } => {
                write!(f, "residual {:e} exceeds {:e}", residual, bound)
            }
            EbsdeError::DominanceNotVerified { state, gap } => write!(
                f,
                "f < f' found at state {} (gap {:e}); comparison not asserted",
                state + 1,
                gap
            ),
            EbsdeError::InvalidOptions => write!(f, "invalid solver options"),
            EbsdeError::Bsde(e) => write!(f, "{}", e),
            EbsdeError::Driver(e) => write!(f, "{}", e),
            EbsdeError::Ergodicity(e) => write!(f, "{}", e),
            EbsdeError::Chain(e) => write!(f, "{}", e),
        }
    }
}

impl core::error::Error for EbsdeError {}

impl From<BsdeError> for EbsdeError {
    fn from(e: BsdeError) -> Self {
        EbsdeError::Bsde(e)
    }
}

impl From<DriverError> for EbsdeError {
    fn from(e: DriverError) -> Self {
        EbsdeError::Driver(e)
    }
}

impl From<ErgodicityError> for EbsdeError {
    fn from(e: ErgodicityError) -> Self {
        EbsdeError::Ergodicity(e)
    }
}

impl From<ChainError> for EbsdeError {
    fn from(e: ChainError) -> Self {
        EbsdeError::Chain(e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EbsdeOptions {
    pub tol: f64,
    pub anchor: usize,
    pub alpha0: f64,
    /// `α_{n+1} = ratio · α_n`.
    pub ratio: f64,
    pub max_halvings: usize,
    /// `ε` of the certificate used for the a-priori bounds; `None` skips them.
    pub certificate_epsilon: Option<f64>,
}

impl Default for EbsdeOptions {
    fn default() -> Self {
        EbsdeOptions {
            tol: DEFAULT_TOL,
            anchor: 0,
            alpha0: 1.0,
            ratio: 0.5,
            max_halvings: DEFAULT_MAX_HALVINGS,
            certificate_epsilon: Some(ergodicity::DEFAULT_EPSILON),
        }
    }
}

/// One rung of the discount ladder.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaStep {
    pub alpha: f64,
    /// `α v^α(x₀)`.
    pub level: f64,
    /// `max v^α − min v^α`.
    pub oscillation: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    /// Over states in the closed class.
    pub recurrent: f64,
    /// Over transient states; zero when there are none.
    pub transient: f64,
}

/// A-priori bounds from an ergodicity certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct CertificateBounds {
    pub c: f64,
    pub r: f64,
    pub rho: f64,
    /// `2CR/(1 − e^{−ρ})`.
    pub c_prime: f64,
    /// Largest oscillation of `v^α` along the ladder.
    pub max_oscillation: f64,
    pub lambda_ok: bool,
    pub v_ok: bool,
    pub oscillation_ok: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EbsdeSolution {
    /// Normalised so that `v(x₀) = 0`.
    pub v: ValueTable,
    pub lambda: f64,
    pub x0: usize,
    pub alphas_used: Vec<f64>,
    pub trace: Vec<AlphaStep>,
    pub residual: Residual,
    pub pi: Distribution,
    pub transient_states: Vec<usize>,
    /// The anchor is transient, so `v` depends on transient data.
    pub anchor_transient: bool,
    pub bounds: Option<CertificateBounds>,
}

fn check_driver(a: &TransitionMatrix, driver: &dyn Driver) -> Result<f64, EbsdeError> {
    let gamma = driver.gamma().ok_or(EbsdeError::NoCertificate)?;
    if driver.states() != a.n() {
        return Err(BsdeError::DimensionMismatch {
            expected: a.n(),
            found: driver.states(),
        }
        .into());
    }
    if let Some(r) = driver.reference() {
        let differs = (0..a.n())
            .any(|j| (0..a.n()).any(|i| (r.get(i, j) - a.get(i, j)).abs() > REFERENCE_TOL));
        if differs {
            return Err(EbsdeError::ReferenceMismatch);
        }
    }
    Ok(gamma)
}

/// `|v(x) − f(x, v) + λ − (Aᵀv)(x)|`, split by recurrent and transient states.
pub fn residual(a: &TransitionMatrix, driver: &dyn Driver, v: &[f64], lambda: f64) -> Residual {
    let mask = chain::class_structure(a).recurrent_mask(a.n());
    let mut out = Residual {
        recurrent: 0.0,
        transient: 0.0,
    };
    for x in 0..a.n() {
        let r = (v[x] - driver.eval(x, 0, 0.0, v) + lambda - a.expect_from(x, v)).abs();
        let slot = if mask[x] {
            &mut out.recurrent
        } else {
            &mut out.transient
        };
        *slot = slot.max(r);
    }
    out
}

pub fn solve_ebsde(
    a: &TransitionMatrix,
    driver: &dyn Driver,
    options: &EbsdeOptions,
) -> Result<EbsdeSolution, EbsdeError> {
    let gamma = check_driver(a, driver)?;
    a.check_state(options.anchor)?;
    if !(options.tol > 0.0
        && options.alpha0 > 0.0
        && options.ratio > 0.0
        && options.ratio < 1.0)
    {
        return Err(EbsdeError::InvalidOptions);
    }
    let pi = chain::stationary_distribution(a)?;
    let structure = chain::class_structure(a);
    let anchor = options.anchor;
    let inner_tol = options.tol * INNER_TOL_FACTOR;

    let mut trace: Vec<AlphaStep> = Vec::new();
    let mut prev: Option<bsde::RelativeSolution> = None;
    let mut last = (f64::INFINITY, f64::INFINITY);
    let mut done = None;
    for n in 0..=options.max_halvings {
        let alpha = options.alpha0 * libm::pow(options.ratio, n as f64);
        let warm = prev.as_ref().map(|p| p.w.values());
        let sol =
            bsde::solve_discounted_relative(a, driver, alpha, anchor, inner_tol, warm, INNER_MAX_ITER)?;
        let (lo, hi) = sol
            .w
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &w| (l.min(w), h.max(w)));
        trace.push(AlphaStep {
            alpha,
            level: sol.level,
            oscillation: hi - lo,
            iterations: sol.iterations,
        });
        if let Some(p) = &prev {
            let dl = (sol.level - p.level).abs();
            let dv = crate::linalg::max_abs_diff(&sol.w, &p.w);
            last = (dl, dv);
            if dl < options.tol && dv < options.tol {
                done = Some(sol);
                break;
            }
        }
        prev = Some(sol);
    }
    let sol = done.ok_or(EbsdeError::NoConvergence {
        halvings: options.max_halvings,
        lambda_step: last.0,
        v_step: last.1,
    })?;
    let lambda = sol.level;
    let v = sol.w;
    let res = residual(a, driver, &v, lambda);
    let bound = 10.0 * options.tol;
    if res.recurrent >= bound {
        return Err(EbsdeError::ResidualTooLarge {
            residual: res.recurrent,
            bound,
        });
    }

    let bounds = match options.certificate_epsilon {
        Some(eps) => {
            let cert = ergodicity::certificate(a, gamma, eps)?;
            let c = driver.zero_bound().ok_or(BsdeError::NoZeroBound)?;
            let c_prime = cert.oscillation_bound(c);
            let max_oscillation = trace.iter().map(|s| s.oscillation).fold(0.0, f64::max);
            let v_sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            Some(CertificateBounds {
                c,
                r: cert.r,
                rho: cert.rho,
                c_prime,
                max_oscillation,
                lambda_ok: lambda.abs() <= c_prime,
                v_ok: v_sup <= 2.0 * c_prime,
                oscillation_ok: max_oscillation <= c_prime,
            })
        }
        None => None,
    };

    Ok(EbsdeSolution {
        alphas_used: trace.iter().map(|s| s.alpha).collect(),
        v,
        lambda,
        x0: anchor,
        trace,
        residual: res,
        pi,
        anchor_transient: structure.transient.contains(&anchor),
        transient_states: structure.transient,
        bounds,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaIdentities {
    pub lhs: f64,
    /// `Σ π(x) f(x, v)`.
    pub via_pi: f64,
    /// `Σ π_v(x) f(x, 0)` with `π_v` stationary for `Ψ^{v,0}`.
    pub via_pi_v: f64,
    pub pi_v: Distribution,
}

impl LambdaIdentities {
    pub fn max_error(&self) -> f64 {
        (self.via_pi - self.lhs).abs().max((self.via_pi_v - self.lhs).abs())
    }
}

pub fn lambda_identities(
    a: &TransitionMatrix,
    driver: &dyn Driver,
    sol: &EbsdeSolution,
) -> Result<LambdaIdentities, EbsdeError> {
    check_driver(a, driver)?;
    let n = a.n();
    let zero = vec![0.0; n];
    let via_pi = (0..n)
        .map(|x| sol.pi.weights()[x] * driver.eval(x, 0, 0.0, &sol.v))
        .sum();
    let psi = driver::equivalent_measure_matrix(driver, &sol.v, &zero)?;
    let pi_v = chain::stationary_distribution(&psi)?;
    let via_pi_v = (0..n)
        .map(|x| pi_v.weights()[x] * driver.eval(x, 0, 0.0, &zero))
        .sum();
    Ok(LambdaIdentities {
        lhs: sol.lambda,
        via_pi,
        via_pi_v,
        pi_v,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub lambda: f64,
    pub lambda_prime: f64,
    pub ordered: bool,
    /// Smallest `f − f′` seen while checking dominance.
    pub min_gap: f64,
}

/// Solves both equations and checks `λ ≥ λ′ − tol` after verifying `f ≥ f′`
/// on every state for [`DOMINANCE_SAMPLES`] random `z` and both solutions.
pub fn compare(
    a: &TransitionMatrix,
    f: &dyn Driver,
    f_prime: &dyn Driver,
    options: &EbsdeOptions,
    seed: u64,
) -> Result<Comparison, EbsdeError> {
    let sol = solve_ebsde(a, f, options)?;
    let sol_prime = solve_ebsde(a, f_prime, options)?;
    let n = a.n();
    let scale = 1.0 + sol.v.iter().chain(sol_prime.v.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
    let mut rng = random::stream(seed, "compare");
    let mut min_gap = f64::INFINITY;
    let mut check = |z: &[f64]| -> Result<(), EbsdeError> {
        for x in 0..n {
            let gap = f.eval(x, 0, 0.0, z) - f_prime.eval(x, 0, 0.0, z);
            min_gap = min_gap.min(gap);
            if gap < -REFERENCE_TOL {
                return Err(EbsdeError::DominanceNotVerified { state: x, gap });
            }
        }
        Ok(())
    };
    check(&sol.v)?;
    check(&sol_prime.v)?;
    for _ in 0..DOMINANCE_SAMPLES {
        let z = random::uniform_vec(&mut rng, n, -scale, scale);
        check(&z)?;
    }
    Ok(Comparison {
        lambda: sol.lambda,
        lambda_prime: sol_prime.lambda,
        ordered: sol.lambda >= sol_prime.lambda - options.tol,
        min_gap,
    })
}
