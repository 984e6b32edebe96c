//! First meeting time `T = inf{t ≥ 1 : X_t = Y_t}` of two independent
//! copies of a chain, via linear systems on the product chain.

use alloc::vec;
use alloc::vec::Vec;

use super::{check_open_gamma, ErgodicityError};
use crate::chain::{self, TransitionMatrix};
use crate::linalg::{self, Matrix};

/// The MGF is reported infinite once `ρ(s·Q) ≥ 1 − INFINITE_MARGIN`.
pub const INFINITE_MARGIN: f64 = 1e-10;

/// `E_{xy}[e^{βT}]` for every ordered pair and its supremum `G*(β)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeetingMgf {
    pub beta: f64,
    /// `f64::INFINITY` when the series diverges.
    pub g_star: f64,
    /// Indexed `x * N + y`; empty when infinite.
    pub per_pair: Vec<f64>,
    /// Spectral radius of the off-diagonal block of the product chain.
    pub off_diagonal_radius: f64,
}

impl MeetingMgf {
    pub fn is_finite(&self) -> bool {
        self.g_star.is_finite()
    }
}

struct ProductChain {
    /// Off-diagonal pairs in index order.
    off: Vec<(usize, usize)>,
    /// Restriction of the product kernel to off-diagonal → off-diagonal,
    /// as a row-major matrix acting on functions: `q[(p, p′)] = P(p → p′)`.
    q: Matrix,
    /// `P(X₁ = Y₁ | pair)` for every ordered pair, index `x * N + y`.
    hit: Vec<f64>,
}

impl ProductChain {
    fn new(a: &TransitionMatrix) -> Self {
        let n = a.n();
        let off: Vec<(usize, usize)> = (0..n)
            .flat_map(|x| (0..n).map(move |y| (x, y)))
            .filter(|(x, y)| x != y)
            .collect();
        let q = Matrix::from_fn(off.len(), off.len(), |p, r| {
            let (x, y) = off[p];
            let (i, j) = off[r];
            a.get(i, x) * a.get(j, y)
        });
        let hit = (0..n)
            .flat_map(|x| (0..n).map(move |y| (x, y)))
            .map(|(x, y)| (0..n).map(|i| a.get(i, x) * a.get(i, y)).sum())
            .collect();
        ProductChain { off, q, hit }
    }

    fn radius(&self) -> f64 {
        if self.off.is_empty() {
            0.0
        } else {
            linalg::spectral_radius(&self.q)
        }
    }
}

fn generating_function(a: &TransitionMatrix, s: f64) -> (Option<Vec<f64>>, f64) {
    let n = a.n();
    let product = ProductChain::new(a);
    let radius = product.radius();
    if s * radius >= 1.0 - INFINITE_MARGIN {
        return (None, radius);
    }
    let m = product.off.len();
    let off_values = if m == 0 {
        Vec::new()
    } else {
        let system = Matrix::from_fn(m, m, |p, r| {
            (if p == r { 1.0 } else { 0.0 }) - s * product.q[(p, r)]
        });
        let rhs: Vec<f64> = product
            .off
            .iter()
            .map(|&(x, y)| s * product.hit[x * n + y])
            .collect();
        match linalg::solve(&system, &rhs) {
            Some(v) => v,
            None => return (None, radius),
        }
    };
    let mut out = vec![0.0; n * n];
    for (p, &(x, y)) in product.off.iter().enumerate() {
        out[x * n + y] = off_values[p];
    }
    for x in 0..n {
        let cont: f64 = product
            .off
            .iter()
            .zip(&off_values)
            .map(|(&(i, j), v)| a.get(i, x) * a.get(j, x) * v)
            .sum();
        out[x * n + x] = s * (product.hit[x * n + x] + cont);
    }
    (Some(out), radius)
}

/// `G*(β) = sup_{x,y} E_{xy}[e^{βT}]`.
pub fn meeting_mgf(a: &TransitionMatrix, beta: f64) -> Result<MeetingMgf, ErgodicityError> {
    chain::require_uniformly_ergodic(a)?;
    let (values, radius) = generating_function(a, libm::exp(beta));
    Ok(match values {
        Some(per_pair) => MeetingMgf {
            beta,
            g_star: per_pair.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            per_pair,
            off_diagonal_radius: radius,
        },
        None => MeetingMgf {
            beta,
            g_star: f64::INFINITY,
            per_pair: Vec::new(),
            off_diagonal_radius: radius,
        },
    })
}

/// `E_{xy}[s^T]` for `s ∈ (0, 1)`, index `x * N + y`.
pub fn meeting_pgf(a: &TransitionMatrix, s: f64) -> Result<Vec<f64>, ErgodicityError> {
    chain::require_uniformly_ergodic(a)?;
    // ρ(Q) ≤ 1 and s < 1, so the system is solvable unless s is within
    // the margin of 1 and Q is stochastic on some block
    generating_function(a, s)
        .0
        .ok_or(ErgodicityError::InvalidGamma(libm::sqrt(s)))
}

/// `q_γ = min_{x,y} E_{xy}[γ^{2T}]`, minimum over all ordered pairs.
pub fn q_gamma(a: &TransitionMatrix, gamma: f64) -> Result<f64, ErgodicityError> {
    check_open_gamma(gamma)?;
    let values = meeting_pgf(a, gamma * gamma)?;
    Ok(values.into_iter().fold(f64::INFINITY, f64::min))
}
