use alloc::vec::Vec;

use super::meeting::{meeting_mgf, q_gamma};
use super::{check_open_gamma, ErgodicityError};
use crate::chain::{self, TransitionMatrix};
use crate::random;

pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_T_MAX: usize = 60;

const BISECTION_TOL: f64 = 1e-12;
const MAX_HALVINGS: usize = 200;

/// `β*·min(ε/K, 1)`: if `sup E[e^{β*T}] ≤ K` then `sup E[e^{βT}] ≤ 1 + ε`
/// for every `β` up to this value.
pub fn improve_bound(beta_star: f64, k: f64, epsilon: f64) -> f64 {
    beta_star * (epsilon / k).min(1.0)
}

/// `E[e^{sQ}]` for `Q ∼ Geom(p)` on `{1, 2, …}`; infinite once
/// `(1 − p)e^s ≥ 1`.
pub fn geometric_mgf(s: f64, p: f64) -> f64 {
    let es = libm::exp(s);
    let tail = (1.0 - p) * es;
    if tail >= 1.0 {
        f64::INFINITY
    } else {
        p * es / (1.0 - tail)
    }
}

/// `E[e^{2β(Q₁ + Q₂)}]` with independent `Q₁ ∼ Geom(1 − γ²)`,
/// `Q₂ ∼ Geom(γ²)`.
pub fn geometric_pair_mgf(beta: f64, gamma: f64) -> f64 {
    let g2 = gamma * gamma;
    geometric_mgf(2.0 * beta, 1.0 - g2) * geometric_mgf(2.0 * beta, g2)
}

/// Largest `β` (to `1e-12`, from below) with
/// `E[e^{2β(Q₁ + Q₂)}] ≤ ½(1 + 1/(1 − q_γ))`.
pub fn beta_from_geometrics(gamma: f64, q_gamma: f64) -> f64 {
    let g2 = gamma * gamma;
    let target = 0.5 * (1.0 + 1.0 / (1.0 - q_gamma));
    let mut lo = 0.0;
    let mut hi = 0.5 * libm::log(1.0 / g2).min(libm::log(1.0 / (1.0 - g2)));
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if geometric_pair_mgf(mid, gamma) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Constants `(R, ρ)` valid for every `B ⪰_γ A`, with every intermediate
/// quantity of their construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ErgodicityCertificate {
    pub gamma: f64,
    pub epsilon: f64,
    pub q_gamma: f64,
    /// `½(1 + 1/(1 − q_γ))`.
    pub geometric_target: f64,
    /// `β` from the geometric bound.
    pub beta_geom: f64,
    /// `β` after halving until `G*(2β)` is finite.
    pub beta: f64,
    pub halvings: usize,
    pub g_star_2beta: f64,
    /// `γ (G*(2β)/(1 − q_γ))^{1/2} (1 − (1 − q_γ/2)^{1/2})^{−1}`.
    pub h_star_bound: f64,
    pub beta_tilde: f64,
    pub r: f64,
    pub rho: f64,
}

impl ErgodicityCertificate {
    /// `R e^{−ρt}`.
    pub fn envelope(&self, t: usize) -> f64 {
        self.r * libm::exp(-self.rho * t as f64)
    }

    /// `2CR/(1 − e^{−ρ})`: bound on the oscillation of discounted values for
    /// drivers with `|f(·, 0)| ≤ C`.
    pub fn oscillation_bound(&self, c: f64) -> f64 {
        2.0 * c * self.r / (1.0 - libm::exp(-self.rho))
    }
}

pub fn certificate(
    a: &TransitionMatrix,
    gamma: f64,
    epsilon: f64,
) -> Result<ErgodicityCertificate, ErgodicityError> {
    check_open_gamma(gamma)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(ErgodicityError::InvalidEpsilon(epsilon));
    }
    chain::require_uniformly_ergodic(a)?;
    let q = q_gamma(a, gamma)?;
    let beta_geom = beta_from_geometrics(gamma, q);
    let mut beta = beta_geom;
    let mut halvings = 0;
    let mut g = meeting_mgf(a, 2.0 * beta)?;
    while !g.is_finite() && halvings < MAX_HALVINGS {
        beta *= 0.5;
        halvings += 1;
        g = meeting_mgf(a, 2.0 * beta)?;
    }
    let g_star_2beta = g.g_star;
    let h_star_bound =
        gamma * libm::sqrt(g_star_2beta / (1.0 - q)) / (1.0 - libm::sqrt(1.0 - q / 2.0));
    let beta_tilde = improve_bound(beta, h_star_bound, epsilon);
    Ok(ErgodicityCertificate {
        gamma,
        epsilon,
        q_gamma: q,
        geometric_target: 0.5 * (1.0 + 1.0 / (1.0 - q)),
        beta_geom,
        beta,
        halvings,
        g_star_2beta,
        h_star_bound,
        beta_tilde,
        r: 1.0 + epsilon,
        rho: beta_tilde,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeReport {
    pub samples: usize,
    pub t_max: usize,
    pub violations: usize,
    /// `min (R e^{−ρt} − TV)` over samples and times.
    pub worst_margin: f64,
    pub worst_sample: usize,
    pub worst_t: usize,
    /// Largest `ρ′` with `TV ≤ R e^{−ρ′t}` on every sample and `t ≥ 1`:
    /// how much room the certificate leaves.
    pub implied_rate: f64,
    pub pass: bool,
}

/// The `k`-th test kernel: `A` itself, then `γA + (1 − γ)e_i1ᵀ` for each
/// state `i`, then `γA + (1 − γ)E` with Dirichlet(1) columns in `E`.
pub fn envelope_sample(a: &TransitionMatrix, gamma: f64, seed: u64, k: usize) -> TransitionMatrix {
    let n = a.n();
    if k == 0 {
        return a.clone();
    }
    if k <= n {
        let i = k - 1;
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let mut col: Vec<f64> = a.column(j).iter().map(|v| gamma * v).collect();
            col[i] += 1.0 - gamma;
            cols.push(col);
        }
        return TransitionMatrix::from_columns(cols).expect("convex combination of kernels");
    }
    let mut rng = random::indexed_stream(seed, "verify_envelope", k as u64);
    random::random_controlled(&mut rng, a, gamma)
}

/// Exact check of `max_x ‖B^tδ_x − π_B‖_TV ≤ R e^{−ρt} + 1e-10` for
/// `t = 0..=t_max` on `samples` kernels from [`envelope_sample`].
pub fn verify_envelope(
    cert: &ErgodicityCertificate,
    a: &TransitionMatrix,
    samples: usize,
    t_max: usize,
    seed: u64,
) -> Result<EnvelopeReport, ErgodicityError> {
    let mut report = EnvelopeReport {
        samples,
        t_max,
        violations: 0,
        worst_margin: f64::INFINITY,
        worst_sample: 0,
        worst_t: 0,
        implied_rate: f64::INFINITY,
        pass: true,
    };
    for k in 0..samples {
        let b = envelope_sample(a, cert.gamma, seed, k);
        let pi = chain::stationary_distribution(&b)?;
        let decay = chain::tv_decay(&b, pi.weights(), t_max);
        for (t, &tv) in decay.iter().enumerate() {
            let env = cert.envelope(t);
            let margin = env - tv;
            if margin < report.worst_margin {
                report.worst_margin = margin;
                report.worst_sample = k;
                report.worst_t = t;
            }
            if tv > env + 1e-10 {
                report.violations += 1;
            }
            if t >= 1 && tv > 0.0 {
                let rate = libm::log(cert.r / tv) / t as f64;
                report.implied_rate = report.implied_rate.min(rate);
            }
        }
    }
    report.pass = report.violations == 0;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;

    fn a2() -> TransitionMatrix {
        TransitionMatrix::from_columns(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap()
    }

    #[test]
    fn improve_bound_examples() {
        assert!((improve_bound(1.0, 10.0, 0.1) - 0.01).abs() < 1e-15);
        assert_eq!(improve_bound(0.7, 1.0, 2.0), 0.7);
        assert!((improve_bound(0.2, 2.0, 1.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn geometric_beta_hits_target() {
        let beta = beta_from_geometrics(0.5, 0.2);
        let target = 0.5 * (1.0 + 1.0 / 0.8);
        assert!((geometric_pair_mgf(beta, 0.5) - target).abs() < 1e-9);
        assert!(geometric_pair_mgf(beta, 0.5) <= target);
        // q ↓ 0 forces β ↓ 0
        let mut prev = f64::INFINITY;
        for q in [0.5, 0.1, 0.01, 0.001] {
            let b = beta_from_geometrics(0.5, q);
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn geometric_beta_by_simulation() {
        let gamma = 0.5f64;
        let beta = beta_from_geometrics(gamma, 0.2);
        let mut rng = random::stream(11, "geometric_mc");
        let g2 = gamma * gamma;
        let draw = |rng: &mut random::StreamRng, p: f64| {
            let mut k = 1u32;
            while rng.gen::<f64>() >= p {
                k += 1;
            }
            k
        };
        let n = 1_000_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let q = draw(&mut rng, 1.0 - g2) + draw(&mut rng, g2);
            let v = libm::exp(2.0 * beta * q as f64);
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let se = libm::sqrt((sum2 / n as f64 - mean * mean) / n as f64);
        assert!((mean - geometric_pair_mgf(beta, gamma)).abs() < 2.0 * se + 1e-12);
        assert!(mean <= 1.125 + 2.0 * se);
    }

    #[test]
    fn certificate_is_positive_and_monotone_in_epsilon() {
        let c = certificate(&a2(), 0.5, 0.5).unwrap();
        assert!(c.rho > 0.0);
        assert_eq!(c.r, 1.5);
        assert!(c.g_star_2beta.is_finite());
        let tighter = certificate(&a2(), 0.5, 0.1).unwrap();
        assert!(tighter.rho <= c.rho);
    }

    #[test]
    fn envelope_holds_on_two_state_example() {
        let a = a2();
        let c = certificate(&a, 0.5, 0.5).unwrap();
        let r = verify_envelope(&c, &a, 200, 60, 0).unwrap();
        assert!(r.pass, "{:?}", r);
        assert!(r.implied_rate >= c.rho);
    }

    #[test]
    fn samples_are_controlled() {
        let a = a2();
        for k in 0..10 {
            let b = envelope_sample(&a, 0.3, 4, k);
            assert!(chain::is_gamma_controlled(&b, &a, 0.3).unwrap());
        }
        assert_eq!(envelope_sample(&a, 0.3, 4, 0), a);
    }
}
