use alloc::vec::Vec;

use super::{check_open_gamma, ErgodicityError};
use crate::chain::{self, TransitionMatrix};
use crate::linalg;

/// Split chain of `B ⪰_γ A` on `2N` states: index `x` is `x` in the lower
/// layer, `N + x` is `x` in the upper layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitKernel {
    pub a: TransitionMatrix,
    pub b: TransitionMatrix,
    pub gamma: f64,
    /// `(B − γA)/(1 − γ)`.
    pub c: TransitionMatrix,
    /// `[Č | Ǎ]`.
    pub big_b: TransitionMatrix,
}

impl SplitKernel {
    pub fn n(&self) -> usize {
        self.a.n()
    }
}

/// `Π̌(φ) = ((1 − γ)φ, γφ)`.
pub fn split_vector(phi: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * phi.len());
    out.extend(phi.iter().map(|p| (1.0 - gamma) * p));
    out.extend(phi.iter().map(|p| gamma * p));
    out
}

/// Sum of the two layers of a split vector.
pub fn collapse(v: &[f64]) -> Vec<f64> {
    let n = v.len() / 2;
    (0..n).map(|x| v[x] + v[n + x]).collect()
}

pub fn build_split(
    a: &TransitionMatrix,
    b: &TransitionMatrix,
    gamma: f64,
) -> Result<SplitKernel, ErgodicityError> {
    check_open_gamma(gamma)?;
    if !chain::is_gamma_controlled(b, a, gamma)? {
        return Err(ErgodicityError::NotGammaControlled);
    }
    let n = a.n();
    let mut c = Vec::with_capacity(n * n);
    for j in 0..n {
        let col: Vec<f64> = a
            .column(j)
            .iter()
            .zip(b.column(j))
            .map(|(aij, bij)| ((bij - gamma * aij) / (1.0 - gamma)).max(0.0))
            .collect();
        let s: f64 = col.iter().sum();
        c.extend(col.into_iter().map(|v| v / s));
    }
    let c = TransitionMatrix::from_raw(n, c);
    let mut big = Vec::with_capacity(4 * n * n);
    for j in 0..n {
        big.extend(split_vector(c.column(j), gamma));
    }
    for j in 0..n {
        big.extend(split_vector(a.column(j), gamma));
    }
    let big_b = TransitionMatrix::from_raw(2 * n, big);
    Ok(SplitKernel {
        a: a.clone(),
        b: b.clone(),
        gamma,
        c,
        big_b,
    })
}

/// Largest deviation, over `s = 0..=t`, in `Π̌(B^s φ) = 𝓑^s Π̌(φ)` and in
/// the collapse of `𝓑^s Π̌(φ)` back to `B^s φ`.
pub fn split_commutation_check(kernel: &SplitKernel, phi: &[f64], t: usize) -> f64 {
    let mut plain = phi.to_vec();
    let mut split = split_vector(phi, kernel.gamma);
    let mut worst: f64 = 0.0;
    for s in 0..=t {
        if s > 0 {
            plain = kernel.b.apply(&plain);
            split = kernel.big_b.apply(&split);
        }
        let expected = split_vector(&plain, kernel.gamma);
        worst = worst
            .max(linalg::max_abs_diff(&expected, &split))
            .max(linalg::max_abs_diff(&collapse(&split), &plain));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn a2() -> TransitionMatrix {
        TransitionMatrix::from_columns(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap()
    }

    #[test]
    fn b_equal_a_gives_c_equal_a() {
        let k = build_split(&a2(), &a2(), 0.3).unwrap();
        for j in 0..2 {
            assert!(linalg::max_abs_diff(k.c.column(j), a2().column(j)) < 1e-15);
        }
    }

    #[test]
    fn two_state_example() {
        let b = TransitionMatrix::from_columns(vec![vec![0.4, 0.6], vec![0.7, 0.3]]).unwrap();
        let k = build_split(&a2(), &b, 0.5).unwrap();
        // C = 2(B − A/2)
        assert!(linalg::max_abs_diff(k.c.column(0), &[0.1, 0.9]) < 1e-15);
        assert!(linalg::max_abs_diff(k.c.column(1), &[1.0, 0.0]) < 1e-15);
        for col in k.big_b.columns() {
            assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(split_commutation_check(&k, &[0.2, 0.8], 1) < 1e-12);
        assert_eq!(split_commutation_check(&k, &[0.2, 0.8], 0), 0.0);
    }

    #[test]
    fn split_of_stochastic_is_stochastic() {
        let s = split_vector(&[0.25, 0.75], 0.4);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(s.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn uncontrolled_is_rejected() {
        let b = TransitionMatrix::from_columns(vec![vec![1.0, 0.0], vec![0.4, 0.6]]).unwrap();
        assert_eq!(build_split(&a2(), &b, 0.5), Err(ErgodicityError::NotGammaControlled));
        assert_eq!(build_split(&a2(), &a2(), 1.0), Err(ErgodicityError::InvalidGamma(1.0)));
    }
}
