//! Seeded random instances: named RNG streams, Dirichlet columns and random
//! kernels with prescribed γ-relations to a reference kernel.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::TransitionMatrix;

pub type StreamRng = ChaCha8Rng;

fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent stream for a named purpose under a master seed.
pub fn stream(seed: u64, name: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ fnv1a(name)))
}

/// Like [`stream`], one per sample index.
pub fn indexed_stream(seed: u64, name: &str, index: u64) -> StreamRng {
    let base = splitmix64(seed ^ fnv1a(name));
    ChaCha8Rng::seed_from_u64(splitmix64(base ^ splitmix64(index)))
}

/// Uniform on (0, 1].
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.gen::<f64>()
}

/// Dirichlet(1, …, 1) sample via normalised exponentials.
pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| -libm::log(open_unit(rng))).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

/// Index drawn from the given weights (which need not be normalised).
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = i;
        if u < w {
            return i;
        }
        u -= w;
    }
    last
}

fn normalise_columns(n: usize, mut data: Vec<f64>) -> TransitionMatrix {
    for col in data.chunks_mut(n) {
        let s: f64 = col.iter().sum();
        col.iter_mut().for_each(|x| *x /= s);
    }
    TransitionMatrix::from_raw(n, data)
}

/// Kernel with independent Dirichlet(1) columns; strictly positive, hence
/// uniformly ergodic, with probability one.
pub fn random_stochastic<R: Rng + ?Sized>(rng: &mut R, n: usize) -> TransitionMatrix {
    let mut data = Vec::with_capacity(n * n);
    for _ in 0..n {
        data.extend(dirichlet(rng, n));
    }
    normalise_columns(n, data)
}

/// Uniformly ergodic kernel with structural zeros: every state keeps a
/// self-loop and an edge to its successor on a cycle, other edges survive
/// with probability `density`.
pub fn random_sparse_ergodic<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    density: f64,
) -> TransitionMatrix {
    let mut data = alloc::vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let keep = i == j || i == (j + 1) % n || rng.gen::<f64>() < density;
            if keep {
                data[j * n + i] = open_unit(rng);
            }
        }
    }
    normalise_columns(n, data)
}

/// `B = γA + (1 − γ)E` with Dirichlet(1) columns in `E`, so `B ⪰_γ A`.
pub fn random_controlled<R: Rng + ?Sized>(
    rng: &mut R,
    a: &TransitionMatrix,
    gamma: f64,
) -> TransitionMatrix {
    let n = a.n();
    let mut data = Vec::with_capacity(n * n);
    for j in 0..n {
        let e = dirichlet(rng, n);
        data.extend(a.column(j).iter().zip(e).map(|(aij, eij)| gamma * aij + (1.0 - gamma) * eij));
    }
    normalise_columns(n, data)
}

/// Kernel with the zero pattern of `A` and entry ratios `b_ij / a_ij` in
/// `[√γ, 1/√γ]`, hence `A ∼_γ B`. Each entry is scaled by a factor in
/// `[√γ, 1]` before the column is renormalised.
pub fn random_equivalent<R: Rng + ?Sized>(
    rng: &mut R,
    a: &TransitionMatrix,
    gamma: f64,
) -> TransitionMatrix {
    let n = a.n();
    let lo = libm::sqrt(gamma);
    let mut data = Vec::with_capacity(n * n);
    for j in 0..n {
        for &aij in a.column(j) {
            let r = lo + (1.0 - lo) * rng.gen::<f64>();
            data.push(aij * r);
        }
    }
    normalise_columns(n, data)
}

/// Vector with independent entries uniform on `[lo, hi)`.
pub fn uniform_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect()
}

/// Inverse-CDF sampling of the next state from cumulative columns.
pub struct ColumnSampler {
    n: usize,
    cumulative: Vec<f64>,
}

impl ColumnSampler {
    pub fn new(k: &TransitionMatrix) -> Self {
        let n = k.n();
        let mut cumulative = Vec::with_capacity(n * n);
        for col in k.columns() {
            let mut acc = 0.0;
            for &p in col {
                acc += p;
                cumulative.push(acc);
            }
        }
        ColumnSampler { n, cumulative }
    }

    pub fn step<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        let col = &self.cumulative[from * self.n..(from + 1) * self.n];
        let u = rng.gen::<f64>() * col[self.n - 1];
        // last state with positive mass absorbs rounding at the top
        let mut last = 0;
        for (i, &c) in col.iter().enumerate() {
            let prev = if i == 0 { 0.0 } else { col[i - 1] };
            if c > prev {
                last = i;
                if u < c {
                    return i;
                }
            }
        }
        last
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{
        classify_uniform_ergodicity, is_gamma_controlled, is_gamma_equivalent, ErgodicityClass,
    };

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a: u64 = stream(7, "x").gen();
        let b: u64 = stream(7, "x").gen();
        let c: u64 = stream(7, "y").gen();
        let d: u64 = indexed_stream(7, "x", 1).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn random_kernels_satisfy_relations() {
        let mut rng = stream(1, "test");
        for n in 1..7 {
            let a = random_stochastic(&mut rng, n);
            for col in a.columns() {
                assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            let b = random_controlled(&mut rng, &a, 0.3);
            assert!(is_gamma_controlled(&b, &a, 0.3).unwrap());
            let s = random_sparse_ergodic(&mut rng, n, 0.3);
            assert_eq!(classify_uniform_ergodicity(&s), ErgodicityClass::UniformlyErgodic);
            let e = random_equivalent(&mut rng, &s, 0.4);
            assert!(is_gamma_equivalent(&s, &e, 0.4).unwrap());
        }
    }

    #[test]
    fn categorical_respects_zero_weights() {
        let mut rng = stream(3, "cat");
        for _ in 0..1000 {
            let i = categorical(&mut rng, &[0.0, 0.5, 0.0, 0.5]);
            assert!(i == 1 || i == 3);
        }
    }
}
