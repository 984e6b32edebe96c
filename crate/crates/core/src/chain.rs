//! Finite state spaces, column-stochastic transition matrices and the
//! quantities built on them: stationary laws, ergodicity classification,
//! γ-control relations, the martingale-difference seminorm and total
//! variation.
//!
//! Convention: `a[(i, j)] = P(X_{t+1} = i | X_t = j)`, so column `j` is the
//! law of the next state from `j`, and the law at time `t` from an initial
//! law `ν` is `A^t ν`. States are numbered from 0 in the API; error messages
//! and the external formats number them from 1.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{self, Matrix};

/// Tolerance on entries and column sums when validating a kernel.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Entries at or below this are structural zeros.
pub const STRUCTURAL_ZERO: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq)]
pub enum ChainError {
    Empty,
    NotSquare { rows: usize, column: usize, len: usize },
    NonFinite { row: usize, column: usize },
    NegativeEntry { row: usize, column: usize, value: f64 },
    NonStochastic { column: usize, sum: f64 },
    DimensionMismatch { expected: usize, found: usize },
    NotADistribution { sum: f64 },
    NotUniformlyErgodic(ErgodicityClass),
    StateOutOfRange { state: usize, n: usize },
}

impl fmt::Display for ChainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainError::Empty => write!(f, "matrix has no states"),
            ChainError::NotSquare { rows, column, len } => write!(
                f,
                "column {} has {} entries, expected {}",
                column + 1,
                len,
                rows
            ),
            ChainError::NonFinite { row, column } => {
                write!(f, "entry ({}, {}) is not finite", row + 1, column + 1)
            }
            ChainError::NegativeEntry { row, column, value } => write!(
                f,
                "entry ({}, {}) is negative ({})",
                row + 1,
                column + 1,
                value
            ),
            ChainError::NonStochastic { column, sum } => {
                write!(f, "column {} sums to {} instead of 1", column + 1, sum)
            }
            ChainError::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {}, found {}", expected, found)
            }
            ChainError::NotADistribution { sum } => {
                write!(f, "weights sum to {} instead of 1", sum)
            }
            ChainError::NotUniformlyErgodic(class) => {
                write!(f, "chain is not uniformly ergodic ({:?})", class)
            }
            ChainError::StateOutOfRange { state, n } => {
                write!(f, "state {} out of range 1..={}", state + 1, n)
            }
        }
    }
}

impl core::error::Error for ChainError {}

/// Validated column-stochastic kernel on `n` states.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    // column-major: entry (i, j) at j * n + i
    data: Vec<f64>,
}

impl TransitionMatrix {
    /// Validate a kernel given column by column.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self, ChainError> {
        let n = columns.len();
        if n == 0 {
            return Err(ChainError::Empty);
        }
        let mut data = Vec::with_capacity(n * n);
        for (j, col) in columns.into_iter().enumerate() {
            if col.len() != n {
                return Err(ChainError::NotSquare {
                    rows: n,
                    column: j,
                    len: col.len(),
                });
            }
            data.extend(col);
        }
        Self::validated(n, data)
    }

    /// Validate a kernel given as a matrix with `m[(i, j)] = P(i | j)`.
    pub fn from_matrix(m: &Matrix) -> Result<Self, ChainError> {
        if m.rows() != m.cols() {
            return Err(ChainError::NotSquare {
                rows: m.rows(),
                column: 0,
                len: m.cols(),
            });
        }
        let n = m.rows();
        if n == 0 {
            return Err(ChainError::Empty);
        }
        let mut data = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                data.push(m[(i, j)]);
            }
        }
        Self::validated(n, data)
    }

    fn validated(n: usize, mut data: Vec<f64>) -> Result<Self, ChainError> {
        for j in 0..n {
            let col = &mut data[j * n..(j + 1) * n];
            for (i, v) in col.iter_mut().enumerate() {
                if !v.is_finite() {
                    return Err(ChainError::NonFinite { row: i, column: j });
                }
                if *v < -STOCHASTIC_TOL {
                    return Err(ChainError::NegativeEntry {
                        row: i,
                        column: j,
                        value: *v,
                    });
                }
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let sum: f64 = col.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(ChainError::NonStochastic { column: j, sum });
            }
        }
        Ok(TransitionMatrix { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        TransitionMatrix { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `P(next = i | current = j)`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n + i]
    }

    /// Law of the next state from `j`, i.e. `A e_j`.
    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n)
    }

    /// Whether `i` is reachable from `j` in one step.
    #[inline]
    pub fn supports(&self, i: usize, j: usize) -> bool {
        self.get(i, j) > STRUCTURAL_ZERO
    }

    /// `A v`: pushes a (signed) measure forward one step.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        let mut out = vec![0.0; self.n];
        for (j, col) in self.columns().enumerate() {
            let w = v[j];
            if w == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(col) {
                *o += a * w;
            }
        }
        out
    }

    /// `Aᵀ v`: one-step conditional expectation, `(Aᵀv)(j) = E[v(X₁) | X₀ = j]`.
    pub fn expect(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        self.columns().map(|col| linalg::dot(col, v)).collect()
    }

    /// `E[v(X₁) | X₀ = j]`.
    #[inline]
    pub fn expect_from(&self, j: usize, v: &[f64]) -> f64 {
        linalg::dot(self.column(j), v)
    }

    /// `self · other`, the kernel of "first `other`, then `self`".
    pub fn compose(&self, other: &TransitionMatrix) -> TransitionMatrix {
        assert_eq!(self.n, other.n);
        let mut data = Vec::with_capacity(self.n * self.n);
        for col in other.columns() {
            data.extend(self.apply(col));
        }
        TransitionMatrix { n: self.n, data }
    }

    pub fn power(&self, t: usize) -> TransitionMatrix {
        let mut result = TransitionMatrix::identity(self.n);
        let mut base = self.clone();
        let mut e = t;
        while e > 0 {
            if e & 1 == 1 {
                result = result.compose(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.compose(&base);
            }
        }
        result
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Build without validation from column-major data the caller has
    /// already checked (entries nonnegative, columns summing to one).
    pub(crate) fn from_raw(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        TransitionMatrix { n, data }
    }

    pub(crate) fn check_state(&self, x: usize) -> Result<(), ChainError> {
        if x < self.n {
            Ok(())
        } else {
            Err(ChainError::StateOutOfRange { state: x, n: self.n })
        }
    }
}

/// Probability vector on `n` states.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    weights: Vec<f64>,
}

impl Distribution {
    pub fn new(weights: Vec<f64>) -> Result<Self, ChainError> {
        if weights.is_empty() {
            return Err(ChainError::Empty);
        }
        for (i, w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(ChainError::NonFinite { row: i, column: 0 });
            }
            if *w < -STOCHASTIC_TOL {
                return Err(ChainError::NegativeEntry {
                    row: i,
                    column: 0,
                    value: *w,
                });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(ChainError::NotADistribution { sum });
        }
        Ok(Distribution { weights })
    }

    /// Point mass `δ_x`.
    pub fn point(n: usize, x: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[x] = 1.0;
        Distribution { weights }
    }

    pub fn uniform(n: usize) -> Self {
        Distribution {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }
}

/// Outcome of [`classify_uniform_ergodicity`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErgodicityClass {
    UniformlyErgodic,
    /// More than one closed communicating class.
    Reducible,
    /// Unique closed class with the given period (> 1).
    Periodic(usize),
}

/// Communicating-class structure of the support digraph `j -> i` iff `a_ij > 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassStructure {
    pub closed: Vec<Vec<usize>>,
    pub transient: Vec<usize>,
}

impl ClassStructure {
    /// States in some closed class, i.e. the non-transient ones.
    pub fn recurrent_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for class in &self.closed {
            for &s in class {
                mask[s] = true;
            }
        }
        mask
    }
}

/// Strongly connected components of the support digraph (Tarjan).
pub fn communicating_classes(a: &TransitionMatrix) -> Vec<Vec<usize>> {
    struct Tarjan<'a> {
        a: &'a TransitionMatrix,
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }

    impl Tarjan<'_> {
        fn visit(&mut self, v: usize) {
            self.index[v] = Some(self.next);
            self.low[v] = self.next;
            self.next += 1;
            self.stack.push(v);
            self.on_stack[v] = true;
            for w in 0..self.a.n() {
                if !self.a.supports(w, v) {
                    continue;
                }
                match self.index[w] {
                    None => {
                        self.visit(w);
                        self.low[v] = self.low[v].min(self.low[w]);
                    }
                    Some(iw) if self.on_stack[w] => self.low[v] = self.low[v].min(iw),
                    Some(_) => {}
                }
            }
            if Some(self.low[v]) == self.index[v] {
                let mut comp = Vec::new();
                while let Some(w) = self.stack.pop() {
                    self.on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                self.out.push(comp);
            }
        }
    }

    let n = a.n();
    let mut t = Tarjan {
        a,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if t.index[v].is_none() {
            t.visit(v);
        }
    }
    t.out.sort();
    t.out
}

pub fn class_structure(a: &TransitionMatrix) -> ClassStructure {
    let n = a.n();
    let classes = communicating_classes(a);
    let mut closed = Vec::new();
    let mut transient = Vec::new();
    for class in classes {
        let mut member = vec![false; n];
        for &s in &class {
            member[s] = true;
        }
        let leaks = class
            .iter()
            .any(|&j| (0..n).any(|i| !member[i] && a.supports(i, j)));
        if leaks {
            transient.extend(class);
        } else {
            closed.push(class);
        }
    }
    transient.sort_unstable();
    ClassStructure { closed, transient }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of a closed class from BFS levels: the gcd over in-class edges
/// `u -> v` of `level(u) + 1 - level(v)`.
fn period(a: &TransitionMatrix, class: &[usize]) -> usize {
    let n = a.n();
    let mut member = vec![false; n];
    for &s in class {
        member[s] = true;
    }
    let mut level: Vec<Option<i64>> = vec![None; n];
    let root = class[0];
    level[root] = Some(0);
    let mut queue = alloc::collections::VecDeque::new();
    queue.push_back(root);
    let mut g = 0usize;
    while let Some(u) = queue.pop_front() {
        let lu = level[u].unwrap();
        for v in 0..n {
            if !member[v] || !a.supports(v, u) {
                continue;
            }
            match level[v] {
                None => {
                    level[v] = Some(lu + 1);
                    queue.push_back(v);
                }
                Some(lv) => {
                    g = gcd(g, (lu + 1 - lv).unsigned_abs() as usize);
                }
            }
        }
    }
    g
}

pub fn classify_uniform_ergodicity(a: &TransitionMatrix) -> ErgodicityClass {
    let structure = class_structure(a);
    if structure.closed.len() != 1 {
        return ErgodicityClass::Reducible;
    }
    match period(a, &structure.closed[0]) {
        1 => ErgodicityClass::UniformlyErgodic,
        p => ErgodicityClass::Periodic(p),
    }
}

pub(crate) fn require_uniformly_ergodic(a: &TransitionMatrix) -> Result<(), ChainError> {
    match classify_uniform_ergodicity(a) {
        ErgodicityClass::UniformlyErgodic => Ok(()),
        other => Err(ChainError::NotUniformlyErgodic(other)),
    }
}

/// Invariant law `π = Aπ`, from a dense solve of `(A − I)π = 0` with the
/// last equation replaced by `Σπ = 1`.
pub fn stationary_distribution(a: &TransitionMatrix) -> Result<Distribution, ChainError> {
    require_uniformly_ergodic(a)?;
    let n = a.n();
    let mut m = Matrix::from_fn(n, n, |i, j| a.get(i, j) - if i == j { 1.0 } else { 0.0 });
    for j in 0..n {
        m[(n - 1, j)] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    // unichain => (A − I) has rank n − 1 and the ones row completes it
    let mut pi = linalg::solve(&m, &rhs).expect("unichain stationary system is nonsingular");
    for p in pi.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    Ok(Distribution { weights: pi })
}

/// `B ⪰_γ A`: `b_ij ≥ γ a_ij` for all entries (slack `1e-12`).
pub fn is_gamma_controlled(
    b: &TransitionMatrix,
    a: &TransitionMatrix,
    gamma: f64,
) -> Result<bool, ChainError> {
    if a.n() != b.n() {
        return Err(ChainError::DimensionMismatch {
            expected: a.n(),
            found: b.n(),
        });
    }
    Ok(a
        .data
        .iter()
        .zip(&b.data)
        .all(|(&aij, &bij)| bij >= gamma * aij - STOCHASTIC_TOL))
}

/// `A ∼_γ B`: mutual γ-control.
pub fn is_gamma_equivalent(
    a: &TransitionMatrix,
    b: &TransitionMatrix,
    gamma: f64,
) -> Result<bool, ChainError> {
    Ok(is_gamma_controlled(b, a, gamma)? && is_gamma_controlled(a, b, gamma)?)
}

/// Conditional covariance of the martingale increment `M₁ = X₁ − Ax` given
/// `X₀ = x`: `diag(Ax) − (Ax)(Ax)ᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleCovariance {
    pub at_state: usize,
    pub matrix: Matrix,
}

pub fn martingale_covariance(a: &TransitionMatrix, x: usize) -> MartingaleCovariance {
    let p = a.column(x);
    let n = a.n();
    let matrix = Matrix::from_fn(n, n, |i, j| {
        let diag = if i == j { p[i] } else { 0.0 };
        diag - p[i] * p[j]
    });
    MartingaleCovariance { at_state: x, matrix }
}

/// `‖z‖_{M}` at state `x`: the conditional standard deviation of `zᵀX₁`.
pub fn seminorm(a: &TransitionMatrix, x: usize, z: &[f64]) -> f64 {
    let p = a.column(x);
    let mean = linalg::dot(p, z);
    let var: f64 = p
        .iter()
        .zip(z)
        .map(|(pi, zi)| {
            let d = zi - mean;
            pi * d * d
        })
        .sum();
    libm::sqrt(var.max(0.0))
}

/// `½ Σ|μ_i − ν_i|`.
pub fn tv_distance(mu: &[f64], nu: &[f64]) -> f64 {
    assert_eq!(mu.len(), nu.len());
    0.5 * mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Law of `X_t` under `A` from `X₀ ∼ ν`, i.e. `A^t ν`.
pub fn marginal_law(a: &TransitionMatrix, nu: &Distribution, t: usize) -> Distribution {
    let mut w = nu.weights.clone();
    for _ in 0..t {
        w = a.apply(&w);
    }
    Distribution { weights: w }
}

/// `max_x ‖A^t δ_x − π‖_TV` for `t = 0..=t_max`. By convexity this is the
/// supremum over all initial laws.
pub fn tv_decay(a: &TransitionMatrix, pi: &[f64], t_max: usize) -> Vec<f64> {
    let n = a.n();
    let mut current = TransitionMatrix::identity(n);
    let mut out = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        if t > 0 {
            current = a.compose(&current);
        }
        let worst = current
            .columns()
            .map(|col| tv_distance(col, pi))
            .fold(0.0, f64::max);
        out.push(worst);
    }
    out
}
