//! Backward stochastic difference equations on a finite chain.
//!
//! The finite-horizon equation
//!
//! ```text
//! Y_t = ξ + Σ_{t≤u<T} f(ω, u, Y_u, Z_u) − Σ_{t≤u<T} Z_uᵀ M_{u+1}
//! ```
//!
//! is solved backward one step at a time: `Z_t` represents the centred
//! increment `Y_{t+1} − E[Y_{t+1} | F_t]`, then `Y_t` is the root of
//! `y − f(t, y, Z_t) = E[Y_{t+1} | F_t]`.
//!
//! [`solve_finite_horizon`] works on the full tree of positive-probability
//! paths and accepts path-dependent drivers and terminal values.
//! [`solve_finite_horizon_markovian`] is the state-indexed recursion for
//! Markovian data. [`solve_discounted`] iterates the discounted equation to
//! its unique bounded fixed point. [`solve_discounted_relative`] solves the
//! same equation after removing the constant mode, which keeps the
//! iteration count bounded as the discount rate goes to zero.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Deref;

use rand::Rng;

use crate::chain::{ChainError, Distribution, TransitionMatrix, STRUCTURAL_ZERO};
use crate::driver::{Driver, PathDriver};
use crate::linalg;
use crate::random;

/// Default node cap for [`PathTree::build`].
pub const DEFAULT_NODE_CAP: usize = 1_000_000;
/// Default tolerance of the discounted solvers.
pub const DEFAULT_TOL: f64 = 1e-10;

const ROOT_TOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 200;
const ROOT_MAX_EXPANSIONS: usize = 64;
const MEAN_TOL: f64 = 1e-10;
const ROUNDING_FLOOR: f64 = 8.0 * f64::EPSILON;

#[derive(Clone, Debug, PartialEq)]
pub enum BsdeError {
    EmptyHorizon,
    KernelCount { expected: usize, found: usize },
    DimensionMismatch { expected: usize, found: usize },
    PathExplosion { cap: usize },
    RootSolveFailure { state: usize, time: usize },
    NotMonotoneInY { state: usize, time: usize },
    NonZeroMean { mean: f64 },
    NoZeroBound,
    NotAutonomous,
    InvalidDiscount(f64),
    NoConvergence { iterations: usize, last_step: f64 },
    Chain(ChainError),
}

impl fmt::Display for BsdeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BsdeError::EmptyHorizon => write!(f, "horizon must be at least 1"),
            BsdeError::KernelCount { expected, found } => write!(
                f,
                "expected 1 or {} kernels, found {}",
                expected, found
            ),
            BsdeError::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {}, found {}", expected, found)
            }
            BsdeError::PathExplosion { cap } => {
                write!(f, "path tree would exceed {} nodes", cap)
            }
            BsdeError::RootSolveFailure { state, time } => write!(
                f,
                "could not bracket the y-root at state {}, time {}",
                state + 1,
                time
            ),
            BsdeError::NotMonotoneInY { state, time } => write!(
                f,
                "y - f(y) is not increasing at state {}, time {}",
                state + 1,
                time
            ),
            BsdeError::NonZeroMean { mean } => {
                write!(f, "increment has conditional mean {} instead of 0", mean)
            }
            BsdeError::NoZeroBound => write!(f, "driver does not declare a bound on |f(x, 0)|"),
            BsdeError::NotAutonomous => {
                write!(f, "driver must not depend on y or t for this solver")
            }
            BsdeError::InvalidDiscount(a) => write!(f, "discount rate must be positive, got {}", a),
            BsdeError::NoConvergence {
                iterations,
                last_step,
            } => write!(
                f,
                "no convergence after {} iterations (last step {:e})",
                iterations, last_step
            ),
            BsdeError::Chain(e) => write!(f, "{}", e),
        }
    }
}

impl core::error::Error for BsdeError {}

impl From<ChainError> for BsdeError {
    fn from(e: ChainError) -> Self {
        BsdeError::Chain(e)
    }
}

/// Real function on the states.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    values: Vec<f64>,
}

impl ValueTable {
    pub fn new(values: Vec<f64>) -> Self {
        ValueTable { values }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        ValueTable { values: vec![c; n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl Deref for ValueTable {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl From<Vec<f64>> for ValueTable {
    fn from(values: Vec<f64>) -> Self {
        ValueTable { values }
    }
}

fn kernel_at(kernels: &[TransitionMatrix], t: usize) -> &TransitionMatrix {
    if kernels.len() == 1 {
        &kernels[0]
    } else {
        &kernels[t]
    }
}

fn check_kernels(kernels: &[TransitionMatrix], horizon: usize, n: usize) -> Result<(), BsdeError> {
    if horizon == 0 {
        return Err(BsdeError::EmptyHorizon);
    }
    if kernels.len() != 1 && kernels.len() < horizon {
        return Err(BsdeError::KernelCount {
            expected: horizon,
            found: kernels.len(),
        });
    }
    for k in kernels {
        if k.n() != n {
            return Err(BsdeError::DimensionMismatch {
                expected: n,
                found: k.n(),
            });
        }
    }
    Ok(())
}

/// `Z` with `Zᵀ(e_i − Ax) = W(i)` for every `i` reachable from `x`;
/// unreachable components are 0.
pub fn martingale_represent(a: &TransitionMatrix, x: usize, w: &[f64]) -> Result<Vec<f64>, BsdeError> {
    let p = a.column(x);
    if w.len() != p.len() {
        return Err(BsdeError::DimensionMismatch {
            expected: p.len(),
            found: w.len(),
        });
    }
    let mean = linalg::dot(p, w);
    let scale = 1.0f64.max(linalg::sup_norm(w));
    if mean.abs() > MEAN_TOL * scale {
        return Err(BsdeError::NonZeroMean { mean });
    }
    Ok(p
        .iter()
        .zip(w)
        .map(|(&pi, &wi)| if pi > STRUCTURAL_ZERO { wi } else { 0.0 })
        .collect())
}

/// `Z` shifted so that its first component reachable from `x` is 0.
pub fn canonical_z(a: &TransitionMatrix, x: usize, z: &[f64]) -> Vec<f64> {
    let p = a.column(x);
    let shift = p
        .iter()
        .position(|&pi| pi > STRUCTURAL_ZERO)
        .map_or(0.0, |i| z[i]);
    z.iter()
        .zip(p)
        .map(|(&zi, &pi)| if pi > STRUCTURAL_ZERO { zi - shift } else { 0.0 })
        .collect()
}

/// Root of `y − f(y) = rhs` for increasing `y − f(y)`.
///
/// `y`-free drivers are solved exactly. Otherwise the bracket
/// `rhs ± (2|f(0)| + 1)` is widened until it changes sign, then bisected to
/// `1e-12` (relative to `1 + |y|`) with a final secant step inside the
/// bracket.
pub fn solve_y(f: impl Fn(f64) -> f64, rhs: f64, y_free: bool) -> Option<f64> {
    let f0 = f(0.0);
    if y_free {
        return Some(rhs + f0);
    }
    let g = |y: f64| y - f(y) - rhs;
    let mut width = 2.0 * f0.abs() + 1.0;
    let mut lo = rhs - width;
    let mut hi = rhs + width;
    let mut g_lo = g(lo);
    let mut g_hi = g(hi);
    let mut expansions = 0;
    while !(g_lo <= 0.0 && g_hi >= 0.0) {
        if expansions == ROOT_MAX_EXPANSIONS || !g_lo.is_finite() || !g_hi.is_finite() {
            return None;
        }
        width *= 2.0;
        if g_lo > 0.0 {
            lo = rhs - width;
            g_lo = g(lo);
        }
        if g_hi < 0.0 {
            hi = rhs + width;
            g_hi = g(hi);
        }
        expansions += 1;
    }
    for _ in 0..ROOT_MAX_ITER {
        if g_lo == 0.0 {
            return Some(lo);
        }
        if g_hi == 0.0 {
            return Some(hi);
        }
        let mid = 0.5 * (lo + hi);
        if hi - lo <= ROOT_TOL * (1.0 + mid.abs()) {
            break;
        }
        let g_mid = g(mid);
        if g_mid <= 0.0 {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
            g_hi = g_mid;
        }
    }
    if g_lo == 0.0 {
        return Some(lo);
    }
    if g_hi == 0.0 {
        return Some(hi);
    }
    let secant = lo - g_lo * (hi - lo) / (g_hi - g_lo);
    Some(if secant.is_finite() { secant.clamp(lo, hi) } else { 0.5 * (lo + hi) })
}

/// Samples `y ↦ y − f(path, y, z)` on seeded random inputs and reports the
/// first decrease found.
pub fn check_y_monotone<D: PathDriver + ?Sized>(
    driver: &D,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<(), BsdeError> {
    if !driver.depends_on_y() {
        return Ok(());
    }
    let n = driver.states();
    let mut rng = random::stream(seed, "y_monotone");
    for _ in 0..trials {
        let t = rng.gen_range(0..horizon.max(1));
        let path: Vec<usize> = (0..=t).map(|_| rng.gen_range(0..n)).collect();
        let z = random::uniform_vec(&mut rng, n, -2.0, 2.0);
        let y1 = 20.0 * (2.0 * rng.gen::<f64>() - 1.0);
        let y2 = y1 + 10.0 * rng.gen::<f64>() + 1e-6;
        let g1 = y1 - driver.eval_path(&path, y1, &z);
        let g2 = y2 - driver.eval_path(&path, y2, &z);
        if g2.partial_cmp(&g1) != Some(core::cmp::Ordering::Greater) {
            return Err(BsdeError::NotMonotoneInY {
                state: path[t],
                time: t,
            });
        }
    }
    Ok(())
}

/// Node of a [`PathTree`].
#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub state: usize,
    /// Index into the previous layer; `None` at time 0.
    pub parent: Option<usize>,
    /// Probability of the whole path under the initial law and kernels.
    pub prob: f64,
    /// Index range of the children in the next layer.
    pub children: core::ops::Range<usize>,
}

/// All positive-probability paths `(x₀, …, x_t)`, `t ≤ T`, layer by layer.
#[derive(Clone, Debug, PartialEq)]
pub struct PathTree {
    horizon: usize,
    layers: Vec<Vec<TreeNode>>,
}

impl PathTree {
    pub fn build(
        kernels: &[TransitionMatrix],
        nu: &Distribution,
        horizon: usize,
        cap: usize,
    ) -> Result<PathTree, BsdeError> {
        let n = nu.n();
        check_kernels(kernels, horizon, n)?;
        let root: Vec<TreeNode> = nu
            .weights()
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > STRUCTURAL_ZERO)
            .map(|(x, &w)| TreeNode {
                state: x,
                parent: None,
                prob: w,
                children: 0..0,
            })
            .collect();
        let mut total = root.len();
        let mut layers = vec![root];
        for t in 0..horizon {
            let a = kernel_at(kernels, t);
            let mut next = Vec::new();
            let layer = layers.last_mut().unwrap();
            for (idx, node) in layer.iter_mut().enumerate() {
                let start = next.len();
                for (i, &p) in a.column(node.state).iter().enumerate() {
                    if p > STRUCTURAL_ZERO {
                        next.push(TreeNode {
                            state: i,
                            parent: Some(idx),
                            prob: node.prob * p,
                            children: 0..0,
                        });
                    }
                }
                node.children = start..next.len();
                total += next.len() - start;
                if total > cap {
                    return Err(BsdeError::PathExplosion { cap });
                }
            }
            layers.push(next);
        }
        Ok(PathTree { horizon, layers })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn layer(&self, t: usize) -> &[TreeNode] {
        &self.layers[t]
    }

    pub fn node_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// States along the path ending at node `idx` of layer `t`.
    pub fn path(&self, t: usize, idx: usize) -> Vec<usize> {
        let mut out = vec![0; t + 1];
        let mut cur = idx;
        for s in (0..=t).rev() {
            let node = &self.layers[s][cur];
            out[s] = node.state;
            if let Some(p) = node.parent {
                cur = p;
            }
        }
        out
    }
}

/// Solution on a [`PathTree`]: `y[t][k]` at node `k` of layer `t` and, for
/// `t < T`, the integrand `z[t][k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BsdeSolution {
    pub tree: PathTree,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<Vec<f64>>>,
}

impl BsdeSolution {
    /// Terminal values `ξ` as evaluated on the tree.
    pub fn terminal(&self) -> &[f64] {
        &self.y[self.tree.horizon]
    }

    /// Largest violation of `Y_{t+1} = Y_t − f(t, Y_t, Z_t) + Z_tᵀM_{t+1}`
    /// over all tree edges.
    pub fn one_step_residual<D: PathDriver + ?Sized>(
        &self,
        kernels: &[TransitionMatrix],
        driver: &D,
    ) -> f64 {
        let mut worst: f64 = 0.0;
        for t in 0..self.tree.horizon {
            let a = kernel_at(kernels, t);
            for (k, node) in self.tree.layer(t).iter().enumerate() {
                let path = self.tree.path(t, k);
                let yt = self.y[t][k];
                let z = &self.z[t][k];
                let f = driver.eval_path(&path, yt, z);
                let mean_z = linalg::dot(z, a.column(node.state));
                for c in node.children.clone() {
                    let child = &self.tree.layer(t + 1)[c];
                    let m = z[child.state] - mean_z;
                    let r = self.y[t + 1][c] - (yt - f + m);
                    worst = worst.max(r.abs());
                }
            }
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiniteHorizonOptions {
    pub node_cap: usize,
    /// Samples for the monotonicity check of y-dependent drivers.
    pub monotone_samples: usize,
    pub seed: u64,
}

impl Default for FiniteHorizonOptions {
    fn default() -> Self {
        FiniteHorizonOptions {
            node_cap: DEFAULT_NODE_CAP,
            monotone_samples: 256,
            seed: 0,
        }
    }
}

/// Backward induction on the path tree. `kernels` holds either one kernel
/// or one per step; `terminal` maps a full path `(x₀, …, x_T)` to `ξ`.
pub fn solve_finite_horizon<D: PathDriver + ?Sized>(
    kernels: &[TransitionMatrix],
    nu: &Distribution,
    driver: &D,
    terminal: &dyn Fn(&[usize]) -> f64,
    horizon: usize,
    options: &FiniteHorizonOptions,
) -> Result<BsdeSolution, BsdeError> {
    let n = nu.n();
    if driver.states() != n {
        return Err(BsdeError::DimensionMismatch {
            expected: n,
            found: driver.states(),
        });
    }
    check_y_monotone(driver, horizon, options.monotone_samples, options.seed)?;
    let tree = PathTree::build(kernels, nu, horizon, options.node_cap)?;
    let mut y: Vec<Vec<f64>> = vec![Vec::new(); horizon + 1];
    let mut z: Vec<Vec<Vec<f64>>> = vec![Vec::new(); horizon];
    y[horizon] = (0..tree.layer(horizon).len())
        .map(|k| terminal(&tree.path(horizon, k)))
        .collect();
    let y_free = !driver.depends_on_y();
    for t in (0..horizon).rev() {
        let a = kernel_at(kernels, t);
        let layer = tree.layer(t);
        let next_layer = tree.layer(t + 1);
        let mut yt = Vec::with_capacity(layer.len());
        let mut zt = Vec::with_capacity(layer.len());
        for (k, node) in layer.iter().enumerate() {
            let p = a.column(node.state);
            let mut next_y = vec![0.0; n];
            for c in node.children.clone() {
                next_y[next_layer[c].state] = y[t + 1][c];
            }
            let mean = linalg::dot(p, &next_y);
            let w: Vec<f64> = next_y.iter().map(|v| v - mean).collect();
            let zk = martingale_represent(a, node.state, &w)?;
            let path = tree.path(t, k);
            let root = solve_y(|v| driver.eval_path(&path, v, &zk), mean, y_free).ok_or(
                BsdeError::RootSolveFailure {
                    state: node.state,
                    time: t,
                },
            )?;
            yt.push(root);
            zt.push(zk);
        }
        y[t] = yt;
        z[t] = zt;
    }
    Ok(BsdeSolution { tree, y, z })
}

/// Markovian solution: `v[t]` for `t = 0..=T` and `z[t] = v[t+1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovianSolution {
    pub v: Vec<ValueTable>,
    pub z: Vec<ValueTable>,
}

/// `v(t, x) − f(x, t, v(t, x), v_{t+1}) − v_{t+1}ᵀA_t x = 0` backward from
/// `v(T, ·) = φ`.
pub fn solve_finite_horizon_markovian(
    kernels: &[TransitionMatrix],
    driver: &dyn Driver,
    phi: &[f64],
    horizon: usize,
) -> Result<MarkovianSolution, BsdeError> {
    let n = phi.len();
    if driver.states() != n {
        return Err(BsdeError::DimensionMismatch {
            expected: n,
            found: driver.states(),
        });
    }
    check_kernels(kernels, horizon, n)?;
    check_y_monotone(driver, horizon, 256, 0)?;
    let y_free = !driver.depends_on_y();
    let mut v = vec![ValueTable::new(Vec::new()); horizon + 1];
    v[horizon] = ValueTable::new(phi.to_vec());
    for t in (0..horizon).rev() {
        let a = kernel_at(kernels, t);
        let next = &v[t + 1];
        let mut cur = Vec::with_capacity(n);
        for x in 0..n {
            let rhs = a.expect_from(x, next);
            let root = solve_y(|y| driver.eval(x, t, y, next), rhs, y_free)
                .ok_or(BsdeError::RootSolveFailure { state: x, time: t })?;
            cur.push(root);
        }
        v[t] = ValueTable::new(cur);
    }
    let z = v[1..].to_vec();
    Ok(MarkovianSolution { v, z })
}

fn check_autonomous(a: &TransitionMatrix, driver: &dyn Driver) -> Result<f64, BsdeError> {
    if driver.states() != a.n() {
        return Err(BsdeError::DimensionMismatch {
            expected: a.n(),
            found: driver.states(),
        });
    }
    if driver.depends_on_y() || driver.depends_on_t() {
        return Err(BsdeError::NotAutonomous);
    }
    driver.zero_bound().ok_or(BsdeError::NoZeroBound)
}

/// `F(v)(x) = f(x, v) + (Aᵀv)(x)`.
pub(crate) fn bellman_map(a: &TransitionMatrix, driver: &dyn Driver, v: &[f64], out: &mut [f64]) {
    for (x, o) in out.iter_mut().enumerate() {
        *o = driver.eval(x, 0, 0.0, v) + a.expect_from(x, v);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscountedOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Starting point; zero when absent.
    pub initial: Option<Vec<f64>>,
    /// Keep `‖v_{k+1} − v_k‖_∞` for every step.
    pub record_steps: bool,
}

impl Default for DiscountedOptions {
    fn default() -> Self {
        DiscountedOptions {
            tol: DEFAULT_TOL,
            max_iter: 50_000_000,
            initial: None,
            record_steps: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscountedSolution {
    pub alpha: f64,
    pub v: ValueTable,
    pub bound_c: f64,
    pub iterations: usize,
    /// `‖(1 + α)v − f(v) − Aᵀv‖_∞` at the returned `v`.
    pub residual: f64,
    /// `C(1 + α)^{−k}/α`: distance of the `k`-step truncation from the
    /// limit. Only meaningful from a zero start.
    pub truncation_bound: Option<f64>,
    pub steps: Vec<f64>,
}

/// Unique bounded solution of `(1 + α)v = f(v) + Aᵀv` by fixed-point
/// iteration. From `v₀ = 0` the `k`-th iterate is the value at time 0 of the
/// equation truncated at horizon `k` with zero terminal value.
pub fn solve_discounted(
    a: &TransitionMatrix,
    driver: &dyn Driver,
    alpha: f64,
    options: &DiscountedOptions,
) -> Result<DiscountedSolution, BsdeError> {
    let c = check_autonomous(a, driver)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(BsdeError::InvalidDiscount(alpha));
    }
    let n = a.n();
    let mut v = match &options.initial {
        Some(init) if init.len() != n => {
            return Err(BsdeError::DimensionMismatch {
                expected: n,
                found: init.len(),
            })
        }
        Some(init) => init.clone(),
        None => vec![0.0; n],
    };
    let threshold = options.tol * alpha / (1.0 + alpha);
    let inv = 1.0 / (1.0 + alpha);
    let mut next = vec![0.0; n];
    let mut steps = Vec::new();
    let mut iterations = 0;
    let mut last_step = f64::INFINITY;
    while iterations < options.max_iter {
        bellman_map(a, driver, &v, &mut next);
        next.iter_mut().for_each(|x| *x *= inv);
        last_step = linalg::max_abs_diff(&next, &v);
        core::mem::swap(&mut v, &mut next);
        iterations += 1;
        if options.record_steps {
            steps.push(last_step);
        }
        if last_step <= threshold {
            break;
        }
    }
    if last_step > threshold {
        return Err(BsdeError::NoConvergence {
            iterations,
            last_step,
        });
    }
    bellman_map(a, driver, &v, &mut next);
    let residual = v
        .iter()
        .zip(&next)
        .map(|(vi, fi)| ((1.0 + alpha) * vi - fi).abs())
        .fold(0.0, f64::max);
    let truncation_bound = options
        .initial
        .is_none()
        .then(|| c * libm::pow(1.0 + alpha, -(iterations as f64)) / alpha);
    Ok(DiscountedSolution {
        alpha,
        v: ValueTable::new(v),
        bound_c: c,
        iterations,
        residual,
        truncation_bound,
        steps,
    })
}

/// Discounted solution written as `v^α = w + (λ_α/α)·1` with `w(x₀) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelativeSolution {
    pub alpha: f64,
    pub anchor: usize,
    pub w: ValueTable,
    /// `λ_α = α v^α(x₀)`.
    pub level: f64,
    pub iterations: usize,
    /// Estimated contraction rate of the last steps.
    pub rate: f64,
}

impl RelativeSolution {
    pub fn full_value(&self) -> Vec<f64> {
        let c = self.level / self.alpha;
        self.w.iter().map(|w| w + c).collect()
    }
}

/// Relative form of [`solve_discounted`]. Because `f` ignores constant shifts
/// of `z` and `Aᵀ1 = 1`, writing `v = w + c·1` with `w(x₀) = 0` turns the
/// equation into
///
/// ```text
/// (1 + α) w = F(w) − F(w)(x₀)·1,   α c = F(w)(x₀),
/// ```
///
/// with `F(w) = f(·, w) + Aᵀw`. The iteration on `w` contracts at the mixing
/// rate of the chain rather than at `1/(1 + α)`, so it stays cheap as
/// `α → 0`. The stopping rule estimates the rate `r` from recent steps and
/// stops once `r/(1 − r)` times the last step is below `tol`.
pub fn solve_discounted_relative(
    a: &TransitionMatrix,
    driver: &dyn Driver,
    alpha: f64,
    anchor: usize,
    tol: f64,
    initial: Option<&[f64]>,
    max_iter: usize,
) -> Result<RelativeSolution, BsdeError> {
    check_autonomous(a, driver)?;
    a.check_state(anchor)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(BsdeError::InvalidDiscount(alpha));
    }
    let n = a.n();
    let mut w = match initial {
        Some(init) if init.len() != n => {
            return Err(BsdeError::DimensionMismatch {
                expected: n,
                found: init.len(),
            })
        }
        Some(init) => {
            let shift = init[anchor];
            init.iter().map(|v| v - shift).collect()
        }
        None => vec![0.0; n],
    };
    let inv = 1.0 / (1.0 + alpha);
    let mut next = vec![0.0; n];
    let mut recent = [1.0f64; 8];
    let mut prev_step = f64::NAN;
    let mut iterations = 0;
    let rate = loop {
        if iterations == max_iter {
            return Err(BsdeError::NoConvergence {
                iterations,
                last_step: prev_step,
            });
        }
        bellman_map(a, driver, &w, &mut next);
        let level = next[anchor];
        next.iter_mut().for_each(|x| *x = (*x - level) * inv);
        next[anchor] = 0.0;
        let step = linalg::max_abs_diff(&next, &w);
        core::mem::swap(&mut w, &mut next);
        iterations += 1;
        if step == 0.0 {
            break 0.0;
        }
        // at rounding level the step ratios are noise
        let scale = w.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        if step <= ROUNDING_FLOOR * scale {
            break recent.iter().copied().fold(0.0, f64::max);
        }
        if prev_step > 0.0 {
            recent[iterations % recent.len()] = step / prev_step;
        }
        prev_step = step;
        if iterations > recent.len() {
            let rate = recent.iter().copied().fold(0.0, f64::max);
            if rate < 1.0 && step * rate / (1.0 - rate) <= tol {
                break rate;
            }
        }
    };
    bellman_map(a, driver, &w, &mut next);
    let level = next[anchor];
    Ok(RelativeSolution {
        alpha,
        anchor,
        w: ValueTable::new(w),
        level,
        iterations,
        rate,
    })
}
