//! Drivers `f(x, t, y, z)` and their γ-balanced certificates.
//!
//! A certified driver exposes a ψ-field: for every state `x` and pair
//! `z, z′` a probability vector `ψ` with
//!
//! * `f(x, z) − f(x, z′) = (z − z′)ᵀ(ψ − Ax)`,
//! * `ψ_i / (Ax)_i ∈ [γ, 1/γ]` (with `0/0 = 1`),
//! * `Σ ψ_i = 1`.
//!
//! Linear drivers use the constant field `ψ = Ψx`. Hamiltonian drivers (a
//! pointwise minimum of linear drivers) interpolate between the extreme
//! members in the direction `z − z′`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::chain::{self, ChainError, TransitionMatrix};
use crate::control::ControlModel;
use crate::linalg;
use crate::random;

/// Denominators below this trigger `μ = 1/2` in the Hamiltonian ψ-field.
pub const MU_DEGENERATE: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriverKind {
    Linear,
    Hamiltonian,
    Discounted,
    Shifted,
    Custom,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DriverError {
    NotGammaEquivalent,
    InvalidGamma(f64),
    EmptyActionSet,
    NoCertificate,
    NonFinite,
    DimensionMismatch { expected: usize, found: usize },
    Chain(ChainError),
}

impl fmt::Display for DriverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriverError::NotGammaEquivalent => {
                write!(f, "psi matrix is not gamma-equivalent to the reference kernel")
            }
            DriverError::InvalidGamma(g) => write!(f, "gamma must lie in (0, 1], got {}", g),
            DriverError::EmptyActionSet => write!(f, "action set is empty"),
            DriverError::NoCertificate => write!(f, "driver carries no gamma-balanced certificate"),
            DriverError::NonFinite => write!(f, "driver data contains a non-finite value"),
            DriverError::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {}, found {}", expected, found)
            }
            DriverError::Chain(e) => write!(f, "{}", e),
        }
    }
}

impl core::error::Error for DriverError {}

impl From<ChainError> for DriverError {
    fn from(e: ChainError) -> Self {
        DriverError::Chain(e)
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<(), DriverError> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(DriverError::InvalidGamma(gamma))
    }
}

/// Markovian driver `f(x, t, y, z)` on `n` states.
///
/// Certified drivers (those returning `Some` from [`Driver::gamma`]) must be
/// y-free and time-free and must implement [`Driver::psi`].
pub trait Driver {
    fn states(&self) -> usize;

    fn kind(&self) -> DriverKind;

    fn eval(&self, x: usize, t: usize, y: f64, z: &[f64]) -> f64;

    /// `C` with `|f(x, t, 0, 0)| ≤ C`, if known.
    fn zero_bound(&self) -> Option<f64>;

    fn gamma(&self) -> Option<f64> {
        None
    }

    /// Lipschitz constant in `z` with respect to the seminorm.
    fn lipschitz(&self) -> Option<f64> {
        self.gamma().map(|g| 1.0 / g)
    }

    /// Reference kernel `A` the ψ-field is measured against.
    fn reference(&self) -> Option<&TransitionMatrix> {
        None
    }

    fn psi(&self, _x: usize, _z: &[f64], _z_prime: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn depends_on_y(&self) -> bool {
        true
    }

    fn depends_on_t(&self) -> bool {
        true
    }
}

/// Driver that may depend on the whole path `(x₀, …, x_t)`.
pub trait PathDriver {
    fn states(&self) -> usize;
    /// `path` is nonempty; `t = path.len() − 1`.
    fn eval_path(&self, path: &[usize], y: f64, z: &[f64]) -> f64;
    fn depends_on_y(&self) -> bool {
        true
    }
}

impl<D: Driver + ?Sized> PathDriver for D {
    fn states(&self) -> usize {
        Driver::states(self)
    }

    fn eval_path(&self, path: &[usize], y: f64, z: &[f64]) -> f64 {
        self.eval(path[path.len() - 1], path.len() - 1, y, z)
    }

    fn depends_on_y(&self) -> bool {
        Driver::depends_on_y(self)
    }
}

/// `f(x, z) = c(x) + zᵀ(Ψ − A)x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearDriver {
    a: TransitionMatrix,
    psi: TransitionMatrix,
    c: Vec<f64>,
    gamma: f64,
}

impl LinearDriver {
    pub fn base(&self) -> &TransitionMatrix {
        &self.a
    }

    pub fn psi_matrix(&self) -> &TransitionMatrix {
        &self.psi
    }

    pub fn offset(&self) -> &[f64] {
        &self.c
    }
}

pub fn make_linear_driver(
    a: TransitionMatrix,
    psi: TransitionMatrix,
    c: Vec<f64>,
    gamma: f64,
) -> Result<LinearDriver, DriverError> {
    check_gamma(gamma)?;
    if c.len() != a.n() {
        return Err(DriverError::DimensionMismatch {
            expected: a.n(),
            found: c.len(),
        });
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(DriverError::NonFinite);
    }
    if !chain::is_gamma_equivalent(&a, &psi, gamma)? {
        return Err(DriverError::NotGammaEquivalent);
    }
    Ok(LinearDriver { a, psi, c, gamma })
}

impl Driver for LinearDriver {
    fn states(&self) -> usize {
        self.a.n()
    }

    fn kind(&self) -> DriverKind {
        DriverKind::Linear
    }

    fn eval(&self, x: usize, _t: usize, _y: f64, z: &[f64]) -> f64 {
        let tilt: f64 = self
            .psi
            .column(x)
            .iter()
            .zip(self.a.column(x))
            .zip(z)
            .map(|((p, a), zi)| zi * (p - a))
            .sum();
        self.c[x] + tilt
    }

    fn zero_bound(&self) -> Option<f64> {
        Some(linalg::sup_norm(&self.c))
    }

    fn gamma(&self) -> Option<f64> {
        Some(self.gamma)
    }

    fn reference(&self) -> Option<&TransitionMatrix> {
        Some(&self.a)
    }

    fn psi(&self, x: usize, _z: &[f64], _z_prime: &[f64]) -> Option<Vec<f64>> {
        Some(self.psi.column(x).to_vec())
    }

    fn depends_on_y(&self) -> bool {
        false
    }

    fn depends_on_t(&self) -> bool {
        false
    }
}

/// `f(x, z) = min_u { L(x, u) + zᵀ(B^u − A)x }` over a [`ControlModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianDriver {
    model: ControlModel,
}

pub fn hamiltonian_driver(model: ControlModel) -> Result<HamiltonianDriver, DriverError> {
    if model.num_actions() == 0 {
        return Err(DriverError::EmptyActionSet);
    }
    Ok(HamiltonianDriver { model })
}

/// Pointwise minimum of a family of linear drivers sharing `A` and `γ`.
pub fn inf_of_linear(family: &[LinearDriver]) -> Result<HamiltonianDriver, DriverError> {
    let first = family.first().ok_or(DriverError::EmptyActionSet)?;
    let mut kernels = Vec::with_capacity(family.len());
    let mut cost = Vec::with_capacity(family.len());
    let mut names = Vec::with_capacity(family.len());
    for (k, d) in family.iter().enumerate() {
        if d.a != first.a || d.gamma != first.gamma {
            return Err(DriverError::NotGammaEquivalent);
        }
        kernels.push(d.psi.clone());
        cost.push(d.c.clone());
        names.push(alloc::format!("f{}", k + 1));
    }
    let model = ControlModel::new(first.a.clone(), first.gamma, names, kernels, cost)
        .map_err(|_| DriverError::NotGammaEquivalent)?;
    hamiltonian_driver(model)
}

impl HamiltonianDriver {
    pub fn model(&self) -> &ControlModel {
        &self.model
    }

    fn term(&self, u: usize, x: usize, z: &[f64]) -> f64 {
        let b = self.model.kernel(u).column(x);
        let a = self.model.reference().column(x);
        let tilt: f64 = b.iter().zip(a).zip(z).map(|((bi, ai), zi)| zi * (bi - ai)).sum();
        self.model.cost(u, x) + tilt
    }

    /// Hamiltonian value and its minimiser (lowest index on ties).
    pub fn value_and_argmin(&self, x: usize, z: &[f64]) -> (f64, usize) {
        let mut best = (self.term(0, x, z), 0);
        for u in 1..self.model.num_actions() {
            let v = self.term(u, x, z);
            if v < best.0 {
                best = (v, u);
            }
        }
        best
    }

    pub fn argmin(&self, x: usize, z: &[f64]) -> usize {
        self.value_and_argmin(x, z).1
    }
}

impl Driver for HamiltonianDriver {
    fn states(&self) -> usize {
        self.model.n()
    }

    fn kind(&self) -> DriverKind {
        DriverKind::Hamiltonian
    }

    fn eval(&self, x: usize, _t: usize, _y: f64, z: &[f64]) -> f64 {
        self.value_and_argmin(x, z).0
    }

    fn zero_bound(&self) -> Option<f64> {
        let n = self.model.n();
        let c = (0..n)
            .map(|x| {
                (0..self.model.num_actions())
                    .map(|u| self.model.cost(u, x))
                    .fold(f64::INFINITY, f64::min)
                    .abs()
            })
            .fold(0.0, f64::max);
        Some(c)
    }

    fn gamma(&self) -> Option<f64> {
        Some(self.model.gamma())
    }

    fn reference(&self) -> Option<&TransitionMatrix> {
        Some(self.model.reference())
    }

    fn psi(&self, x: usize, z: &[f64], z_prime: &[f64]) -> Option<Vec<f64>> {
        let (fz, u_star) = self.value_and_argmin(x, z);
        let d: Vec<f64> = z.iter().zip(z_prime).map(|(a, b)| a - b).collect();
        if d.iter().all(|&v| v == 0.0) {
            return Some(self.model.kernel(u_star).column(x).to_vec());
        }
        let fzp = self.value_and_argmin(x, z_prime).0;
        let m = self.model.num_actions();
        let tilt = |u: usize| linalg::dot(&d, self.model.kernel(u).column(x));
        let (mut lo, mut hi) = (0usize, 0usize);
        let (mut lo_v, mut hi_v) = (tilt(0), tilt(0));
        for u in 1..m {
            let v = tilt(u);
            if v < lo_v {
                lo = u;
                lo_v = v;
            }
            if v > hi_v {
                hi = u;
                hi_v = v;
            }
        }
        let target = fz - fzp + linalg::dot(&d, self.model.reference().column(x));
        let denom = hi_v - lo_v;
        let mu = if denom.abs() < MU_DEGENERATE {
            0.5
        } else {
            ((hi_v - target) / denom).clamp(0.0, 1.0)
        };
        let psi_lo = self.model.kernel(lo).column(x);
        let psi_hi = self.model.kernel(hi).column(x);
        Some(
            psi_lo
                .iter()
                .zip(psi_hi)
                .map(|(l, h)| mu * l + (1.0 - mu) * h)
                .collect(),
        )
    }

    fn depends_on_y(&self) -> bool {
        false
    }

    fn depends_on_t(&self) -> bool {
        false
    }
}

/// `f(x, t, y, z) = g(x, t, 0, z) − α y`: the discounted form of a y-free
/// driver, for finite-horizon solves. Carries no certificate.
pub struct DiscountedDriver<'a> {
    inner: &'a dyn Driver,
    alpha: f64,
}

impl<'a> DiscountedDriver<'a> {
    pub fn new(inner: &'a dyn Driver, alpha: f64) -> Self {
        DiscountedDriver { inner, alpha }
    }
}

impl Driver for DiscountedDriver<'_> {
    fn states(&self) -> usize {
        self.inner.states()
    }

    fn kind(&self) -> DriverKind {
        DriverKind::Discounted
    }

    fn eval(&self, x: usize, t: usize, y: f64, z: &[f64]) -> f64 {
        self.inner.eval(x, t, 0.0, z) - self.alpha * y
    }

    fn zero_bound(&self) -> Option<f64> {
        self.inner.zero_bound()
    }

    fn lipschitz(&self) -> Option<f64> {
        self.inner.lipschitz()
    }

    fn depends_on_t(&self) -> bool {
        self.inner.depends_on_t()
    }
}

/// `f(x, z) + δ(x)`: keeps the ψ-field of the inner driver.
pub struct ShiftedDriver<'a> {
    inner: &'a dyn Driver,
    shift: Vec<f64>,
}

impl<'a> ShiftedDriver<'a> {
    pub fn new(inner: &'a dyn Driver, shift: Vec<f64>) -> Result<Self, DriverError> {
        if shift.len() != inner.states() {
            return Err(DriverError::DimensionMismatch {
                expected: inner.states(),
                found: shift.len(),
            });
        }
        Ok(ShiftedDriver { inner, shift })
    }

    pub fn constant(inner: &'a dyn Driver, kappa: f64) -> Self {
        ShiftedDriver {
            shift: vec![kappa; inner.states()],
            inner,
        }
    }
}

impl Driver for ShiftedDriver<'_> {
    fn states(&self) -> usize {
        self.inner.states()
    }

    fn kind(&self) -> DriverKind {
        DriverKind::Shifted
    }

    fn eval(&self, x: usize, t: usize, y: f64, z: &[f64]) -> f64 {
        self.inner.eval(x, t, y, z) + self.shift[x]
    }

    fn zero_bound(&self) -> Option<f64> {
        self.inner
            .zero_bound()
            .map(|c| c + linalg::sup_norm(&self.shift))
    }

    fn gamma(&self) -> Option<f64> {
        self.inner.gamma()
    }

    fn lipschitz(&self) -> Option<f64> {
        self.inner.lipschitz()
    }

    fn reference(&self) -> Option<&TransitionMatrix> {
        self.inner.reference()
    }

    fn psi(&self, x: usize, z: &[f64], z_prime: &[f64]) -> Option<Vec<f64>> {
        self.inner.psi(x, z, z_prime)
    }

    fn depends_on_y(&self) -> bool {
        self.inner.depends_on_y()
    }

    fn depends_on_t(&self) -> bool {
        self.inner.depends_on_t()
    }
}

type EvalFn = dyn Fn(usize, usize, f64, &[f64]) -> f64;

/// Driver from a closure. The caller declares `C`; it is not checked.
pub struct CustomDriver {
    n: usize,
    f: Box<EvalFn>,
    zero_bound: Option<f64>,
    y_dependent: bool,
    t_dependent: bool,
}

impl CustomDriver {
    pub fn new(
        n: usize,
        zero_bound: Option<f64>,
        f: impl Fn(usize, usize, f64, &[f64]) -> f64 + 'static,
    ) -> Self {
        CustomDriver {
            n,
            f: Box::new(f),
            zero_bound,
            y_dependent: true,
            t_dependent: true,
        }
    }

    /// Declare that `f` ignores `y` and `t`, so the solvers may skip root
    /// finding and time indexing.
    pub fn time_homogeneous_y_free(mut self) -> Self {
        self.y_dependent = false;
        self.t_dependent = false;
        self
    }
}

impl Driver for CustomDriver {
    fn states(&self) -> usize {
        self.n
    }

    fn kind(&self) -> DriverKind {
        DriverKind::Custom
    }

    fn eval(&self, x: usize, t: usize, y: f64, z: &[f64]) -> f64 {
        (self.f)(x, t, y, z)
    }

    fn zero_bound(&self) -> Option<f64> {
        self.zero_bound
    }

    fn depends_on_y(&self) -> bool {
        self.y_dependent
    }

    fn depends_on_t(&self) -> bool {
        self.t_dependent
    }
}

/// ψ-vector of a certified driver at `x` for the pair `(z, z′)`.
pub fn psi_for(
    driver: &dyn Driver,
    x: usize,
    z: &[f64],
    z_prime: &[f64],
) -> Result<Vec<f64>, DriverError> {
    if driver.gamma().is_none() {
        return Err(DriverError::NoCertificate);
    }
    driver.psi(x, z, z_prime).ok_or(DriverError::NoCertificate)
}

/// `Ψ^{Z,Z′}`: column `x` is `ψ(x, Z, Z′)`. Validated γ-equivalent to `A`.
pub fn equivalent_measure_matrix(
    driver: &dyn Driver,
    z: &[f64],
    z_prime: &[f64],
) -> Result<TransitionMatrix, DriverError> {
    let gamma = driver.gamma().ok_or(DriverError::NoCertificate)?;
    let a = driver.reference().ok_or(DriverError::NoCertificate)?;
    let columns = (0..driver.states())
        .map(|x| psi_for(driver, x, z, z_prime))
        .collect::<Result<Vec<_>, _>>()?;
    let psi = TransitionMatrix::from_columns(columns)?;
    if !chain::is_gamma_equivalent(a, &psi, gamma)? {
        return Err(DriverError::NotGammaEquivalent);
    }
    Ok(psi)
}

/// Worst deviations from the three ψ-field conditions at one sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PsiDeviation {
    /// `|f(z) − f(z′) − (z − z′)ᵀ(ψ − Ax)|`.
    pub identity: f64,
    /// Distance of `ψ_i / (Ax)_i` outside `[γ, 1/γ]`, with `ψ_i` absolute
    /// where `(Ax)_i = 0`.
    pub ratio: f64,
    /// `|Σψ − 1|` together with any negative mass.
    pub mass: f64,
}

impl PsiDeviation {
    pub fn max(self, other: PsiDeviation) -> PsiDeviation {
        PsiDeviation {
            identity: self.identity.max(other.identity),
            ratio: self.ratio.max(other.ratio),
            mass: self.mass.max(other.mass),
        }
    }

    pub fn worst(&self) -> f64 {
        self.identity.max(self.ratio).max(self.mass)
    }
}

pub fn psi_deviation(
    driver: &dyn Driver,
    x: usize,
    z: &[f64],
    z_prime: &[f64],
) -> Result<PsiDeviation, DriverError> {
    let gamma = driver.gamma().ok_or(DriverError::NoCertificate)?;
    let a = driver.reference().ok_or(DriverError::NoCertificate)?;
    let psi = psi_for(driver, x, z, z_prime)?;
    let ax = a.column(x);
    let df = driver.eval(x, 0, 0.0, z) - driver.eval(x, 0, 0.0, z_prime);
    let rhs: f64 = z
        .iter()
        .zip(z_prime)
        .zip(psi.iter().zip(ax))
        .map(|((zi, zpi), (p, a))| (zi - zpi) * (p - a))
        .sum();
    let mut ratio: f64 = 0.0;
    let mut negative: f64 = 0.0;
    for (&p, &q) in psi.iter().zip(ax) {
        negative = negative.max(-p);
        if q > chain::STRUCTURAL_ZERO {
            let r = p / q;
            ratio = ratio.max(gamma - r).max(r - 1.0 / gamma);
        } else {
            ratio = ratio.max(p.abs());
        }
    }
    let sum: f64 = psi.iter().sum();
    Ok(PsiDeviation {
        identity: (df - rhs).abs(),
        ratio: ratio.max(0.0),
        mass: (sum - 1.0).abs().max(negative),
    })
}

/// Random `z` with entries in `[−scale, scale]`, sometimes with ties or
/// shifts of a base vector so that degenerate branches are exercised.
fn sample_pair<R: rand::Rng>(rng: &mut R, n: usize, scale: f64) -> (Vec<f64>, Vec<f64>) {
    let z = random::uniform_vec(rng, n, -scale, scale);
    let kind = rng.gen_range(0..8u32);
    let z_prime = match kind {
        0 => z.clone(),
        1 => {
            let c = scale * (2.0 * rng.gen::<f64>() - 1.0);
            z.iter().map(|v| v + c).collect()
        }
        2 => vec![0.0; n],
        3 => {
            let mut w = z.clone();
            let i = rng.gen_range(0..n);
            w[i] += scale * (2.0 * rng.gen::<f64>() - 1.0);
            w
        }
        _ => random::uniform_vec(rng, n, -scale, scale),
    };
    (z, z_prime)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsiAudit {
    pub samples: usize,
    pub worst: PsiDeviation,
    pub pass: bool,
}

/// Checks the ψ-field conditions on `trials` seeded samples, tolerance `tol`.
pub fn psi_audit(
    driver: &dyn Driver,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<PsiAudit, DriverError> {
    let n = driver.states();
    let mut rng = random::stream(seed, "psi_audit");
    let mut worst = PsiDeviation::default();
    for _ in 0..trials {
        let x = rand::Rng::gen_range(&mut rng, 0..n);
        let scale = [0.1, 1.0, 10.0][rand::Rng::gen_range(&mut rng, 0..3)];
        let (z, zp) = sample_pair(&mut rng, n, scale);
        worst = worst.max(psi_deviation(driver, x, &z, &zp)?);
    }
    Ok(PsiAudit {
        samples: trials,
        worst,
        pass: worst.worst() <= tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzReport {
    pub max_ratio: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Sampled `|f(x,z) − f(x,z′)| / ‖z − z′‖_M` against `1/γ`.
pub fn lipschitz_check(
    driver: &dyn Driver,
    trials: usize,
    seed: u64,
) -> Result<LipschitzReport, DriverError> {
    let gamma = driver.gamma().ok_or(DriverError::NoCertificate)?;
    let a = driver.reference().ok_or(DriverError::NoCertificate)?;
    let n = driver.states();
    let mut rng = random::stream(seed, "lipschitz_check");
    let mut max_ratio: f64 = 0.0;
    for _ in 0..trials {
        let x = rand::Rng::gen_range(&mut rng, 0..n);
        let (z, zp) = sample_pair(&mut rng, n, 1.0);
        let d: Vec<f64> = z.iter().zip(&zp).map(|(a, b)| a - b).collect();
        let norm = chain::seminorm(a, x, &d);
        if norm < 1e-10 {
            continue;
        }
        let df = (driver.eval(x, 0, 0.0, &z) - driver.eval(x, 0, 0.0, &zp)).abs();
        max_ratio = max_ratio.max(df / norm);
    }
    let bound = 1.0 / gamma;
    Ok(LipschitzReport {
        max_ratio,
        bound,
        pass: max_ratio <= bound + 1e-8,
    })
}

/// Largest `|f(x, z) − f(x, z + c·1)|` over seeded samples.
pub fn shift_invariance_defect(driver: &dyn Driver, trials: usize, seed: u64) -> f64 {
    let n = driver.states();
    let mut rng = random::stream(seed, "shift_invariance");
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let x = rand::Rng::gen_range(&mut rng, 0..n);
        let z = random::uniform_vec(&mut rng, n, -3.0, 3.0);
        let c = 10.0 * (2.0 * rand::Rng::gen::<f64>(&mut rng) - 1.0);
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        worst = worst.max((driver.eval(x, 0, 0.0, &z) - driver.eval(x, 0, 0.0, &shifted)).abs());
    }
    worst
}
