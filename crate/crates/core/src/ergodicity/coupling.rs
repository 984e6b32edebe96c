//! Monte Carlo cross-checks of the coupling bounds.

use alloc::vec;
use alloc::vec::Vec;

use super::split::SplitKernel;
use crate::chain::TransitionMatrix;
use crate::random::{self, ColumnSampler, StreamRng};

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

#[derive(Clone, Copy, Default)]
struct Accumulator {
    sum: f64,
    sum_sq: f64,
    count: usize,
}

impl Accumulator {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.sum_sq += v * v;
        self.count += 1;
    }

    fn estimate(&self) -> Estimate {
        if self.count == 0 {
            return Estimate::default();
        }
        let n = self.count as f64;
        let mean = self.sum / n;
        let var = if self.count > 1 {
            ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            stderr: libm::sqrt(var / n),
            count: self.count,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingOptions {
    /// Exponent for the estimate of `E[e^{βŠ}]`.
    pub beta: f64,
    pub runs: usize,
    pub seed: u64,
    /// `q_γ` of `A`, for the bound on the law of `K_Ť`.
    pub q_gamma: f64,
    /// `1 + ε`, the target of the MGF estimate.
    pub mgf_bound: f64,
    pub max_steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KBin {
    pub k: usize,
    pub count: usize,
    pub frequency: f64,
    pub stderr: f64,
    /// `γ²(1 − q_γ)^{k−1}`.
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingReport {
    pub runs: usize,
    /// Runs that hit `max_steps` before `Ť`.
    pub truncated: usize,
    /// `E[e^{βŠ}]` with start pairs cycled over all split pairs.
    pub mgf: Estimate,
    /// Start pair (split indices) with the largest estimate.
    pub worst_start: (usize, usize),
    pub worst_start_mgf: Estimate,
    pub mgf_pass: bool,
    /// Runs with `Š > Ť`.
    pub s_after_t: usize,
    pub k_histogram: Vec<KBin>,
    pub k_pass: bool,
    /// Largest `F_geom(k) − F̂(k) − 3σ` for `t₁` from starts not both in the
    /// upper layer, where `t₁ ∼ Geom(γ²)` exactly.
    pub t1_lower_start_deficit: f64,
    pub t1_pass: bool,
    /// `t₁` from joint upper-layer starts, distributed as `Q₁ + Q₂`.
    pub gap: Estimate,
    pub gap_expected: f64,
    pub gap_pass: bool,
}

impl CouplingReport {
    pub fn pass(&self) -> bool {
        self.mgf_pass && self.k_pass && self.t1_pass && self.gap_pass && self.s_after_t == 0
    }
}

struct Trace {
    s: Option<usize>,
    t: Option<usize>,
    k_at_t: usize,
    t1: Option<usize>,
}

fn run_split(
    sampler: &ColumnSampler,
    n: usize,
    start: (usize, usize),
    max_steps: usize,
    need_t1: bool,
    rng: &mut StreamRng,
) -> Trace {
    let (mut x, mut y) = start;
    let upper = |s: usize| s >= n;
    let mut trace = Trace {
        s: if x == y { Some(0) } else { None },
        t: None,
        k_at_t: 0,
        t1: None,
    };
    let mut k = 0;
    let mut both_upper = upper(x) && upper(y);
    for t in 1..=max_steps {
        x = sampler.step(x, rng);
        y = sampler.step(y, rng);
        let now_upper = upper(x) && upper(y);
        if now_upper && !both_upper {
            k += 1;
            if trace.t1.is_none() {
                trace.t1 = Some(t);
            }
        }
        if trace.s.is_none() && x == y {
            trace.s = Some(t);
        }
        if trace.t.is_none() && x == y && now_upper && both_upper {
            trace.t = Some(t);
            trace.k_at_t = k;
        }
        both_upper = now_upper;
        if trace.t.is_some() && (!need_t1 || trace.t1.is_some()) {
            break;
        }
    }
    trace
}

/// Simulates pairs of independent split chains, start pairs cycled over all
/// `(2N)²` ordered split pairs, one RNG stream per run.
pub fn simulate_coupling(kernel: &SplitKernel, options: &CouplingOptions) -> CouplingReport {
    let n = kernel.n();
    let m = 2 * n;
    let gamma = kernel.gamma;
    let g2 = gamma * gamma;
    let sampler = ColumnSampler::new(&kernel.big_b);
    let mut per_start = vec![Accumulator::default(); m * m];
    let mut overall = Accumulator::default();
    let mut truncated = 0;
    let mut s_after_t = 0;
    let mut k_counts: Vec<usize> = Vec::new();
    let mut completed = 0usize;
    let mut t1_lower: Vec<usize> = Vec::new();
    let mut gap = Accumulator::default();
    for run in 0..options.runs {
        let pair = run % (m * m);
        let start = (pair / m, pair % m);
        let joint_upper = start.0 >= n && start.1 >= n;
        let mut rng = random::indexed_stream(options.seed, "simulate_coupling", run as u64);
        let trace = run_split(&sampler, n, start, options.max_steps, joint_upper, &mut rng);
        match trace.s {
            Some(s) => {
                let v = libm::exp(options.beta * s as f64);
                per_start[pair].push(v);
                overall.push(v);
            }
            None => truncated += 1,
        }
        match trace.t {
            Some(t) => {
                completed += 1;
                if trace.s.is_none_or(|s| s > t) {
                    s_after_t += 1;
                }
                if k_counts.len() <= trace.k_at_t {
                    k_counts.resize(trace.k_at_t + 1, 0);
                }
                k_counts[trace.k_at_t] += 1;
            }
            None => {
                if trace.s.is_some() {
                    truncated += 1;
                }
            }
        }
        if let Some(t1) = trace.t1 {
            if joint_upper {
                gap.push(t1 as f64);
            } else {
                t1_lower.push(t1);
            }
        }
    }

    let (mut worst_start, mut worst_est) = ((0, 0), Estimate::default());
    let mut mgf_pass = true;
    for (pair, acc) in per_start.iter().enumerate() {
        let est = acc.estimate();
        if est.count == 0 {
            continue;
        }
        if est.mean - 3.0 * est.stderr > options.mgf_bound {
            mgf_pass = false;
        }
        if est.mean > worst_est.mean {
            worst_est = est;
            worst_start = (pair / m, pair % m);
        }
    }
    let mgf = overall.estimate();
    if mgf.mean - 3.0 * mgf.stderr > options.mgf_bound {
        mgf_pass = false;
    }

    let total = completed.max(1) as f64;
    let mut k_pass = true;
    let k_histogram: Vec<KBin> = k_counts
        .iter()
        .enumerate()
        .map(|(k, &count)| {
            let frequency = count as f64 / total;
            let stderr = libm::sqrt(frequency * (1.0 - frequency) / total);
            let bound = g2 * libm::pow(1.0 - options.q_gamma, k as f64 - 1.0);
            if frequency > bound + 3.0 * stderr {
                k_pass = false;
            }
            KBin {
                k,
                count,
                frequency,
                stderr,
                bound,
            }
        })
        .collect();

    let mut t1_deficit = f64::NEG_INFINITY;
    if !t1_lower.is_empty() {
        let total = t1_lower.len() as f64;
        let max_t = *t1_lower.iter().max().unwrap();
        let mut counts = vec![0usize; max_t + 1];
        for &t in &t1_lower {
            counts[t] += 1;
        }
        let mut cum = 0usize;
        for (k, &c) in counts.iter().enumerate().skip(1) {
            cum += c;
            let emp = cum as f64 / total;
            let exact = 1.0 - libm::pow(1.0 - g2, k as f64);
            let sigma = libm::sqrt(exact * (1.0 - exact) / total);
            t1_deficit = t1_deficit.max(exact - emp - 3.0 * sigma);
        }
    }
    let gap_est = gap.estimate();
    let gap_expected = 1.0 / (1.0 - g2) + 1.0 / g2;
    CouplingReport {
        runs: options.runs,
        truncated,
        mgf,
        worst_start,
        worst_start_mgf: worst_est,
        mgf_pass,
        s_after_t,
        k_histogram,
        k_pass,
        t1_lower_start_deficit: t1_deficit,
        t1_pass: t1_deficit <= 0.0,
        gap: gap_est,
        gap_expected,
        gap_pass: gap_est.count == 0 || (gap_est.mean - gap_expected).abs() <= 3.0 * gap_est.stderr,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeetingReport {
    pub runs: usize,
    pub truncated: usize,
    pub overall: Estimate,
    pub worst_start: (usize, usize),
    pub worst: Estimate,
}

/// `E_{xy}[e^{βT}]` for `T = inf{t ≥ 0 : X_t = Y_t}` of two independent
/// `B`-chains, start pairs cycled over all ordered pairs.
pub fn simulate_meeting_unsplit(
    b: &TransitionMatrix,
    beta: f64,
    runs: usize,
    seed: u64,
    max_steps: usize,
) -> MeetingReport {
    let n = b.n();
    let sampler = ColumnSampler::new(b);
    let mut per_start = vec![Accumulator::default(); n * n];
    let mut overall = Accumulator::default();
    let mut truncated = 0;
    for run in 0..runs {
        let pair = run % (n * n);
        let (mut x, mut y) = (pair / n, pair % n);
        let mut rng = random::indexed_stream(seed, "simulate_meeting", run as u64);
        let mut met = if x == y { Some(0) } else { None };
        let mut t = 0;
        while met.is_none() && t < max_steps {
            t += 1;
            x = sampler.step(x, &mut rng);
            y = sampler.step(y, &mut rng);
            if x == y {
                met = Some(t);
            }
        }
        match met {
            Some(t) => {
                let v = libm::exp(beta * t as f64);
                per_start[pair].push(v);
                overall.push(v);
            }
            None => truncated += 1,
        }
    }
    let (mut worst_start, mut worst) = ((0, 0), Estimate::default());
    for (pair, acc) in per_start.iter().enumerate() {
        let est = acc.estimate();
        if est.count > 0 && est.mean > worst.mean {
            worst = est;
            worst_start = (pair / n, pair % n);
        }
    }
    MeetingReport {
        runs,
        truncated,
        overall: overall.estimate(),
        worst_start,
        worst,
    }
}
