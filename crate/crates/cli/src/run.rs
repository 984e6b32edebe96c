use std::fs;
use std::path::Path;

use ebsde_core::bsde::{self, DiscountedOptions, FiniteHorizonOptions};
use ebsde_core::chain::{self, Distribution, TransitionMatrix};
use ebsde_core::control::{self, Policy};
use ebsde_core::ebsde::{self, EbsdeOptions};
use ebsde_core::ergodicity::{self, CouplingOptions};
use ebsde_core::{linalg, Driver};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::config::{
    CertifyArgs, Command, RunConfig, SimulateCouplingArgs, SolveBsdeArgs, SolveControlArgs,
    SolveDiscountedArgs, SolveEbsdeArgs, TreeMode,
};
use crate::error::CliError;
use crate::format::{
    ChainJson, ControlModelJson, DriverInput, DriverJson, MatrixJson, StateTable, TerminalJson,
};
use crate::report::Report;

/// Dispatches one command and builds its report.
pub fn run(config: &RunConfig) -> Result<Report, CliError> {
    let mut report = Report::new(config);
    match &config.command {
        Command::SolveBsde(args) => solve_bsde(args, &mut report)?,
        Command::SolveDiscounted(args) => solve_discounted(args, &mut report)?,
        Command::SolveEbsde(args) => solve_ebsde(args, &mut report)?,
        Command::Certify(args) => certify(args, config.seed, &mut report)?,
        Command::SolveControl(args) => solve_control(args, &mut report)?,
        Command::SimulateCoupling(args) => simulate_coupling(args, config.seed, &mut report)?,
    }
    Ok(report)
}

fn read_json<T: DeserializeOwned>(
    path: &Path,
    key: &str,
    report: &mut Report,
) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("cannot read {}: {}", path.display(), e)))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::parse(format!("{}: {}", path.display(), e)))?;
    let parsed = serde_json::from_value(value.clone())
        .map_err(|e| CliError::parse(format!("{}: {}", path.display(), e)))?;
    report.inputs.insert(key.to_string(), value);
    Ok(parsed)
}

fn compute<E: std::fmt::Display>(e: E) -> CliError {
    CliError::compute(e)
}

fn table(v: &[f64]) -> StateTable {
    StateTable::from(v)
}

fn one_based(states: &[usize]) -> Vec<usize> {
    states.iter().map(|s| s + 1).collect()
}

fn check_state(s: usize, n: usize, what: &str) -> Result<usize, CliError> {
    if s == 0 || s > n {
        return Err(CliError::validation(format!(
            "{} {} out of range 1..={}",
            what, s, n
        )));
    }
    Ok(s - 1)
}

fn load_driver(path: &Path, report: &mut Report) -> Result<DriverInput, CliError> {
    let d: DriverJson = read_json(path, "driver", report)?;
    d.to_driver().map_err(|e| e.context("driver"))
}

/// Chain from `--chain` or, when absent, the driver's reference kernel.
fn chain_for(
    path: Option<&Path>,
    driver: &dyn Driver,
    report: &mut Report,
) -> Result<TransitionMatrix, CliError> {
    let reference = driver.reference().cloned();
    let a = match path {
        Some(p) => {
            let c: ChainJson = read_json(p, "chain", report)?;
            c.to_homogeneous().map_err(|e| e.context("chain"))?
        }
        None => reference
            .clone()
            .ok_or_else(|| CliError::validation("driver has no reference kernel; pass --chain"))?,
    };
    if a.n() != driver.states() {
        return Err(CliError::validation(format!(
            "chain has {} states, driver has {}",
            a.n(),
            driver.states()
        )));
    }
    if let Some(r) = reference {
        let gap = r
            .columns()
            .zip(a.columns())
            .map(|(x, y)| linalg::max_abs_diff(x, y))
            .fold(0.0, f64::max);
        if gap > 1e-12 {
            return Err(CliError::validation(
                "chain differs from the driver's reference kernel",
            ));
        }
    }
    Ok(a)
}

#[derive(Serialize)]
struct TimeSlice {
    t: usize,
    v: StateTable,
}

#[derive(Serialize)]
struct TreeResult {
    nodes: usize,
    layer_sizes: Vec<usize>,
    /// `Y_0` per starting state.
    y0: StateTable,
}

#[derive(Serialize)]
struct BsdeResults {
    horizon: usize,
    kernels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    markovian: Option<Vec<TimeSlice>>,
    /// Canonical `Z_t` per state, first reachable component 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    z: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tree: Option<TreeResult>,
}

#[derive(Serialize)]
struct BsdeDiagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    tree_one_step_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tree_vs_markovian: Option<f64>,
}

fn solve_bsde(args: &SolveBsdeArgs, report: &mut Report) -> Result<(), CliError> {
    let chain: ChainJson = read_json(&args.model, "model", report)?;
    let chain = chain.to_chain().map_err(|e| e.context("model"))?;
    let driver = load_driver(&args.driver, report)?;
    let terminal: TerminalJson = read_json(&args.terminal, "terminal", report)?;
    let phi = terminal.values().to_vec();
    let d = driver.as_driver();
    let n = chain.kernels[0].n();
    if phi.len() != n || d.states() != n {
        return Err(CliError::validation(format!(
            "chain has {} states, driver {}, terminal {}",
            n,
            d.states(),
            phi.len()
        )));
    }
    if chain.kernels.len() != 1 && chain.kernels.len() < args.horizon {
        return Err(CliError::validation(format!(
            "{} kernels given for horizon {}",
            chain.kernels.len(),
            args.horizon
        )));
    }
    let mut results = BsdeResults {
        horizon: args.horizon,
        kernels: chain.kernels.len(),
        markovian: None,
        z: None,
        tree: None,
    };
    let mut diag = BsdeDiagnostics {
        tree_one_step_residual: None,
        max_tree_vs_markovian: None,
    };
    let kernel_at = |t: usize| &chain.kernels[if chain.kernels.len() == 1 { 0 } else { t }];

    let markov = match args.solver {
        TreeMode::Markovian | TreeMode::Both => Some(
            bsde::solve_finite_horizon_markovian(&chain.kernels, d, &phi, args.horizon)
                .map_err(compute)?,
        ),
        TreeMode::Tree => None,
    };
    if let Some(m) = &markov {
        results.markovian = Some(
            m.v.iter()
                .enumerate()
                .map(|(t, v)| TimeSlice { t, v: table(v) })
                .collect(),
        );
        results.z = Some(
            m.z.iter()
                .enumerate()
                .map(|(t, z)| (0..n).map(|x| bsde::canonical_z(kernel_at(t), x, z)).collect())
                .collect(),
        );
        report.line(format!(
            "markovian: v(0) = {:?}",
            m.v[0].values()
        ));
    }
    if matches!(args.solver, TreeMode::Tree | TreeMode::Both) {
        let nu = chain.initial.clone().unwrap_or_else(|| Distribution::uniform(n));
        let p = phi.clone();
        let terminal = move |path: &[usize]| p[*path.last().expect("non-empty path")];
        let options = FiniteHorizonOptions {
            node_cap: args.node_cap,
            ..FiniteHorizonOptions::default()
        };
        let sol = bsde::solve_finite_horizon(&chain.kernels, &nu, d, &terminal, args.horizon, &options)
            .map_err(compute)?;
        let mut y0 = vec![f64::NAN; n];
        for (k, node) in sol.tree.layer(0).iter().enumerate() {
            y0[node.state] = sol.y[0][k];
        }
        diag.tree_one_step_residual = Some(sol.one_step_residual(&chain.kernels, d));
        if let Some(m) = &markov {
            let mut worst: f64 = 0.0;
            for t in 0..=args.horizon {
                for (k, node) in sol.tree.layer(t).iter().enumerate() {
                    worst = worst.max((sol.y[t][k] - m.v[t][node.state]).abs());
                }
            }
            diag.max_tree_vs_markovian = Some(worst);
            report.line(format!("tree vs markovian: max |dY| = {:e}", worst));
        }
        report.line(format!("path tree: {} nodes", sol.tree.node_count()));
        results.tree = Some(TreeResult {
            nodes: sol.tree.node_count(),
            layer_sizes: (0..=args.horizon).map(|t| sol.tree.layer(t).len()).collect(),
            y0: StateTable(y0),
        });
    }
    report.results(&results);
    report.diagnostics(&diag);
    Ok(())
}

#[derive(Serialize)]
struct DiscountedResults {
    alpha: f64,
    v: StateTable,
    bound_c: f64,
    /// `C/α`.
    sup_bound: f64,
    sup_norm: f64,
}

#[derive(Serialize)]
struct DiscountedDiagnostics {
    iterations: usize,
    residual: f64,
    /// `C(1 + α)^{−k}/α` for the `k` iterations used.
    truncation_bound: Option<f64>,
    /// Distance to the solve started from `(C/α)·1`.
    uniqueness_gap: f64,
}

fn solve_discounted(args: &SolveDiscountedArgs, report: &mut Report) -> Result<(), CliError> {
    let driver = load_driver(&args.driver, report)?;
    let d = driver.as_driver();
    let a = chain_for(args.chain.as_deref(), d, report)?;
    let options = DiscountedOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        ..DiscountedOptions::default()
    };
    let sol = bsde::solve_discounted(&a, d, args.alpha, &options).map_err(compute)?;
    let start = vec![sol.bound_c / args.alpha; a.n()];
    let other = bsde::solve_discounted(
        &a,
        d,
        args.alpha,
        &DiscountedOptions {
            initial: Some(start),
            ..options
        },
    )
    .map_err(compute)?;
    let sup_norm = linalg::sup_norm(&sol.v);
    report.line(format!(
        "alpha = {}: sup|v| = {} (bound C/alpha = {}), {} iterations",
        args.alpha,
        sup_norm,
        sol.bound_c / args.alpha,
        sol.iterations
    ));
    report.results(&DiscountedResults {
        alpha: args.alpha,
        v: table(&sol.v),
        bound_c: sol.bound_c,
        sup_bound: sol.bound_c / args.alpha,
        sup_norm,
    });
    report.diagnostics(&DiscountedDiagnostics {
        iterations: sol.iterations,
        residual: sol.residual,
        truncation_bound: sol.truncation_bound,
        uniqueness_gap: linalg::max_abs_diff(&sol.v, &other.v),
    });
    Ok(())
}

#[derive(Serialize)]
struct AlphaRow {
    alpha: f64,
    level: f64,
    oscillation: f64,
    iterations: usize,
}

#[derive(Serialize)]
struct Identities {
    lambda: f64,
    via_pi: f64,
    via_pi_v: f64,
    max_error: f64,
    pi_v: Vec<f64>,
}

#[derive(Serialize)]
struct Bounds {
    c: f64,
    r: f64,
    rho: f64,
    c_prime: f64,
    max_oscillation: f64,
    lambda_ok: bool,
    v_ok: bool,
    oscillation_ok: bool,
}

#[derive(Serialize)]
struct EbsdeResults {
    lambda: f64,
    v: StateTable,
    anchor: usize,
    pi: Vec<f64>,
    alphas_used: Vec<f64>,
}

#[derive(Serialize)]
struct EbsdeDiagnostics {
    residual_recurrent: f64,
    residual_transient: f64,
    transient_states: Vec<usize>,
    warnings: Vec<String>,
    identities: Identities,
    alpha_trace: Vec<AlphaRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate_bounds: Option<Bounds>,
}

fn solve_ebsde(args: &SolveEbsdeArgs, report: &mut Report) -> Result<(), CliError> {
    let driver = load_driver(&args.driver, report)?;
    let d = driver.as_driver();
    let a = chain_for(args.chain.as_deref(), d, report)?;
    let anchor = check_state(args.anchor, a.n(), "anchor")?;
    if args.ratio >= 1.0 {
        return Err(CliError::validation("ratio must lie in (0, 1)"));
    }
    let options = EbsdeOptions {
        tol: args.tol,
        anchor,
        alpha0: args.alpha0,
        ratio: args.ratio,
        certificate_epsilon: (!args.no_certificate).then_some(args.epsilon),
        ..EbsdeOptions::default()
    };
    let sol = ebsde::solve_ebsde(&a, d, &options).map_err(compute)?;
    let ids = ebsde::lambda_identities(&a, d, &sol).map_err(compute)?;
    let mut warnings = Vec::new();
    if sol.anchor_transient {
        warnings.push(format!(
            "anchor state {} is transient; v depends on transient data",
            args.anchor
        ));
    }
    for w in &warnings {
        report.line(format!("warning: {}", w));
    }
    report.line(format!("lambda = {}", sol.lambda));
    report.line(format!("v = {:?}", sol.v.values()));
    report.line(format!(
        "residual {:e}, identity error {:e}, {} discount rates",
        sol.residual.recurrent,
        ids.max_error(),
        sol.alphas_used.len()
    ));
    report.results(&EbsdeResults {
        lambda: sol.lambda,
        v: table(&sol.v),
        anchor: args.anchor,
        pi: sol.pi.weights().to_vec(),
        alphas_used: sol.alphas_used.clone(),
    });
    report.diagnostics(&EbsdeDiagnostics {
        residual_recurrent: sol.residual.recurrent,
        residual_transient: sol.residual.transient,
        transient_states: one_based(&sol.transient_states),
        warnings,
        identities: Identities {
            lambda: ids.lhs,
            via_pi: ids.via_pi,
            via_pi_v: ids.via_pi_v,
            max_error: ids.max_error(),
            pi_v: ids.pi_v.weights().to_vec(),
        },
        alpha_trace: sol
            .trace
            .iter()
            .map(|s| AlphaRow {
                alpha: s.alpha,
                level: s.level,
                oscillation: s.oscillation,
                iterations: s.iterations,
            })
            .collect(),
        certificate_bounds: sol.bounds.as_ref().map(|b| Bounds {
            c: b.c,
            r: b.r,
            rho: b.rho,
            c_prime: b.c_prime,
            max_oscillation: b.max_oscillation,
            lambda_ok: b.lambda_ok,
            v_ok: b.v_ok,
            oscillation_ok: b.oscillation_ok,
        }),
    });
    Ok(())
}

#[derive(Serialize)]
struct CertificateJson {
    gamma: f64,
    epsilon: f64,
    q_gamma: f64,
    geometric_target: f64,
    beta_geometric: f64,
    beta: f64,
    halvings: usize,
    g_star_2beta: f64,
    h_star_bound: f64,
    beta_tilde: f64,
    r: f64,
    rho: f64,
}

impl From<&ergodicity::ErgodicityCertificate> for CertificateJson {
    fn from(c: &ergodicity::ErgodicityCertificate) -> Self {
        CertificateJson {
            gamma: c.gamma,
            epsilon: c.epsilon,
            q_gamma: c.q_gamma,
            geometric_target: c.geometric_target,
            beta_geometric: c.beta_geom,
            beta: c.beta,
            halvings: c.halvings,
            g_star_2beta: c.g_star_2beta,
            h_star_bound: c.h_star_bound,
            beta_tilde: c.beta_tilde,
            r: c.r,
            rho: c.rho,
        }
    }
}

#[derive(Serialize)]
struct EnvelopeJson {
    samples: usize,
    t_max: usize,
    violations: usize,
    worst_margin: f64,
    worst_sample: usize,
    worst_t: usize,
    implied_rate: f64,
    pass: bool,
}

fn certify(args: &CertifyArgs, seed: u64, report: &mut Report) -> Result<(), CliError> {
    let chain: ChainJson = read_json(&args.chain, "chain", report)?;
    let a = chain.to_homogeneous().map_err(|e| e.context("chain"))?;
    if args.gamma >= 1.0 {
        return Err(CliError::validation("gamma must lie in (0, 1)"));
    }
    let cert = ergodicity::certificate(&a, args.gamma, args.epsilon).map_err(compute)?;
    report.line(format!(
        "q_gamma = {}, beta_tilde = {}, R = {}, rho = {}",
        cert.q_gamma, cert.beta_tilde, cert.r, cert.rho
    ));
    report.results(&CertificateJson::from(&cert));
    if args.verify_samples > 0 {
        let env = ergodicity::verify_envelope(&cert, &a, args.verify_samples, args.tmax, seed)
            .map_err(compute)?;
        report.line(format!(
            "envelope: {} samples, {} violations, worst margin {:e}, implied rate {}",
            env.samples, env.violations, env.worst_margin, env.implied_rate
        ));
        report.diagnostics(&serde_json::json!({
            "envelope": EnvelopeJson {
                samples: env.samples,
                t_max: env.t_max,
                violations: env.violations,
                worst_margin: env.worst_margin,
                worst_sample: env.worst_sample,
                worst_t: env.worst_t,
                implied_rate: env.implied_rate,
                pass: env.pass,
            }
        }));
    }
    Ok(())
}

#[derive(Serialize)]
struct ControlResults {
    lambda_bar: f64,
    v: StateTable,
    policy: Vec<String>,
    policy_cost_exact: f64,
}

#[derive(Serialize)]
struct OracleJson {
    lambda_star: f64,
    h: StateTable,
    lambda_gap: f64,
    /// `max |v − h|` over recurrent states, both normalised at the anchor.
    bias_gap: f64,
    iterations: usize,
    damped: bool,
}

#[derive(Serialize)]
struct SimulationJson {
    horizon: usize,
    runs: usize,
    seed: u64,
    mean: f64,
    stderr: f64,
    z_score: f64,
    within_3_sigma: bool,
    window_means: Vec<f64>,
}

#[derive(Serialize)]
struct ControlDiagnostics {
    identity_defect: f64,
    residual: f64,
    alphas_used: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulation: Option<SimulationJson>,
}

fn solve_control(args: &SolveControlArgs, report: &mut Report) -> Result<(), CliError> {
    let model: ControlModelJson = read_json(&args.model, "model", report)?;
    let model = model.to_model().map_err(|e| e.context("model"))?;
    let n = model.n();
    let anchor = check_state(args.anchor, n, "anchor")?;
    let x0 = check_state(args.x0, n, "x0")?;
    let options = EbsdeOptions {
        tol: args.tol,
        anchor,
        certificate_epsilon: None,
        ..EbsdeOptions::default()
    };
    let opt = control::solve_optimal(&model, &options).map_err(compute)?;
    let exact = control::ergodic_cost_exact(&model, &opt.policy).map_err(compute)?;
    let names: Vec<String> = opt.policy.iter().map(|&u| model.actions()[u].clone()).collect();
    report.line(format!("lambda_bar = {}", opt.lambda_bar));
    report.line(format!("policy = {:?}", names));
    let mut diag = ControlDiagnostics {
        identity_defect: opt.identity_defect,
        residual: opt.ebsde.residual.recurrent,
        alphas_used: opt.ebsde.alphas_used.len(),
        oracle: None,
        simulation: None,
    };
    if args.oracle.is_some() {
        let r = control::rvi_oracle(&model, args.oracle_tol, anchor).map_err(compute)?;
        let mask = chain::class_structure(model.reference()).recurrent_mask(n);
        let bias_gap = (0..n)
            .filter(|&x| mask[x])
            .map(|x| (opt.v[x] - r.h[x]).abs())
            .fold(0.0, f64::max);
        report.line(format!(
            "rvi: lambda* = {} (gap {:e})",
            r.lambda_star,
            (r.lambda_star - opt.lambda_bar).abs()
        ));
        diag.oracle = Some(OracleJson {
            lambda_star: r.lambda_star,
            h: table(&r.h),
            lambda_gap: (r.lambda_star - opt.lambda_bar).abs(),
            bias_gap,
            iterations: r.iterations,
            damped: r.damped,
        });
    }
    if let Some(sim) = &args.simulate {
        let (horizon, runs, seed) = (sim[0] as usize, sim[1] as usize, sim[2]);
        let s = control::ergodic_cost_simulate(
            &model,
            &Policy::Feedback(opt.policy.clone()),
            horizon,
            runs,
            seed,
            x0,
        )
        .map_err(compute)?;
        let z = if s.stderr > 0.0 {
            (s.mean - opt.lambda_bar) / s.stderr
        } else if s.mean == opt.lambda_bar {
            0.0
        } else {
            f64::INFINITY
        };
        report.line(format!(
            "simulated J = {} +/- {} (z = {:.2})",
            s.mean, s.stderr, z
        ));
        diag.simulation = Some(SimulationJson {
            horizon,
            runs,
            seed,
            mean: s.mean,
            stderr: s.stderr,
            z_score: z,
            within_3_sigma: z.abs() <= 3.0,
            window_means: s.window_means,
        });
    }
    report.results(&ControlResults {
        lambda_bar: opt.lambda_bar,
        v: table(&opt.v),
        policy: names,
        policy_cost_exact: exact,
    });
    report.diagnostics(&diag);
    Ok(())
}

#[derive(Serialize)]
struct EstimateJson {
    mean: f64,
    stderr: f64,
    count: usize,
}

impl From<ergodicity::Estimate> for EstimateJson {
    fn from(e: ergodicity::Estimate) -> Self {
        EstimateJson {
            mean: e.mean,
            stderr: e.stderr,
            count: e.count,
        }
    }
}

#[derive(Serialize)]
struct KBinJson {
    k: usize,
    count: usize,
    frequency: f64,
    stderr: f64,
    bound: f64,
}

#[derive(Serialize)]
struct CouplingJson {
    beta: f64,
    runs: usize,
    truncated: usize,
    mgf_bound: f64,
    mgf: EstimateJson,
    worst_start: [usize; 2],
    worst_start_mgf: EstimateJson,
    mgf_pass: bool,
    s_after_t: usize,
    k_histogram: Vec<KBinJson>,
    k_pass: bool,
    t1_lower_start_deficit: f64,
    t1_pass: bool,
    gap: EstimateJson,
    gap_expected: f64,
    gap_pass: bool,
    unsplit_meeting: EstimateJson,
    unsplit_worst_start: [usize; 2],
    unsplit_worst: EstimateJson,
    unsplit_truncated: usize,
    unsplit_pass: bool,
    pass: bool,
}

fn simulate_coupling(
    args: &SimulateCouplingArgs,
    seed: u64,
    report: &mut Report,
) -> Result<(), CliError> {
    let chain: ChainJson = read_json(&args.chain, "chain", report)?;
    let a = chain.to_homogeneous().map_err(|e| e.context("chain"))?;
    let b = match &args.b {
        Some(p) => {
            let m: MatrixJson = read_json(p, "b", report)?;
            m.to_matrix().map_err(|e| e.context("b"))?
        }
        None => a.clone(),
    };
    if args.gamma >= 1.0 {
        return Err(CliError::validation("gamma must lie in (0, 1)"));
    }
    if !chain::is_gamma_controlled(&b, &a, args.gamma).map_err(CliError::validation)? {
        return Err(CliError::validation("b is not gamma-controlled by the chain"));
    }
    let cert = ergodicity::certificate(&a, args.gamma, args.epsilon).map_err(compute)?;
    let beta = args.beta.unwrap_or(cert.beta_tilde);
    let kernel = ergodicity::build_split(&a, &b, args.gamma).map_err(compute)?;
    let r = ergodicity::simulate_coupling(
        &kernel,
        &CouplingOptions {
            beta,
            runs: args.runs,
            seed,
            q_gamma: cert.q_gamma,
            mgf_bound: cert.r,
            max_steps: args.max_steps,
        },
    );
    let m = ergodicity::simulate_meeting_unsplit(&b, beta, args.runs, seed, args.max_steps);
    let unsplit_pass = m.truncated == 0 && m.worst.mean - 3.0 * m.worst.stderr <= cert.r;
    let pass = r.pass() && r.truncated == 0 && unsplit_pass;
    report.line(format!(
        "E[exp(beta S)] = {} +/- {} (bound {}), worst start {} +/- {}",
        r.mgf.mean, r.mgf.stderr, cert.r, r.worst_start_mgf.mean, r.worst_start_mgf.stderr
    ));
    report.line(format!(
        "K histogram {}, first arrival {}, gaps {}, pass = {}",
        if r.k_pass { "ok" } else { "violated" },
        if r.t1_pass { "ok" } else { "violated" },
        if r.gap_pass { "ok" } else { "off" },
        pass
    ));
    report.results(&serde_json::json!({ "certificate": CertificateJson::from(&cert) }));
    report.diagnostics(&CouplingJson {
        beta,
        runs: r.runs,
        truncated: r.truncated,
        mgf_bound: cert.r,
        mgf: r.mgf.into(),
        worst_start: [r.worst_start.0 + 1, r.worst_start.1 + 1],
        worst_start_mgf: r.worst_start_mgf.into(),
        mgf_pass: r.mgf_pass,
        s_after_t: r.s_after_t,
        k_histogram: r
            .k_histogram
            .iter()
            .map(|b| KBinJson {
                k: b.k,
                count: b.count,
                frequency: b.frequency,
                stderr: b.stderr,
                bound: b.bound,
            })
            .collect(),
        k_pass: r.k_pass,
        t1_lower_start_deficit: r.t1_lower_start_deficit,
        t1_pass: r.t1_pass,
        gap: r.gap.into(),
        gap_expected: r.gap_expected,
        gap_pass: r.gap_pass,
        unsplit_meeting: m.overall.into(),
        unsplit_worst_start: [m.worst_start.0 + 1, m.worst_start.1 + 1],
        unsplit_worst: m.worst.into(),
        unsplit_truncated: m.truncated,
        unsplit_pass,
        pass,
    });
    Ok(())
}
