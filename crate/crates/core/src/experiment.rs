//! Configuration-driven consensus-optimization experiment.
//!
//! A seeded instance is a connected Erdős–Rényi graph with per-agent
//! least-squares objectives `½‖Ψ_i x − b_i‖²`, `Ψ_i = I + 0.1 Ω_i`, and l1
//! terms `λ‖x‖₁`; `Ω_i` and `b_i` have standard-normal entries. The driver
//! runs the clique solvers (maximal-clique and edge families, localized and
//! uniform parameters) plus the proximal-gradient baseline, writing one CSV
//! per method and a human-readable summary.
//!
//! Determinism: the master seed feeds a counter-based generator with two
//! dedicated streams (stream 0: graph draws, stream 1: objective data), so a
//! config reproduces its instance and every trajectory byte for byte.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::clique::CliqueFamily;
use crate::error::{Error, Result};
use crate::functions::{prox_l1, Objective, Quadratic, Value};
use crate::graph::Graph;
use crate::linalg::lambda_max_symmetric;
use crate::lyapunov::{LyapunovMonitor, SaddlePoint};
use crate::params::{
    suggest_params, uniform_baseline_params, validate, Algo, SolverParams, ValidationReport,
};
use crate::pg_extra::{build_mixing_matrix, suggested_eta, PgExtraState};
use crate::problem::{build_consensus_problem, CliqueProblem};
use crate::solver::{
    cl_admm_step, run, IterationMetrics, RunOptions, RunStatus, SolverState, DIVERGENCE_GUARD,
};

pub const GRAPH_RETRY_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodAlgo {
    ClAdmm,
    ClFlipAdmm,
    PgExtra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CliqueChoice {
    #[default]
    Maximal,
    Edges,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamStyle {
    #[default]
    Localized,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct MethodSpec {
    pub algorithm: MethodAlgo,
    #[serde(default)]
    pub cliques: CliqueChoice,
    #[serde(default)]
    pub params: ParamStyle,
    /// Multiplier on the derived `α_i`, for step-size studies. Values above
    /// 1 break the validated bound; running then requires `force`.
    #[serde(default = "default_alpha_scale")]
    pub alpha_scale: f64,
}

fn default_alpha_scale() -> f64 {
    1.0
}

impl MethodSpec {
    pub fn new(algorithm: MethodAlgo, cliques: CliqueChoice, params: ParamStyle) -> Self {
        Self { algorithm, cliques, params, alpha_scale: 1.0 }
    }

    pub fn name(&self) -> String {
        let mut name = match self.algorithm {
            MethodAlgo::PgExtra => "pg-extra".to_string(),
            MethodAlgo::ClAdmm | MethodAlgo::ClFlipAdmm => {
                let base = match self.algorithm {
                    MethodAlgo::ClAdmm => "cl-admm",
                    _ => "cl-flip-admm",
                };
                let cliques = match self.cliques {
                    CliqueChoice::Maximal => "qmax",
                    CliqueChoice::Edges => "edges",
                };
                match self.params {
                    ParamStyle::Localized => format!("{base}-{cliques}"),
                    ParamStyle::Uniform => format!("uniform-{base}-{cliques}"),
                }
            }
        };
        if self.alpha_scale != 1.0 {
            name.push_str(&format!("-a{}", self.alpha_scale));
        }
        name
    }
}

/// The five clique/baseline methods of the main comparison plus the two
/// uniform-parameter baselines.
pub fn default_methods() -> Vec<MethodSpec> {
    use CliqueChoice::*;
    use MethodAlgo::*;
    use ParamStyle::*;
    vec![
        MethodSpec::new(ClAdmm, Maximal, Localized),
        MethodSpec::new(ClAdmm, Edges, Localized),
        MethodSpec::new(ClFlipAdmm, Maximal, Localized),
        MethodSpec::new(ClFlipAdmm, Edges, Localized),
        MethodSpec::new(PgExtra, Maximal, Localized),
        MethodSpec::new(ClAdmm, Maximal, Uniform),
        MethodSpec::new(ClFlipAdmm, Maximal, Uniform),
    ]
}

#[derive(Debug, Clone, Deserialize)]
pub struct ReferenceConfig {
    #[serde(default = "default_reference_iters")]
    pub max_iterations: usize,
    #[serde(default = "default_reference_tol")]
    pub tolerance: f64,
}

fn default_reference_iters() -> usize {
    2_000_000
}

fn default_reference_tol() -> f64 {
    1e-12
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self { max_iterations: default_reference_iters(), tolerance: default_reference_tol() }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n: usize,
    pub edge_prob: f64,
    pub d: usize,
    pub lambda: f64,
    pub horizon: usize,
    pub output_dir: PathBuf,
    /// Load a graph file instead of drawing one (must be connected).
    #[serde(default)]
    pub graph_file: Option<PathBuf>,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub reference: ReferenceConfig,
    /// Monitor descent of the first localized proximal method against a
    /// long-run saddle point and report the result in the summary.
    #[serde(default = "default_true")]
    pub lyapunov_check: bool,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// Desk-scale defaults used by tests and `selftest`.
    pub fn desk(seed: u64, output_dir: PathBuf) -> Self {
        Self {
            seed,
            n: 20,
            edge_prob: 0.2,
            d: 10,
            lambda: 0.001,
            horizon: 5000,
            output_dir,
            graph_file: None,
            methods: default_methods(),
            reference: ReferenceConfig::default(),
            lyapunov_check: true,
        }
    }

    /// Switch to the paper-scale instance size.
    pub fn apply_paper_scale(&mut self) {
        self.n = 50;
        self.edge_prob = 0.1;
    }

    fn check(&self) -> Result<()> {
        if !(self.edge_prob > 0.0 && self.edge_prob <= 1.0) {
            return Err(Error::Config(format!("edge_prob {} not in (0, 1]", self.edge_prob)));
        }
        if self.n == 0 || self.d == 0 {
            return Err(Error::Config("n and d must be positive".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be nonnegative".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods configured".into()));
        }
        Ok(())
    }
}

/// A generated problem instance with both clique families prepared.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: Arc<Graph>,
    pub family_maximal: Arc<CliqueFamily>,
    pub family_edges: Arc<CliqueFamily>,
    pub objectives: Vec<Objective>,
    pub lambda: Vec<f64>,
    pub d: usize,
}

impl Instance {
    pub fn family(&self, choice: CliqueChoice) -> Arc<CliqueFamily> {
        match choice {
            CliqueChoice::Maximal => self.family_maximal.clone(),
            CliqueChoice::Edges => self.family_edges.clone(),
        }
    }

    pub fn problem(&self, choice: CliqueChoice) -> Result<CliqueProblem> {
        build_consensus_problem(
            self.graph.clone(),
            self.family(choice),
            self.d,
            self.objectives.clone(),
            &self.lambda,
        )
    }

    /// `Σ_i f_i(x_i) + Σ_i λ_i‖x_i‖₁` at stacked agent blocks.
    pub fn objective_at(&self, x: &DVector<f64>) -> f64 {
        let d = self.d;
        let mut total = 0.0;
        for (i, objective) in self.objectives.iter().enumerate() {
            let xi = x.rows(i * d, d).clone_owned();
            total += objective.eval_total(&xi).finite().expect("smooth objectives");
            total += self.lambda[i] * xi.iter().map(|v| v.abs()).sum::<f64>();
        }
        total
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw the seeded instance: a connected graph (retrying fresh draws on the
/// graph stream) and standard-normal objective data.
pub fn generate_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    cfg.check()?;
    let graph = match &cfg.graph_file {
        Some(path) => {
            let g = Graph::load(path)?;
            if !g.is_connected() {
                return Err(Error::InvalidGraph("graph file is not connected".into()));
            }
            if g.node_count() != cfg.n {
                return Err(Error::Config(format!(
                    "graph file has {} nodes, config says {}",
                    g.node_count(),
                    cfg.n
                )));
            }
            Arc::new(g)
        }
        None => {
            let mut rng = stream_rng(cfg.seed, 0);
            Arc::new(Graph::erdos_renyi_connected(
                cfg.n,
                cfg.edge_prob,
                &mut rng,
                GRAPH_RETRY_CAP,
            )?)
        }
    };
    let family_maximal = Arc::new(CliqueFamily::enumerate_maximal(&graph)?);
    let family_edges = Arc::new(CliqueFamily::from_edges(&graph));
    let mut data_rng = stream_rng(cfg.seed, 1);
    let d = cfg.d;
    let mut objectives = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let omega =
            DMatrix::from_fn(d, d, |_, _| data_rng.sample::<f64, _>(StandardNormal));
        let psi = DMatrix::identity(d, d) + omega * 0.1;
        let b = DVector::from_fn(d, |_, _| data_rng.sample::<f64, _>(StandardNormal));
        objectives.push(Objective::smooth(Quadratic::new(psi, b)?)?);
    }
    Ok(Instance {
        graph,
        family_maximal,
        family_edges,
        objectives,
        lambda: vec![cfg.lambda; cfg.n],
        d,
    })
}

#[derive(Debug, Clone)]
pub struct ReferenceOptimum {
    /// Centralized minimizer of `Σ_i (f_i + h_i)`.
    pub xi: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub gradient_map_norm: f64,
}

/// Centralized proximal-gradient solve of the consensus objective, iterated
/// until the gradient-map norm falls below the tolerance.
pub fn compute_reference_optimum(
    instance: &Instance,
    cfg: &ReferenceConfig,
) -> Result<ReferenceOptimum> {
    let d = instance.d;
    let mut hessian = DMatrix::zeros(d, d);
    let mut linear = DVector::zeros(d);
    for objective in &instance.objectives {
        // The smooth parts are quadratic, so ∇f(ξ) = Hξ − g; probing the
        // gradient at 0 and at basis vectors accumulates ΣH and Σg.
        let grad0 = objective
            .smooth_gradient(&DVector::zeros(d))
            .ok_or_else(|| Error::InvalidParameter("reference needs smooth objectives".into()))?;
        linear -= &grad0;
        for c in 0..d {
            let mut e = DVector::zeros(d);
            e[c] = 1.0;
            let col = objective.smooth_gradient(&e).expect("smooth") - &grad0;
            let mut target = hessian.column_mut(c);
            target += col;
        }
    }
    let lipschitz = lambda_max_symmetric(&hessian);
    if lipschitz <= 0.0 {
        return Err(Error::InvalidParameter("objective has no curvature".into()));
    }
    let kappa: f64 = instance.lambda.iter().sum();
    let step = 1.0 / lipschitz;
    let mut xi = DVector::zeros(d);
    for k in 0..cfg.max_iterations {
        let grad = &hessian * &xi - &linear;
        let next = prox_l1(&(&xi - &grad * step), kappa * step);
        let gm_norm = ((&xi - &next) * lipschitz).norm();
        xi = next;
        if gm_norm <= cfg.tolerance {
            let mut x_full = DVector::zeros(instance.objectives.len() * d);
            for i in 0..instance.objectives.len() {
                x_full.rows_mut(i * d, d).copy_from(&xi);
            }
            return Ok(ReferenceOptimum {
                objective: instance.objective_at(&x_full),
                xi,
                iterations: k + 1,
                gradient_map_norm: gm_norm,
            });
        }
    }
    Err(Error::ReferenceNotConverged {
        tolerance: cfg.tolerance,
        max_iterations: cfg.max_iterations,
        achieved: f64::NAN,
    })
}

/// One method's trajectory and bookkeeping.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub name: String,
    pub rows: Vec<IterationMetrics>,
    pub status: RunStatus,
    pub wall: Duration,
    pub validation: Option<ValidationReport>,
}

impl MethodRun {
    /// First iteration after which the relative objective residual stays at
    /// or below the threshold (the objective along iterates is not monotone,
    /// so a transient dip does not count as reaching the level).
    pub fn iterations_to(&self, threshold: f64) -> Option<usize> {
        let below =
            |r: &IterationMetrics| r.rel_obj_residual.is_some_and(|v| v <= threshold);
        match self.rows.last() {
            Some(last) if below(last) => {}
            _ => return None,
        }
        let mut arrival = self.rows.first().map(|r| r.k);
        let mut prev_above = false;
        for r in &self.rows {
            if below(r) {
                if prev_above {
                    arrival = Some(r.k);
                }
                prev_above = false;
            } else {
                prev_above = true;
            }
        }
        arrival
    }

    pub fn final_rel_residual(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.rel_obj_residual)
    }
}

#[derive(Debug, Clone)]
pub struct LyapunovCheck {
    pub method: String,
    pub monotone: bool,
    pub max_violation: f64,
    pub checked_iterations: usize,
    /// Relative gap between the long-run objective and the centralized
    /// reference.
    pub long_run_agreement: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub reference: ReferenceOptimum,
    pub methods: Vec<MethodRun>,
    pub lyapunov: Option<LyapunovCheck>,
    pub edge_count: usize,
    pub maximal_clique_count: usize,
}

impl ExperimentOutcome {
    pub fn any_divergence(&self) -> bool {
        self.methods.iter().any(|m| matches!(m.status, RunStatus::Diverged { .. }))
    }

    pub fn method(&self, name: &str) -> Option<&MethodRun> {
        self.methods.iter().find(|m| m.name == name)
    }
}

fn algo_of(spec: &MethodSpec) -> Algo {
    match spec.algorithm {
        MethodAlgo::ClAdmm => Algo::ClAdmm,
        MethodAlgo::ClFlipAdmm => Algo::ClFlipAdmm,
        MethodAlgo::PgExtra => unreachable!("pg-extra has no splitting parameters"),
    }
}

fn params_for(spec: &MethodSpec, problem: &CliqueProblem, algo: Algo) -> Result<SolverParams> {
    if !spec.alpha_scale.is_finite() || spec.alpha_scale <= 0.0 {
        return Err(Error::Config(format!("alpha_scale {} must be positive", spec.alpha_scale)));
    }
    let base = match spec.params {
        ParamStyle::Localized => suggest_params(problem, algo)?,
        ParamStyle::Uniform => uniform_baseline_params(problem, algo)?,
    };
    if spec.alpha_scale == 1.0 {
        return Ok(base);
    }
    SolverParams::clique_wise(
        base.alpha().iter().map(|a| a * spec.alpha_scale).collect(),
        base.beta().to_vec(),
        base.gamma().to_vec(),
        base.phi().to_vec(),
    )
}

/// Validate every configured clique method; the report order matches the
/// configured method order (baseline methods without splitting parameters
/// yield `None`).
pub fn validate_methods(
    cfg: &ExperimentConfig,
    instance: &Instance,
) -> Result<Vec<(String, Option<ValidationReport>)>> {
    let mut out = Vec::new();
    for spec in &cfg.methods {
        let name = spec.name();
        if spec.algorithm == MethodAlgo::PgExtra {
            out.push((name, None));
            continue;
        }
        let problem = instance.problem(spec.cliques)?;
        let algo = algo_of(spec);
        let params = params_for(spec, &problem, algo)?;
        out.push((name, Some(validate(&problem, &params, algo)?)));
    }
    Ok(out)
}

fn run_clique_method(
    spec: &MethodSpec,
    instance: &Instance,
    horizon: usize,
    reference_objective: f64,
) -> Result<MethodRun> {
    let problem = instance.problem(spec.cliques)?;
    let algo = algo_of(spec);
    let params = params_for(spec, &problem, algo)?;
    let validation = validate(&problem, &params, algo)?;
    let opts = RunOptions::new(horizon).with_reference(reference_objective);
    let record = run(&problem, algo, &params, SolverState::zeros(&problem), &opts, |_| {})?;
    Ok(MethodRun {
        name: spec.name(),
        rows: record.rows,
        status: record.status,
        wall: record.wall,
        validation: Some(validation),
    })
}

fn run_pg_extra_method(
    instance: &Instance,
    horizon: usize,
    reference_objective: f64,
) -> Result<MethodRun> {
    let start = Instant::now();
    let n = instance.graph.node_count();
    let d = instance.d;
    let mix = build_mixing_matrix(&instance.graph)?;
    let lipschitz = instance
        .objectives
        .iter()
        .map(Objective::smooth_lipschitz)
        .fold(0.0_f64, f64::max);
    let eta = suggested_eta(&mix, lipschitz);
    if !eta.is_finite() || eta <= 0.0 {
        // A single-edge graph has mixing spectrum reaching −1.
        return Err(Error::InvalidParameter(format!(
            "degenerate baseline step size {eta}; the mixing matrix has unit spectral radius"
        )));
    }
    let lambda = instance.lambda.clone();
    let objectives = instance.objectives.clone();
    let grad = move |x: &DVector<f64>| {
        let mut out = DVector::zeros(n * d);
        for (i, objective) in objectives.iter().enumerate() {
            let xi = x.rows(i * d, d).clone_owned();
            out.rows_mut(i * d, d)
                .copy_from(&objective.smooth_gradient(&xi).expect("smooth objectives"));
        }
        out
    };
    let prox = move |v: &DVector<f64>| {
        DVector::from_fn(v.len(), |k, _| {
            crate::functions::soft_threshold(v[k], eta * lambda[k / d])
        })
    };

    let mut state = PgExtraState::zeros(n, d);
    let mut rows = Vec::with_capacity(horizon + 1);
    let mut status = RunStatus::Completed;
    let consensus_residual = |x: &DVector<f64>| {
        let mut mean = DVector::zeros(d);
        for i in 0..n {
            mean += x.rows(i * d, d);
        }
        mean /= n as f64;
        let mut sq = 0.0;
        for i in 0..n {
            sq += (x.rows(i * d, d) - &mean).norm_squared();
        }
        sq.sqrt()
    };
    let metrics = |k: usize, x: &DVector<f64>| {
        let objective = instance.objective_at(x);
        let rel = (reference_objective != 0.0)
            .then(|| (objective - reference_objective).abs() / reference_objective);
        IterationMetrics {
            k,
            objective_xy: Value::Finite(objective),
            surrogate_objective: Some(objective),
            residual: consensus_residual(x),
            rel_obj_residual: rel,
        }
    };
    rows.push(metrics(0, &state.x));
    for k in 1..=horizon {
        crate::pg_extra::pg_extra_step(&mix, d, eta, &grad, &prox, &mut state)?;
        let norm = state.x.norm();
        if !norm.is_finite() || norm > DIVERGENCE_GUARD {
            status = RunStatus::Diverged { iteration: k };
            break;
        }
        rows.push(metrics(k, &state.x));
    }
    Ok(MethodRun {
        name: "pg-extra".to_string(),
        rows,
        status,
        wall: start.elapsed(),
        validation: None,
    })
}

/// Long validated run used as the descent monitor's saddle point.
pub fn long_run_saddle(
    problem: &CliqueProblem,
    params: &SolverParams,
    max_iterations: usize,
    residual_tolerance: f64,
) -> Result<(SaddlePoint, SolverState)> {
    let mut state = SolverState::zeros(problem);
    for _ in 0..max_iterations {
        cl_admm_step(problem, params, &mut state)?;
        let (_, res) = problem.residual(state.x(), state.y())?;
        if res < residual_tolerance {
            break;
        }
    }
    Ok((SaddlePoint::from_state(&state), state))
}

fn lyapunov_check(
    cfg: &ExperimentConfig,
    instance: &Instance,
    reference: &ReferenceOptimum,
) -> Result<Option<LyapunovCheck>> {
    let Some(spec) = cfg.methods.iter().find(|s| {
        s.algorithm == MethodAlgo::ClAdmm
            && s.params == ParamStyle::Localized
            && s.cliques == CliqueChoice::Maximal
            && s.alpha_scale == 1.0
    }) else {
        return Ok(None);
    };
    let problem = instance.problem(spec.cliques)?;
    let params = suggest_params(&problem, Algo::ClAdmm)?;
    let (saddle, long_state) = long_run_saddle(&problem, &params, 100_000, 1e-12)?;
    let long_run_agreement = {
        let long_obj = instance.objective_at(long_state.x());
        (long_obj - reference.objective).abs() / reference.objective
    };
    let monitor = LyapunovMonitor::new(&problem, &params, Algo::ClAdmm, saddle)?;
    let checked = cfg.horizon.min(2000);
    let mut last: Option<f64> = None;
    let mut max_violation = 0.0_f64;
    run(
        &problem,
        Algo::ClAdmm,
        &params,
        SolverState::zeros(&problem),
        &RunOptions::new(checked),
        |state| {
            let v = monitor.value(state).value;
            if state.k() >= 2 {
                if let Some(prev) = last {
                    max_violation = max_violation.max(v - prev);
                }
            }
            last = Some(v);
        },
    )?;
    Ok(Some(LyapunovCheck {
        method: spec.name(),
        monotone: max_violation <= 1e-9,
        max_violation,
        checked_iterations: checked,
        long_run_agreement,
    }))
}

fn write_csv(dir: &Path, method: &MethodRun) -> Result<PathBuf> {
    let path = dir.join(format!("{}.csv", method.name));
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(out, "k,objective,residual,rel_obj_residual")?;
    for row in method.rows.iter().filter(|r| r.k > 0) {
        let objective = row
            .surrogate_objective
            .or_else(|| row.objective_xy.finite())
            .unwrap_or(f64::NAN);
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e}",
            row.k,
            objective,
            row.residual,
            row.rel_obj_residual.unwrap_or(f64::NAN)
        )?;
    }
    Ok(path)
}

fn write_summary(
    dir: &Path,
    cfg: &ExperimentConfig,
    outcome: &ExperimentOutcome,
) -> Result<PathBuf> {
    let path = dir.join("summary.txt");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(
        out,
        "instance: seed={} n={} d={} lambda={} edge_prob={} edges={} maximal_cliques={}",
        cfg.seed,
        cfg.n,
        cfg.d,
        cfg.lambda,
        cfg.edge_prob,
        outcome.edge_count,
        outcome.maximal_clique_count
    )?;
    writeln!(
        out,
        "reference: objective={:.12e} iterations={} gradient_map_norm={:.3e}",
        outcome.reference.objective,
        outcome.reference.iterations,
        outcome.reference.gradient_map_norm
    )?;
    for m in &outcome.methods {
        let status = match m.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::Diverged { iteration } => format!("diverged@{iteration}"),
        };
        let worst = m
            .validation
            .as_ref()
            .and_then(|v| v.worst().map(|w| format!("{:+.3e}", w.margin)))
            .unwrap_or_else(|| "n/a".to_string());
        writeln!(
            out,
            "method {}: status={} final_rel={} to_1e-4={} to_1e-5={} worst_margin={} wall_ms={}",
            m.name,
            status,
            m.final_rel_residual().map(|v| format!("{v:.3e}")).unwrap_or_else(|| "n/a".into()),
            m.iterations_to(1e-4).map(|k| k.to_string()).unwrap_or_else(|| "-".into()),
            m.iterations_to(1e-5).map(|k| k.to_string()).unwrap_or_else(|| "-".into()),
            worst,
            m.wall.as_millis()
        )?;
    }
    match &outcome.lyapunov {
        Some(check) => writeln!(
            out,
            "lyapunov[{}]: monotone={} max_violation={:+.3e} checked_iterations={} long_run_agreement={:.3e}",
            check.method,
            check.monotone,
            check.max_violation,
            check.checked_iterations,
            check.long_run_agreement
        )?,
        None => writeln!(out, "lyapunov: skipped")?,
    }
    Ok(path)
}

/// Run the configured experiment end to end: validate, solve every method,
/// and write per-method CSVs plus a summary into the output directory.
///
/// Validation failures abort before any run unless `force` is set. Method
/// divergence is reported in the outcome (with the partial CSV retained),
/// not as an error.
pub fn run_experiment(cfg: &ExperimentConfig, force: bool) -> Result<ExperimentOutcome> {
    cfg.check()?;
    let instance = generate_instance(cfg)?;
    let reports = validate_methods(cfg, &instance)?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|(_, r)| r.as_ref().is_some_and(|r| !r.ok()))
        .map(|(name, _)| name.as_str())
        .collect();
    if !failed.is_empty() && !force {
        return Err(Error::ValidationFailed(format!(
            "methods failed validation: {} (pass --force to run anyway)",
            failed.join(", ")
        )));
    }

    let reference = compute_reference_optimum(&instance, &cfg.reference)?;
    std::fs::create_dir_all(&cfg.output_dir)?;

    let mut methods = Vec::with_capacity(cfg.methods.len());
    for spec in &cfg.methods {
        let run = match spec.algorithm {
            MethodAlgo::PgExtra => {
                run_pg_extra_method(&instance, cfg.horizon, reference.objective)?
            }
            _ => run_clique_method(spec, &instance, cfg.horizon, reference.objective)?,
        };
        write_csv(&cfg.output_dir, &run)?;
        methods.push(run);
    }

    let lyapunov =
        if cfg.lyapunov_check { lyapunov_check(cfg, &instance, &reference)? } else { None };

    let outcome = ExperimentOutcome {
        reference,
        methods,
        lyapunov,
        edge_count: instance.graph.edge_count(),
        maximal_clique_count: instance.family_maximal.len(),
    };
    write_summary(&cfg.output_dir, cfg, &outcome)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_cfg(seed: u64, dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk(seed, dir.to_path_buf());
        cfg.n = 8;
        cfg.edge_prob = 0.4;
        cfg.d = 3;
        cfg.horizon = 400;
        cfg
    }

    #[test]
    fn instance_generation_is_deterministic() {
        let dir = std::env::temp_dir();
        let cfg = tiny_cfg(3, &dir);
        let a = generate_instance(&cfg).unwrap();
        let b = generate_instance(&cfg).unwrap();
        assert_eq!(a.graph.edges(), b.graph.edges());
        let xa = DVector::from_element(cfg.n * cfg.d, 0.7);
        assert_eq!(a.objective_at(&xa), b.objective_at(&xa));
    }

    #[test]
    fn reference_mean_closed_form() {
        // f_i = ½‖ξ − a_i‖², λ = 0 → minimizer is the mean of the a_i.
        let graph = Arc::new(Graph::complete(3));
        let family_maximal = Arc::new(CliqueFamily::enumerate_maximal(&graph).unwrap());
        let family_edges = Arc::new(CliqueFamily::from_edges(&graph));
        let d = 2;
        let targets =
            [DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 2.0]), DVector::from_vec(vec![-1.0, 1.0])];
        let objectives: Vec<Objective> = targets
            .iter()
            .map(|a| {
                Objective::smooth(Quadratic::new(DMatrix::identity(d, d), a.clone()).unwrap())
                    .unwrap()
            })
            .collect();
        let instance = Instance {
            graph,
            family_maximal,
            family_edges,
            objectives,
            lambda: vec![0.0; 3],
            d,
        };
        let opt = compute_reference_optimum(&instance, &ReferenceConfig::default()).unwrap();
        let mean = (&targets[0] + &targets[1] + &targets[2]) / 3.0;
        assert_relative_eq!((opt.xi - mean).norm(), 0.0, epsilon = 1e-10);

        // Large λ drives the minimizer to zero.
        let instance_l1 = Instance { lambda: vec![100.0; 3], ..instance };
        let opt = compute_reference_optimum(&instance_l1, &ReferenceConfig::default()).unwrap();
        assert_relative_eq!(opt.xi.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn reference_solve_reports_non_convergence() {
        let dir = std::env::temp_dir();
        let cfg = tiny_cfg(4, &dir);
        let instance = generate_instance(&cfg).unwrap();
        let starved = ReferenceConfig { max_iterations: 1, tolerance: 1e-14 };
        assert!(matches!(
            compute_reference_optimum(&instance, &starved),
            Err(crate::error::Error::ReferenceNotConverged { .. })
        ));
    }

    #[test]
    fn edge_count_sanity_for_default_scales() {
        let dir = std::env::temp_dir();
        for seed in [1u64, 2, 3] {
            let cfg = ExperimentConfig::desk(seed, dir.clone());
            let instance = generate_instance(&cfg).unwrap();
            let m = instance.graph.edge_count();
            // n=20, p=0.2: expected 38 edges; generous sanity band.
            assert!((15..=80).contains(&m), "seed {seed}: {m} edges");
            assert!(instance.graph.is_connected());
        }
    }

    #[test]
    fn method_names_are_stable() {
        let names: Vec<String> = default_methods().iter().map(MethodSpec::name).collect();
        assert_eq!(
            names,
            vec![
                "cl-admm-qmax",
                "cl-admm-edges",
                "cl-flip-admm-qmax",
                "cl-flip-admm-edges",
                "pg-extra",
                "uniform-cl-admm-qmax",
                "uniform-cl-flip-admm-qmax"
            ]
        );
    }

    #[test]
    fn zero_horizon_gives_header_only_csvs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(5, dir.path());
        cfg.horizon = 0;
        cfg.lyapunov_check = false;
        let outcome = run_experiment(&cfg, false).unwrap();
        assert!(!outcome.any_divergence());
        for m in &outcome.methods {
            let text =
                std::fs::read_to_string(dir.path().join(format!("{}.csv", m.name))).unwrap();
            assert_eq!(text, "k,objective,residual,rel_obj_residual\n");
            // Initial metrics are still recorded in memory.
            assert_eq!(m.rows.len(), 1);
        }
    }

    #[test]
    fn small_experiment_converges_and_is_byte_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mut cfg_a = tiny_cfg(7, dir_a.path());
        cfg_a.horizon = 1500;
        let mut cfg_b = cfg_a.clone();
        cfg_b.output_dir = dir_b.path().to_path_buf();

        let outcome_a = run_experiment(&cfg_a, false).unwrap();
        let _outcome_b = run_experiment(&cfg_b, false).unwrap();
        assert!(!outcome_a.any_divergence());
        for m in &outcome_a.methods {
            let rel = m.final_rel_residual().unwrap();
            assert!(rel < 1e-4, "{}: final rel {rel}", m.name);
        }
        // Lyapunov check ran and the long run agrees with the prox-gradient
        // oracle.
        let check = outcome_a.lyapunov.as_ref().unwrap();
        assert!(check.monotone, "max violation {}", check.max_violation);
        assert!(check.long_run_agreement < 1e-8);

        for m in &outcome_a.methods {
            let name = format!("{}.csv", m.name);
            let a = std::fs::read(dir_a.path().join(&name)).unwrap();
            let b = std::fs::read(dir_b.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }
}
