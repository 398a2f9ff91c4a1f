//! Algorithmic parameters and their localized convergence-condition
//! validators.
//!
//! The clique-wise validator checks, with slack for floating-point noise:
//!   * x-step bound:    `α_i⁻¹ ≥ Σ_{l∋i} γ_l λ_max(A_lᵀA_l) + L_{f_i²}`
//!   * y-step bound:    `β_l⁻¹ − γ_l λ_max(B_lᵀB_l) ≥ 0`
//!   * y-curvature PSD: `γ_l(1 − (1−φ_l)²/θ_l) B_lᵀB_l + Q_l ⪰ 3 L_{g_l²} I`
//!
//! with `Q_l = β_l⁻¹ I − γ_l B_lᵀB_l` and `θ_l = 2 − φ_l − ε_l` for some
//! `ε_l ∈ (0, 2−φ_l)`.
//!
//! The agent-wise variant replaces the per-clique scalars by diagonal
//! matrices built from per-agent values and requires identity coupling
//! blocks; all three checks become scalar per agent.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::functions::{Diag, Objective};
use crate::linalg::{lambda_min_symmetric, LinearMap};
use crate::problem::CliqueProblem;

/// Which update family the parameters drive. Proximal steps absorb the whole
/// agent objective, so its smooth-part constant does not enter the
/// conditions; linearized steps do use it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    ClAdmm,
    ClFlipAdmm,
}

impl Algo {
    /// Smooth-part Lipschitz constant as seen by this algorithm.
    pub fn effective_lipschitz(self, objective: &Objective) -> f64 {
        match self {
            Algo::ClAdmm => 0.0,
            Algo::ClFlipAdmm => objective.smooth_lipschitz(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algo::ClAdmm => "cl-admm",
            Algo::ClFlipAdmm => "cl-flip-admm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamMode {
    /// Scalar `β_l, γ_l, φ_l` per clique.
    CliqueWise,
    /// Per-agent `β_i, γ_i, φ_i` applied as diagonal matrices
    /// `diag(·_{C_l}) ⊗ I_d`; requires identity coupling blocks.
    AgentWise,
}

/// Slack absorbing floating-point noise in the condition checks.
pub const VALIDATION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SolverParams {
    mode: ParamMode,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    phi: Vec<f64>,
    /// Per-clique (or per-agent) ε; `None` selects the default
    /// `min(0.5(2−φ), 0.1)`.
    epsilon: Option<Vec<f64>>,
}

fn check_positive(name: &str, values: &[f64]) -> Result<()> {
    if let Some(v) = values.iter().find(|&&v| !v.is_finite() || v <= 0.0) {
        return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

impl SolverParams {
    pub fn clique_wise(
        alpha: Vec<f64>,
        beta: Vec<f64>,
        gamma: Vec<f64>,
        phi: Vec<f64>,
    ) -> Result<Self> {
        check_positive("alpha", &alpha)?;
        check_positive("beta", &beta)?;
        check_positive("gamma", &gamma)?;
        check_positive("phi", &phi)?;
        if beta.len() != gamma.len() || beta.len() != phi.len() {
            return Err(Error::DimensionMismatch(
                "beta, gamma, phi must have one entry per clique".into(),
            ));
        }
        Ok(Self { mode: ParamMode::CliqueWise, alpha, beta, gamma, phi, epsilon: None })
    }

    pub fn agent_wise(
        alpha: Vec<f64>,
        beta: Vec<f64>,
        gamma: Vec<f64>,
        phi: Vec<f64>,
    ) -> Result<Self> {
        check_positive("alpha", &alpha)?;
        check_positive("beta", &beta)?;
        check_positive("gamma", &gamma)?;
        check_positive("phi", &phi)?;
        let n = alpha.len();
        if beta.len() != n || gamma.len() != n || phi.len() != n {
            return Err(Error::DimensionMismatch(
                "agent-wise parameters must have one entry per agent".into(),
            ));
        }
        Ok(Self { mode: ParamMode::AgentWise, alpha, beta, gamma, phi, epsilon: None })
    }

    pub fn with_epsilon(mut self, epsilon: Vec<f64>) -> Result<Self> {
        if epsilon.len() != self.beta.len() {
            return Err(Error::DimensionMismatch(
                "epsilon must match beta/gamma/phi length".into(),
            ));
        }
        for (k, &e) in epsilon.iter().enumerate() {
            let window = 2.0 - self.phi[k];
            if !(e > 0.0 && e < window) {
                return Err(Error::InvalidParameter(format!(
                    "epsilon[{k}] = {e} outside (0, {window})"
                )));
            }
        }
        self.epsilon = Some(epsilon);
        Ok(self)
    }

    pub fn mode(&self) -> ParamMode {
        self.mode
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// Resolve ε for entry `k` (clique or agent, by mode).
    pub fn epsilon(&self, k: usize) -> Result<f64> {
        if let Some(eps) = &self.epsilon {
            return Ok(eps[k]);
        }
        let window = 2.0 - self.phi[k];
        if window <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "phi[{k}] = {} leaves no valid epsilon window",
                self.phi[k]
            )));
        }
        Ok((0.5 * window).min(0.1))
    }

    /// Check the parameter vectors are sized for `problem`.
    pub fn check_compatible(&self, problem: &CliqueProblem) -> Result<()> {
        if self.alpha.len() != problem.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} alpha entries for {} agents",
                self.alpha.len(),
                problem.n()
            )));
        }
        let expected = match self.mode {
            ParamMode::CliqueWise => problem.family().len(),
            ParamMode::AgentWise => problem.n(),
        };
        if self.beta.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} beta/gamma/phi entries, expected {expected}",
                self.beta.len()
            )));
        }
        if self.mode == ParamMode::AgentWise {
            for block in problem.blocks() {
                let dim = problem.family().clique(block.clique_id()).size() * problem.d();
                if block.constraint_dim() != dim || block.y_dim() != dim {
                    return Err(Error::InvalidParameter(
                        "agent-wise parameters require square identity-shaped blocks".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Per-clique `θ = 2 − φ − ε` as a diagonal matching the dual block.
    pub fn clique_theta(&self, problem: &CliqueProblem, l: usize) -> Result<Diag> {
        match self.mode {
            ParamMode::CliqueWise => Ok(Diag::uniform(2.0 - self.phi[l] - self.epsilon(l)?)),
            ParamMode::AgentWise => {
                let clique = problem.family().clique(l);
                let d = problem.d();
                let mut out = DVector::zeros(clique.size() * d);
                for (j, &member) in clique.members().iter().enumerate() {
                    let idx = member - 1;
                    out.rows_mut(j * d, d).fill(2.0 - self.phi[idx] - self.epsilon(idx)?);
                }
                Ok(Diag::per_entry(out))
            }
        }
    }

    /// Per-clique diagonal scalings for the step updates. Clique-wise mode
    /// yields uniform scalars; agent-wise mode expands `diag(·_{C_l}) ⊗ I_d`.
    pub fn clique_scales(&self, problem: &CliqueProblem, l: usize) -> CliqueScales {
        match self.mode {
            ParamMode::CliqueWise => CliqueScales {
                gamma: Diag::uniform(self.gamma[l]),
                phi: Diag::uniform(self.phi[l]),
                beta: Diag::uniform(self.beta[l]),
            },
            ParamMode::AgentWise => {
                let clique = problem.family().clique(l);
                let d = problem.d();
                let expand = |values: &[f64]| {
                    let mut out = DVector::zeros(clique.size() * d);
                    for (j, &member) in clique.members().iter().enumerate() {
                        out.rows_mut(j * d, d).fill(values[member - 1]);
                    }
                    Diag::per_entry(out)
                };
                CliqueScales {
                    gamma: expand(&self.gamma),
                    phi: expand(&self.phi),
                    beta: expand(&self.beta),
                }
            }
        }
    }
}

/// Resolved per-clique scalings used by one solver step.
#[derive(Debug, Clone)]
pub struct CliqueScales {
    pub gamma: Diag,
    pub phi: Diag,
    pub beta: Diag,
}

/// One signed condition margin; nonnegative (within slack) means satisfied.
#[derive(Debug, Clone)]
pub struct Margin {
    /// `"x_step"`, `"y_step"`, or `"y_curvature"`.
    pub condition: &'static str,
    /// Agent or clique index the condition applies to.
    pub index: usize,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub mode: ParamMode,
    pub algo: Algo,
    pub slack: f64,
    pub margins: Vec<Margin>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.margins.iter().all(|m| m.margin >= -self.slack)
    }

    pub fn worst(&self) -> Option<&Margin> {
        self.margins
            .iter()
            .min_by(|a, b| a.margin.partial_cmp(&b.margin).expect("margins are finite"))
    }

    pub fn failing(&self) -> impl Iterator<Item = &Margin> {
        self.margins.iter().filter(move |m| m.margin < -self.slack)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "validation [{:?}, {}]: {}",
            self.mode,
            self.algo.name(),
            if self.ok() { "ok" } else { "FAILED" }
        )?;
        for m in &self.margins {
            writeln!(f, "  {:<12} #{:<4} margin {:+.6e}", m.condition, m.index, m.margin)?;
        }
        Ok(())
    }
}

/// Validate clique-wise parameters against the localized convergence
/// conditions, reporting signed margins.
pub fn validate_clique_wise(
    problem: &CliqueProblem,
    params: &SolverParams,
    algo: Algo,
) -> Result<ValidationReport> {
    if params.mode() != ParamMode::CliqueWise {
        return Err(Error::InvalidParameter("expected clique-wise parameters".into()));
    }
    params.check_compatible(problem)?;
    let family = problem.family();
    let lam_a: Vec<f64> = problem.blocks().iter().map(|b| b.a().gram_lambda_max()).collect();
    let lam_b: Vec<f64> = problem.blocks().iter().map(|b| b.b().gram_lambda_max()).collect();

    let mut margins = Vec::new();
    for i in 1..=problem.n() {
        let coupling: f64 = family
            .agent_cliques(i)?
            .iter()
            .map(|&l| params.gamma[l] * lam_a[l])
            .sum();
        let lip = algo.effective_lipschitz(problem.agent_objective(i));
        margins.push(Margin {
            condition: "x_step",
            index: i,
            margin: 1.0 / params.alpha[i - 1] - coupling - lip,
        });
    }
    for (l, block) in problem.blocks().iter().enumerate() {
        margins.push(Margin {
            condition: "y_step",
            index: l,
            margin: 1.0 / params.beta[l] - params.gamma[l] * lam_b[l],
        });
        let epsilon = params.epsilon(l)?;
        margins.push(Margin {
            condition: "y_curvature",
            index: l,
            margin: curvature_margin(block, params.beta[l], params.gamma[l], params.phi[l], epsilon, algo),
        });
    }
    Ok(ValidationReport { mode: ParamMode::CliqueWise, algo, slack: VALIDATION_SLACK, margins })
}

/// Smallest eigenvalue of
/// `γ(1 − (1−φ)²/θ) BᵀB + β⁻¹I − γBᵀB − 3 L_{g²} I` with `θ = 2−φ−ε`.
fn curvature_margin(
    block: &crate::problem::CliqueBlock,
    beta: f64,
    gamma: f64,
    phi: f64,
    epsilon: f64,
    algo: Algo,
) -> f64 {
    let theta = 2.0 - phi - epsilon;
    let l_g = algo.effective_lipschitz(block.g());
    let q_dim = block.y_dim();
    let coeff = gamma * (1.0 - (1.0 - phi).powi(2) / theta) - gamma;
    let mut s = block.b().gram() * coeff;
    for k in 0..q_dim {
        s[(k, k)] += 1.0 / beta - 3.0 * l_g;
    }
    lambda_min_symmetric(&s)
}

/// Search an ε grid over `(0, 2−φ_l)` maximizing the curvature margin;
/// returns the per-clique best ε values.
pub fn epsilon_grid_search(
    problem: &CliqueProblem,
    params: &SolverParams,
    algo: Algo,
    points: usize,
) -> Result<Vec<f64>> {
    if params.mode() != ParamMode::CliqueWise {
        return Err(Error::InvalidParameter("expected clique-wise parameters".into()));
    }
    params.check_compatible(problem)?;
    let mut best = Vec::with_capacity(problem.blocks().len());
    for (l, block) in problem.blocks().iter().enumerate() {
        let window = 2.0 - params.phi[l];
        if window <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "phi[{l}] = {} leaves no valid epsilon window",
                params.phi[l]
            )));
        }
        let mut best_eps = f64::NAN;
        let mut best_margin = f64::NEG_INFINITY;
        for k in 1..=points {
            let eps = window * k as f64 / (points as f64 + 1.0);
            let margin =
                curvature_margin(block, params.beta[l], params.gamma[l], params.phi[l], eps, algo);
            if margin > best_margin {
                best_margin = margin;
                best_eps = eps;
            }
        }
        best.push(best_eps);
    }
    Ok(best)
}

/// Validate agent-wise parameters. Requires identity `A_l` and (sign-flipped)
/// identity `B_l`; all three conditions reduce to scalars per agent.
pub fn validate_agent_wise(
    problem: &CliqueProblem,
    params: &SolverParams,
    algo: Algo,
) -> Result<ValidationReport> {
    if params.mode() != ParamMode::AgentWise {
        return Err(Error::InvalidParameter("expected agent-wise parameters".into()));
    }
    params.check_compatible(problem)?;
    for block in problem.blocks() {
        let a_ok = matches!(block.a(), LinearMap::Identity(_));
        let b_ok = matches!(block.b(), LinearMap::Identity(_) | LinearMap::NegIdentity(_));
        if !a_ok || !b_ok {
            return Err(Error::InvalidParameter(
                "agent-wise validation requires identity coupling blocks".into(),
            ));
        }
    }
    let family = problem.family();
    let mut margins = Vec::new();
    for i in 1..=problem.n() {
        let idx = i - 1;
        let count = family.agent_clique_count(i)? as f64;
        let lip = algo.effective_lipschitz(problem.agent_objective(i));
        margins.push(Margin {
            condition: "x_step",
            index: i,
            margin: 1.0 / params.alpha[idx] - params.gamma[idx] * count - lip,
        });
        margins.push(Margin {
            condition: "y_step",
            index: i,
            margin: 1.0 / params.beta[idx] - params.gamma[idx],
        });
        let epsilon = params.epsilon(idx)?;
        let theta = 2.0 - params.phi[idx] - epsilon;
        if theta <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "phi[{idx}] = {} leaves no valid epsilon window",
                params.phi[idx]
            )));
        }
        let max_lg = family
            .agent_cliques(i)?
            .iter()
            .map(|&l| algo.effective_lipschitz(problem.block(l).g()))
            .fold(0.0_f64, f64::max);
        let curvature = params.gamma[idx]
            * (1.0 - (1.0 - params.phi[idx]).powi(2) / theta)
            + (1.0 / params.beta[idx] - params.gamma[idx])
            - 3.0 * max_lg;
        margins.push(Margin { condition: "y_curvature", index: i, margin: curvature });
    }
    Ok(ValidationReport { mode: ParamMode::AgentWise, algo, slack: VALIDATION_SLACK, margins })
}

/// Validate `params` with the validator matching its mode.
pub fn validate(
    problem: &CliqueProblem,
    params: &SolverParams,
    algo: Algo,
) -> Result<ValidationReport> {
    match params.mode() {
        ParamMode::CliqueWise => validate_clique_wise(problem, params, algo),
        ParamMode::AgentWise => validate_agent_wise(problem, params, algo),
    }
}

fn x_step_denominator(problem: &CliqueProblem, algo: Algo, i: usize) -> Result<f64> {
    let coupling: f64 = problem
        .family()
        .agent_cliques(i)?
        .iter()
        .map(|&l| problem.block(l).a().gram_lambda_max())
        .sum();
    Ok(coupling + algo.effective_lipschitz(problem.agent_objective(i)))
}

/// Localized defaults: `γ = φ = β = 1` and `α_i` at the equality case of the
/// x-step bound. Passes the clique-wise validator by construction.
pub fn suggest_params(problem: &CliqueProblem, algo: Algo) -> Result<SolverParams> {
    let n = problem.n();
    let m = problem.family().len();
    let mut alpha = Vec::with_capacity(n);
    for i in 1..=n {
        let denom = x_step_denominator(problem, algo, i)?;
        alpha.push(if denom > 0.0 { 1.0 / denom } else { 1.0 });
    }
    SolverParams::clique_wise(alpha, vec![1.0; m], vec![1.0; m], vec![1.0; m])
}

/// Globally uniform baseline: `γ = φ = β = 1` and a single conservative
/// `α = 1 / max_i(denominator_i)` shared by every agent.
pub fn uniform_baseline_params(problem: &CliqueProblem, algo: Algo) -> Result<SolverParams> {
    let n = problem.n();
    let m = problem.family().len();
    let mut worst = 0.0_f64;
    for i in 1..=n {
        worst = worst.max(x_step_denominator(problem, algo, i)?);
    }
    let alpha = if worst > 0.0 { 1.0 / worst } else { 1.0 };
    SolverParams::clique_wise(vec![alpha; n], vec![1.0; m], vec![1.0; m], vec![1.0; m])
}
