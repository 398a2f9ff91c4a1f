//! Descent monitor for validated runs.
//!
//! Given a saddle point `(x*, y*, u*)` of the coupled Lagrangian, the
//! function
//!
//! `V^k = ‖w^k − w*‖²_{M₀} + ‖w^k − w^{k−1}‖²_{M₁}`, `w = (x, y, u)`,
//!
//! is nonincreasing along iterations whose parameters satisfy the localized
//! conditions; the per-step decrease is at least `‖w^{k+1} − w^k‖²_{M₂}`.
//! All three weight matrices are block diagonal over (agents, cliques,
//! cliques):
//!
//! * x-block: `M₀ = ½P`, `M₁ = 0`, `M₂ = ½(P − L_{F²})` with
//!   `P = D_α⁻¹ − WᵀAᵀΓAW`;
//! * y-block, per clique: built from `Q_l = D_{β,l}⁻¹ − B_lᵀΓ_lB_l`, the
//!   smooth-part constants, and `Θ`;
//! * u-block, per clique: diagonal in `Γ, Φ, Θ`.
//!
//! Construction fails if any block has a clearly negative smallest
//! eigenvalue, which indicates invalid parameters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::functions::Diag;
use crate::linalg::lambda_min_symmetric;
use crate::params::{Algo, SolverParams, VALIDATION_SLACK};
use crate::problem::CliqueProblem;
use crate::solver::SolverState;

/// Reference saddle point, typically from a long high-accuracy run.
#[derive(Debug, Clone)]
pub struct SaddlePoint {
    pub x: DVector<f64>,
    pub y: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
}

impl SaddlePoint {
    pub fn from_state(state: &SolverState) -> Self {
        Self { x: state.x().clone(), y: state.y().to_vec(), u: state.u().to_vec() }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LyapunovValue {
    /// `V^k`.
    pub value: f64,
    /// `‖w^k − w^{k−1}‖²_{M₂}`, the guaranteed decrease contribution of the
    /// last step.
    pub step_norm_m2: f64,
}

/// Smallest-eigenvalue estimates of the monitor's blocks (power-iteration
/// based; the test suite cross-checks them against a dense eigensolver).
#[derive(Debug, Clone)]
pub struct PsdSummary {
    pub p_min: f64,
    pub q_min: f64,
    pub m0_min: f64,
    pub m1_min: f64,
    pub m2_min: f64,
}

impl PsdSummary {
    pub fn ok(&self, slack: f64) -> bool {
        self.p_min >= -slack
            && self.q_min >= -slack
            && self.m0_min >= -slack
            && self.m1_min >= -slack
            && self.m2_min >= -slack
    }
}

#[derive(Debug)]
pub struct LyapunovMonitor {
    reference: SaddlePoint,
    // x-blocks (already scaled by ½).
    m0_x: DMatrix<f64>,
    m2_x: DMatrix<f64>,
    // Per-clique y-blocks (scaled by ½).
    m0_y: Vec<DMatrix<f64>>,
    m1_y: Vec<DMatrix<f64>>,
    m2_y: Vec<DMatrix<f64>>,
    // Per-clique diagonal u-blocks (scaled by ½).
    m0_u: Vec<DVector<f64>>,
    m1_u: Vec<DVector<f64>>,
    m2_u: Vec<DVector<f64>>,
    // Unscaled diagnostics.
    p: DMatrix<f64>,
    q: Vec<DMatrix<f64>>,
    psd: PsdSummary,
}

fn diag_vec(diag: &Diag, dim: usize) -> DVector<f64> {
    diag.to_vector(dim)
}

impl LyapunovMonitor {
    pub fn new(
        problem: &CliqueProblem,
        params: &SolverParams,
        algo: Algo,
        reference: SaddlePoint,
    ) -> Result<Self> {
        params.check_compatible(problem)?;
        let n = problem.n();
        let d = problem.d();
        if reference.x.len() != n * d || reference.y.len() != problem.blocks().len() {
            return Err(Error::DimensionMismatch("reference point has wrong shape".into()));
        }

        // P = D_α⁻¹ − WᵀAᵀΓAW on the agent stack.
        let agg = problem.aggregate()?;
        let p_total: usize = problem.blocks().iter().map(|b| b.constraint_dim()).sum();
        let mut gamma_stack = DVector::zeros(p_total);
        let mut off = 0;
        for (l, block) in problem.blocks().iter().enumerate() {
            let scales = params.clique_scales(problem, l);
            let p_l = block.constraint_dim();
            gamma_stack.rows_mut(off, p_l).copy_from(&diag_vec(&scales.gamma, p_l));
            off += p_l;
        }
        let aw = agg.a() * agg.w();
        let mut p_mat = aw.transpose() * DMatrix::from_diagonal(&gamma_stack) * &aw * -1.0;
        for i in 0..n {
            let inv_alpha = 1.0 / params.alpha()[i];
            for r in 0..d {
                p_mat[(i * d + r, i * d + r)] += inv_alpha;
            }
        }

        let mut l_f = DVector::zeros(n * d);
        for i in 1..=n {
            let lip = algo.effective_lipschitz(problem.agent_objective(i));
            l_f.rows_mut((i - 1) * d, d).fill(lip);
        }
        let m0_x = &p_mat * 0.5;
        let m2_x = (&p_mat - DMatrix::from_diagonal(&l_f)) * 0.5;

        let mut q_blocks = Vec::new();
        let (mut m0_y, mut m1_y, mut m2_y) = (Vec::new(), Vec::new(), Vec::new());
        let (mut m0_u, mut m1_u, mut m2_u) = (Vec::new(), Vec::new(), Vec::new());
        for (l, block) in problem.blocks().iter().enumerate() {
            let scales = params.clique_scales(problem, l);
            let theta = params.clique_theta(problem, l)?;
            let p_l = block.constraint_dim();
            let q_l = block.y_dim();
            let gamma = diag_vec(&scales.gamma, p_l);
            let phi = diag_vec(&scales.phi, p_l);
            let theta_v = diag_vec(&theta, p_l);
            let beta = diag_vec(&scales.beta, q_l);
            let l_g = algo.effective_lipschitz(block.g());
            let b_dense = block.b().to_dense();

            let bt_gamma_b = b_dense.transpose() * DMatrix::from_diagonal(&gamma) * &b_dense;
            let mut q_block = -&bt_gamma_b;
            for k in 0..q_l {
                q_block[(k, k)] += 1.0 / beta[k];
            }

            m0_y.push((&bt_gamma_b + &q_block) * 0.5);
            let mut m1 = q_block.clone();
            for k in 0..q_l {
                m1[(k, k)] += l_g;
            }
            m1_y.push(m1 * 0.5);
            // Γ(I − Θ⁻¹(I−Φ)²) as a p-dimensional diagonal.
            let curvature = DVector::from_fn(p_l, |k, _| {
                gamma[k] * (1.0 - (1.0 - phi[k]).powi(2) / theta_v[k])
            });
            let mut m2 =
                b_dense.transpose() * DMatrix::from_diagonal(&curvature) * &b_dense + &q_block;
            for k in 0..q_l {
                m2[(k, k)] -= 3.0 * l_g;
            }
            m2_y.push(m2 * 0.5);
            q_blocks.push(q_block);

            m0_u.push(DVector::from_fn(p_l, |k, _| 0.5 / (gamma[k] * phi[k])));
            m1_u.push(DVector::from_fn(p_l, |k, _| {
                0.5 * theta_v[k] / (gamma[k] * phi[k] * phi[k])
            }));
            m2_u.push(DVector::from_fn(p_l, |k, _| {
                0.5 * (2.0 - phi[k] - theta_v[k]) / (gamma[k] * phi[k] * phi[k])
            }));
        }

        let psd = {
            let p_min = lambda_min_symmetric(&p_mat);
            let q_min =
                q_blocks.iter().map(lambda_min_symmetric).fold(f64::INFINITY, f64::min);
            let min_over = |mats: &[DMatrix<f64>],
                            diags: &[DVector<f64>],
                            x_block: Option<&DMatrix<f64>>| {
                let mut min = f64::INFINITY;
                if let Some(m) = x_block {
                    min = min.min(lambda_min_symmetric(m));
                }
                for m in mats {
                    min = min.min(lambda_min_symmetric(m));
                }
                for v in diags {
                    min = min.min(v.iter().cloned().fold(f64::INFINITY, f64::min));
                }
                min
            };
            PsdSummary {
                p_min,
                q_min,
                m0_min: min_over(&m0_y, &m0_u, Some(&m0_x)),
                m1_min: min_over(&m1_y, &m1_u, None),
                m2_min: min_over(&m2_y, &m2_u, Some(&m2_x)),
            }
        };
        if !psd.ok(VALIDATION_SLACK) {
            return Err(Error::ValidationFailed(format!(
                "monitor weight matrices are not PSD: P {:+.3e}, Q {:+.3e}, M0 {:+.3e}, M1 {:+.3e}, M2 {:+.3e}",
                psd.p_min, psd.q_min, psd.m0_min, psd.m1_min, psd.m2_min
            )));
        }

        Ok(Self {
            reference,
            m0_x,
            m2_x,
            m0_y,
            m1_y,
            m2_y,
            m0_u,
            m1_u,
            m2_u,
            p: p_mat,
            q: q_blocks,
            psd,
        })
    }

    pub fn psd_summary(&self) -> &PsdSummary {
        &self.psd
    }

    pub fn reference(&self) -> &SaddlePoint {
        &self.reference
    }

    /// `P = D_α⁻¹ − WᵀAᵀΓAW` (unscaled).
    pub fn p_matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Per-clique `Q_l = D_{β,l}⁻¹ − B_lᵀΓ_lB_l` (unscaled).
    pub fn q_blocks(&self) -> &[DMatrix<f64>] {
        &self.q
    }

    pub fn m2_x_block(&self) -> &DMatrix<f64> {
        &self.m2_x
    }

    pub fn m2_y_blocks(&self) -> &[DMatrix<f64>] {
        &self.m2_y
    }

    pub fn m2_u_diagonals(&self) -> &[DVector<f64>] {
        &self.m2_u
    }

    fn quad_dense(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
        v.dot(&(m * v))
    }

    fn quad_diag(diag: &DVector<f64>, v: &DVector<f64>) -> f64 {
        v.iter().zip(diag.iter()).map(|(vi, di)| di * vi * vi).sum()
    }

    /// Evaluate `V^k` and the `M₂`-norm of the last step at `state` (which
    /// carries its own previous iterate).
    pub fn value(&self, state: &SolverState) -> LyapunovValue {
        let dx = state.x() - &self.reference.x;
        let step_x = state.x() - state.prev_x();
        let mut v = Self::quad_dense(&self.m0_x, &dx);
        let mut m2 = Self::quad_dense(&self.m2_x, &step_x);
        for l in 0..self.m0_y.len() {
            let dy = &state.y()[l] - &self.reference.y[l];
            let du = &state.u()[l] - &self.reference.u[l];
            let sy = &state.y()[l] - &state.prev_y()[l];
            let su = &state.u()[l] - &state.prev_u()[l];
            v += Self::quad_dense(&self.m0_y[l], &dy);
            v += Self::quad_diag(&self.m0_u[l], &du);
            v += Self::quad_dense(&self.m1_y[l], &sy);
            v += Self::quad_diag(&self.m1_u[l], &su);
            m2 += Self::quad_dense(&self.m2_y[l], &sy);
            m2 += Self::quad_diag(&self.m2_u[l], &su);
        }
        LyapunovValue { value: v, step_norm_m2: m2 }
    }
}
