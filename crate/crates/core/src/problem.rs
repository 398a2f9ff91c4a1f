//! Problem assembly: agent objectives, per-clique objectives, and per-clique
//! linear coupling blocks `A_l x_{C_l} + B_l y_l = c_l`, plus the dense
//! aggregated form used as a reference oracle.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::clique::CliqueFamily;
use crate::error::{Error, Result};
use crate::functions::{CliqueConsensus, Objective, Value};
use crate::graph::Graph;
use crate::linalg::LinearMap;

/// One clique's coupling block and objective.
#[derive(Debug, Clone)]
pub struct CliqueBlock {
    clique_id: usize,
    a: LinearMap,
    b: LinearMap,
    c: DVector<f64>,
    g: Objective,
}

impl CliqueBlock {
    pub fn new(
        clique_id: usize,
        a: LinearMap,
        b: LinearMap,
        c: DVector<f64>,
        g: Objective,
    ) -> Result<Self> {
        if a.nrows() != b.nrows() || a.nrows() != c.len() {
            return Err(Error::DimensionMismatch(format!(
                "clique {clique_id}: A has {} rows, B has {}, c has {}",
                a.nrows(),
                b.nrows(),
                c.len()
            )));
        }
        if g.dim() != b.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "clique {clique_id}: g is on R^{} but B has {} columns",
                g.dim(),
                b.ncols()
            )));
        }
        Ok(Self { clique_id, a, b, c, g })
    }

    pub fn clique_id(&self) -> usize {
        self.clique_id
    }

    pub fn a(&self) -> &LinearMap {
        &self.a
    }

    pub fn b(&self) -> &LinearMap {
        &self.b
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn g(&self) -> &Objective {
        &self.g
    }

    /// Constraint row count `p_l`.
    pub fn constraint_dim(&self) -> usize {
        self.c.len()
    }

    /// Clique variable dimension `q_l`.
    pub fn y_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Residual `A_l x_{C_l} + B_l y_l − c_l`.
    pub fn residual(&self, x_clique: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.a.apply(x_clique) + self.b.apply(y) - &self.c
    }
}

/// The full clique-coupled problem instance.
#[derive(Debug, Clone)]
pub struct CliqueProblem {
    graph: Arc<Graph>,
    family: Arc<CliqueFamily>,
    d: usize,
    agent_objectives: Vec<Objective>,
    blocks: Vec<CliqueBlock>,
    /// Per-agent l1 coefficients when built as a consensus instance; used for
    /// the agent-iterate objective reported by experiment drivers.
    consensus_l1: Option<Vec<f64>>,
}

impl CliqueProblem {
    pub fn new(
        graph: Arc<Graph>,
        family: Arc<CliqueFamily>,
        d: usize,
        agent_objectives: Vec<Objective>,
        blocks: Vec<CliqueBlock>,
    ) -> Result<Self> {
        let n = graph.node_count();
        if family.node_count() != n {
            return Err(Error::DimensionMismatch(format!(
                "family is over {} nodes, graph has {n}",
                family.node_count()
            )));
        }
        if agent_objectives.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} agent objectives for {n} agents",
                agent_objectives.len()
            )));
        }
        for (i, f) in agent_objectives.iter().enumerate() {
            if f.dim() != d {
                return Err(Error::DimensionMismatch(format!(
                    "agent {} objective is on R^{}, expected R^{d}",
                    i + 1,
                    f.dim()
                )));
            }
        }
        if blocks.len() != family.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} blocks for {} cliques",
                blocks.len(),
                family.len()
            )));
        }
        for (l, block) in blocks.iter().enumerate() {
            if block.clique_id != l {
                return Err(Error::DimensionMismatch(format!(
                    "block {l} carries clique id {}",
                    block.clique_id
                )));
            }
            let expected = family.clique(l).size() * d;
            if block.a.ncols() != expected {
                return Err(Error::DimensionMismatch(format!(
                    "clique {l}: A has {} columns, expected {expected}",
                    block.a.ncols()
                )));
            }
        }
        Ok(Self { graph, family, d, agent_objectives, blocks, consensus_l1: None })
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn family(&self) -> &Arc<CliqueFamily> {
        &self.family
    }

    pub fn n(&self) -> usize {
        self.graph.node_count()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn agent_objective(&self, i: usize) -> &Objective {
        &self.agent_objectives[i - 1]
    }

    pub fn blocks(&self) -> &[CliqueBlock] {
        &self.blocks
    }

    pub fn block(&self, l: usize) -> &CliqueBlock {
        &self.blocks[l]
    }

    pub fn consensus_l1(&self) -> Option<&[f64]> {
        self.consensus_l1.as_deref()
    }

    /// Per-clique residuals and the total residual norm
    /// `sqrt(Σ_l ‖A_l x_{C_l} + B_l y_l − c_l‖²)`.
    pub fn residual(
        &self,
        x: &DVector<f64>,
        y: &[DVector<f64>],
    ) -> Result<(Vec<DVector<f64>>, f64)> {
        self.check_state_dims(x, y)?;
        let mut per_clique = Vec::with_capacity(self.blocks.len());
        let mut total_sq = 0.0;
        for (l, block) in self.blocks.iter().enumerate() {
            let xc = self.family.gather_clique(l, x, self.d);
            let r = block.residual(&xc, &y[l]);
            total_sq += r.norm_squared();
            per_clique.push(r);
        }
        Ok((per_clique, total_sq.sqrt()))
    }

    /// `F(x) + G(y) = Σ f_i(x_i) + Σ g_l(y_l)`.
    pub fn objective(&self, x: &DVector<f64>, y: &[DVector<f64>]) -> Result<Value> {
        self.check_state_dims(x, y)?;
        let mut total = Value::Finite(0.0);
        for i in 1..=self.n() {
            total = total + self.agent_objective(i).eval_total(&self.agent_block(x, i));
        }
        for (l, block) in self.blocks.iter().enumerate() {
            total = total + block.g.eval_total(&y[l]);
        }
        Ok(total)
    }

    /// Objective of the underlying consensus problem evaluated at the agent
    /// iterates only: `Σ_i f_i(x_i) + Σ_i λ_i‖x_i‖₁`. `None` unless built by
    /// [`build_consensus_problem`].
    pub fn consensus_objective_at(&self, x: &DVector<f64>) -> Option<f64> {
        let lambdas = self.consensus_l1.as_ref()?;
        let mut total = 0.0;
        for i in 1..=self.n() {
            let xi = self.agent_block(x, i);
            total += self.agent_objective(i).eval_total(&xi).finite()?;
            total += lambdas[i - 1] * xi.iter().map(|v| v.abs()).sum::<f64>();
        }
        Some(total)
    }

    pub fn agent_block(&self, x: &DVector<f64>, i: usize) -> DVector<f64> {
        x.rows((i - 1) * self.d, self.d).clone_owned()
    }

    fn check_state_dims(&self, x: &DVector<f64>, y: &[DVector<f64>]) -> Result<()> {
        if x.len() != self.n() * self.d {
            return Err(Error::DimensionMismatch(format!(
                "x has {} entries, expected {}",
                x.len(),
                self.n() * self.d
            )));
        }
        if y.len() != self.blocks.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} clique vectors for {} cliques",
                y.len(),
                self.blocks.len()
            )));
        }
        for (l, yl) in y.iter().enumerate() {
            if yl.len() != self.blocks[l].y_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "y_{l} has {} entries, expected {}",
                    yl.len(),
                    self.blocks[l].y_dim()
                )));
            }
        }
        Ok(())
    }

    /// Dense aggregated form; test-scale scaffolding, capped by total column
    /// count.
    pub fn aggregate(&self) -> Result<AggregatedProblem> {
        self.aggregate_with_cap(AGGREGATE_COLUMN_CAP)
    }

    pub fn aggregate_with_cap(&self, cap: usize) -> Result<AggregatedProblem> {
        let n = self.n();
        let d = self.d;
        let y_total: usize = self.blocks.iter().map(CliqueBlock::y_dim).sum();
        let cols = n * d + y_total;
        if cols > cap {
            return Err(Error::AggregateTooLarge { cols, cap });
        }
        let select_rows = self.family.total_member_slots() * d;
        let mut w = DMatrix::zeros(select_rows, n * d);
        let mut row = 0;
        for clique in self.family.cliques() {
            for &member in clique.members() {
                for r in 0..d {
                    w[(row + r, (member - 1) * d + r)] = 1.0;
                }
                row += d;
            }
        }
        let p_total: usize = self.blocks.iter().map(CliqueBlock::constraint_dim).sum();
        let mut a = DMatrix::zeros(p_total, select_rows);
        let mut b = DMatrix::zeros(p_total, y_total);
        let mut c = DVector::zeros(p_total);
        let (mut row_off, mut col_a, mut col_b) = (0, 0, 0);
        for block in &self.blocks {
            let (p, qa, qb) = (block.constraint_dim(), block.a.ncols(), block.b.ncols());
            a.view_mut((row_off, col_a), (p, qa)).copy_from(&block.a.to_dense());
            b.view_mut((row_off, col_b), (p, qb)).copy_from(&block.b.to_dense());
            c.rows_mut(row_off, p).copy_from(&block.c);
            row_off += p;
            col_a += qa;
            col_b += qb;
        }
        Ok(AggregatedProblem { problem: self.clone(), w, a, b, c })
    }
}

pub const AGGREGATE_COLUMN_CAP: usize = 5000;

/// Dense aggregated form `minimize F(x) + G(y) s.t. AWx + By = c`.
#[derive(Debug, Clone)]
pub struct AggregatedProblem {
    problem: CliqueProblem,
    w: DMatrix<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DVector<f64>,
}

impl AggregatedProblem {
    pub fn problem(&self) -> &CliqueProblem {
        &self.problem
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    /// Stack per-clique vectors (y or u) into one aggregated vector.
    pub fn stack_blocks(&self, blocks: &[DVector<f64>]) -> DVector<f64> {
        let total: usize = blocks.iter().map(DVector::len).sum();
        let mut out = DVector::zeros(total);
        let mut off = 0;
        for b in blocks {
            out.rows_mut(off, b.len()).copy_from(b);
            off += b.len();
        }
        out
    }

    /// Split an aggregated y vector back into per-clique vectors.
    pub fn split_y(&self, y: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(self.problem.blocks().len());
        let mut off = 0;
        for block in self.problem.blocks() {
            out.push(y.rows(off, block.y_dim()).clone_owned());
            off += block.y_dim();
        }
        out
    }

    /// Split an aggregated u vector into per-clique vectors.
    pub fn split_u(&self, u: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(self.problem.blocks().len());
        let mut off = 0;
        for block in self.problem.blocks() {
            out.push(u.rows(off, block.constraint_dim()).clone_owned());
            off += block.constraint_dim();
        }
        out
    }
}

/// Assemble the consensus instance: `A_l = I`, `B_l = −I`, `c_l = 0`, and
/// `g_l` the clique-consensus function with components `h_j / |Q_G^j|`.
///
/// With the maximal-clique family on a connected graph the feasible set
/// forces `x_1 = … = x_n` (and `y_l = x_{C_l}`), so minimizers coincide with
/// the centralized consensus optimum.
pub fn build_consensus_problem(
    graph: Arc<Graph>,
    family: Arc<CliqueFamily>,
    d: usize,
    agent_objectives: Vec<Objective>,
    h_l1: &[f64],
) -> Result<CliqueProblem> {
    let n = graph.node_count();
    if family.is_empty() {
        return Err(Error::InvalidParameter("empty clique family".into()));
    }
    if h_l1.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} l1 coefficients for {n} agents",
            h_l1.len()
        )));
    }
    for (idx, &lambda) in h_l1.iter().enumerate() {
        let i = idx + 1;
        if lambda < 0.0 {
            return Err(Error::InvalidParameter(format!("negative λ for agent {i}")));
        }
        if lambda > 0.0 && family.agent_clique_count(i)? == 0 {
            return Err(Error::InvalidParameter(format!(
                "agent {i} has a nonsmooth term but belongs to no clique"
            )));
        }
    }
    let mut blocks = Vec::with_capacity(family.len());
    for clique in family.cliques() {
        let size = clique.size();
        let dim = size * d;
        let coeffs: Vec<f64> = clique
            .members()
            .iter()
            .map(|&j| h_l1[j - 1] / family.agent_clique_count(j).expect("member exists") as f64)
            .collect();
        let g = Objective::proximable(CliqueConsensus::new(size, d, coeffs)?);
        blocks.push(CliqueBlock::new(
            clique.id(),
            LinearMap::Identity(dim),
            LinearMap::NegIdentity(dim),
            DVector::zeros(dim),
            g,
        )?);
    }
    let mut problem = CliqueProblem::new(graph, family, d, agent_objectives, blocks)?;
    problem.consensus_l1 = Some(h_l1.to_vec());
    Ok(problem)
}
