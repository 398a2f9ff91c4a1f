//! Convex function toolkit: values, gradients of smooth parts, and proximal
//! mappings under scalar and diagonal metrics.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::lambda_max_symmetric;

/// Extended-real function value. Infeasibility is carried as a flag instead
/// of a floating-point infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Finite(f64),
    Infeasible,
}

impl Value {
    pub fn is_finite(self) -> bool {
        matches!(self, Value::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Value::Finite(v) => Some(v),
            Value::Infeasible => None,
        }
    }
}

impl std::ops::Add for Value {
    type Output = Value;

    fn add(self, other: Value) -> Value {
        match (self, other) {
            (Value::Finite(a), Value::Finite(b)) => Value::Finite(a + b),
            _ => Value::Infeasible,
        }
    }
}

/// A positive diagonal matrix, used both as a proximal metric and as a
/// per-entry step scaling.
#[derive(Debug, Clone, PartialEq)]
pub enum Diag {
    Uniform(f64),
    PerEntry(DVector<f64>),
}

impl Diag {
    pub fn uniform(value: f64) -> Self {
        Diag::Uniform(value)
    }

    pub fn per_entry(values: DVector<f64>) -> Self {
        Diag::PerEntry(values)
    }

    pub fn entry(&self, i: usize) -> f64 {
        match self {
            Diag::Uniform(v) => *v,
            Diag::PerEntry(values) => values[i],
        }
    }

    pub fn is_positive(&self) -> bool {
        match self {
            Diag::Uniform(v) => *v > 0.0,
            Diag::PerEntry(values) => values.iter().all(|&v| v > 0.0),
        }
    }

    /// Componentwise product `D v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Diag::Uniform(s) => v * *s,
            Diag::PerEntry(values) => v.component_mul(values),
        }
    }

    pub fn inverse(&self) -> Diag {
        match self {
            Diag::Uniform(s) => Diag::Uniform(1.0 / s),
            Diag::PerEntry(values) => Diag::PerEntry(values.map(|v| 1.0 / v)),
        }
    }

    pub fn to_vector(&self, dim: usize) -> DVector<f64> {
        match self {
            Diag::Uniform(s) => DVector::from_element(dim, *s),
            Diag::PerEntry(values) => values.clone(),
        }
    }
}

/// A proper, closed, convex function with a proximal mapping under a
/// diagonal metric: `prox(v) = argmin_y { h(y) + ½‖v−y‖²_Q }`.
pub trait ConvexFn: Send + Sync + std::fmt::Debug {
    fn dim(&self) -> usize;

    fn eval(&self, x: &DVector<f64>) -> Value;

    /// Gradient at `x`, available only for everywhere-finite smooth
    /// functions.
    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let _ = x;
        None
    }

    /// Lipschitz constant of the gradient; `Some` exactly when
    /// [`gradient`](Self::gradient) is.
    fn gradient_lipschitz(&self) -> Option<f64> {
        None
    }

    fn prox(&self, v: &DVector<f64>, metric: &Diag) -> Result<DVector<f64>>;

    fn is_zero(&self) -> bool {
        false
    }
}

/// Componentwise soft threshold, the prox of `t·|·|`.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Prox of `t‖·‖₁` at `v` (uniform threshold `t ≥ 0`).
pub fn prox_l1(v: &DVector<f64>, t: f64) -> DVector<f64> {
    v.map(|x| soft_threshold(x, t))
}

/// The zero function.
#[derive(Debug, Clone)]
pub struct ZeroFn {
    dim: usize,
}

impl ZeroFn {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl ConvexFn for ZeroFn {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _x: &DVector<f64>) -> Value {
        Value::Finite(0.0)
    }

    fn gradient(&self, _x: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::zeros(self.dim))
    }

    fn gradient_lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }

    fn prox(&self, v: &DVector<f64>, _metric: &Diag) -> Result<DVector<f64>> {
        Ok(v.clone())
    }

    fn is_zero(&self) -> bool {
        true
    }
}

/// `λ‖x‖₁`.
#[derive(Debug, Clone)]
pub struct L1Norm {
    dim: usize,
    lambda: f64,
}

impl L1Norm {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if lambda < 0.0 {
            return Err(Error::InvalidParameter(format!("l1 coefficient {lambda} < 0")));
        }
        Ok(Self { dim, lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl ConvexFn for L1Norm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &DVector<f64>) -> Value {
        Value::Finite(self.lambda * x.iter().map(|v| v.abs()).sum::<f64>())
    }

    fn prox(&self, v: &DVector<f64>, metric: &Diag) -> Result<DVector<f64>> {
        // Under Q = diag(q): separable soft threshold with t_k = λ / q_k.
        Ok(DVector::from_fn(v.len(), |k, _| {
            soft_threshold(v[k], self.lambda / metric.entry(k))
        }))
    }
}

/// `½‖Ψx − b‖²`. The prox solves `(ΨᵀΨ + Q) y = Ψᵀb + Qv`, which is always
/// symmetric positive definite for a positive metric.
#[derive(Debug, Clone)]
pub struct Quadratic {
    psi: DMatrix<f64>,
    b: DVector<f64>,
    gram: DMatrix<f64>,
    psi_t_b: DVector<f64>,
    lipschitz: f64,
}

impl Quadratic {
    pub fn new(psi: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if psi.nrows() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "quadratic: Ψ has {} rows but b has {} entries",
                psi.nrows(),
                b.len()
            )));
        }
        let gram = psi.transpose() * &psi;
        let psi_t_b = psi.transpose() * &b;
        let lipschitz = lambda_max_symmetric(&gram).max(0.0);
        Ok(Self { psi, b, gram, psi_t_b, lipschitz })
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// `λ_max(ΨᵀΨ)`.
    pub fn gram_lambda_max(&self) -> f64 {
        self.lipschitz
    }
}

impl ConvexFn for Quadratic {
    fn dim(&self) -> usize {
        self.psi.ncols()
    }

    fn eval(&self, x: &DVector<f64>) -> Value {
        let r = &self.psi * x - &self.b;
        Value::Finite(0.5 * r.norm_squared())
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        Some(&self.gram * x - &self.psi_t_b)
    }

    fn gradient_lipschitz(&self) -> Option<f64> {
        Some(self.lipschitz)
    }

    fn prox(&self, v: &DVector<f64>, metric: &Diag) -> Result<DVector<f64>> {
        let dim = self.dim();
        let mut system = self.gram.clone();
        for k in 0..dim {
            system[(k, k)] += metric.entry(k);
        }
        let rhs = &self.psi_t_b + metric.apply(v);
        let chol = system
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("quadratic prox system not SPD".into()))?;
        Ok(chol.solve(&rhs))
    }
}

/// Indicator of `{0}`.
#[derive(Debug, Clone)]
pub struct IndicatorZero {
    dim: usize,
}

impl IndicatorZero {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl ConvexFn for IndicatorZero {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &DVector<f64>) -> Value {
        if x.iter().all(|&v| v == 0.0) {
            Value::Finite(0.0)
        } else {
            Value::Infeasible
        }
    }

    fn prox(&self, _v: &DVector<f64>, _metric: &Diag) -> Result<DVector<f64>> {
        Ok(DVector::zeros(self.dim))
    }
}

/// Clique-consensus function on `m` stacked `d`-blocks:
/// `Σ_j κ_j‖[y]_j‖₁` plus the indicator of the consensus set
/// `{y : y = 1_m ⊗ ξ}`.
///
/// The prox replicates the prox of the summed inner function evaluated at
/// the (weighted) block mean, so all output blocks are bit-identical.
#[derive(Debug, Clone)]
pub struct CliqueConsensus {
    members: usize,
    block_dim: usize,
    l1_coeffs: Vec<f64>,
}

impl CliqueConsensus {
    pub fn new(members: usize, block_dim: usize, l1_coeffs: Vec<f64>) -> Result<Self> {
        if members == 0 {
            return Err(Error::InvalidParameter("consensus clique needs ≥ 1 member".into()));
        }
        if l1_coeffs.len() != members {
            return Err(Error::DimensionMismatch(format!(
                "consensus: {} coefficients for {} members",
                l1_coeffs.len(),
                members
            )));
        }
        if l1_coeffs.iter().any(|&c| c < 0.0) {
            return Err(Error::InvalidParameter("negative l1 coefficient".into()));
        }
        Ok(Self { members, block_dim, l1_coeffs })
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "consensus prox: expected {} entries, got {}",
                self.dim(),
                v.len()
            )));
        }
        Ok(())
    }

    /// Prox with one positive weight per member block, i.e. the metric
    /// `diag(w) ⊗ I_d`. Uniform weights of 1 give the plain prox.
    pub fn prox_weighted(&self, v: &DVector<f64>, weights: &[f64]) -> Result<DVector<f64>> {
        self.check_dim(v)?;
        if weights.len() != self.members {
            return Err(Error::DimensionMismatch(format!(
                "consensus prox: {} weights for {} members",
                weights.len(),
                self.members
            )));
        }
        if let Some(w) = weights.iter().find(|&&w| w <= 0.0) {
            return Err(Error::InvalidParameter(format!("nonpositive prox weight {w}")));
        }
        let d = self.block_dim;
        let total_weight: f64 = weights.iter().sum();
        let mut mean = DVector::zeros(d);
        for (j, &w) in weights.iter().enumerate() {
            mean.axpy(w, &v.rows(j * d, d).clone_owned(), 1.0);
        }
        mean /= total_weight;
        // Minimizing Σ_j (w_j/2)‖v_j−ξ‖² + Σκ_j‖ξ‖₁ over ξ is the prox of
        // (Σκ_j/Σw_j)‖·‖₁ at the weighted mean.
        let kappa: f64 = self.l1_coeffs.iter().sum();
        let xi = prox_l1(&mean, kappa / total_weight);
        let mut out = DVector::zeros(self.dim());
        for j in 0..self.members {
            out.rows_mut(j * d, d).copy_from(&xi);
        }
        Ok(out)
    }

    /// Extract per-block weights from a diagonal metric; entries must be
    /// constant within each block.
    fn block_weights(&self, metric: &Diag) -> Result<Vec<f64>> {
        let d = self.block_dim;
        match metric {
            Diag::Uniform(s) => Ok(vec![*s; self.members]),
            Diag::PerEntry(values) => {
                if values.len() != self.dim() {
                    return Err(Error::DimensionMismatch(format!(
                        "consensus metric: expected {} entries, got {}",
                        self.dim(),
                        values.len()
                    )));
                }
                let mut out = Vec::with_capacity(self.members);
                for j in 0..self.members {
                    let first = values[j * d];
                    for k in 1..d {
                        if values[j * d + k] != first {
                            return Err(Error::InvalidParameter(
                                "consensus metric must be constant within each block".into(),
                            ));
                        }
                    }
                    out.push(first);
                }
                Ok(out)
            }
        }
    }
}

impl ConvexFn for CliqueConsensus {
    fn dim(&self) -> usize {
        self.members * self.block_dim
    }

    fn eval(&self, y: &DVector<f64>) -> Value {
        if self.check_dim(y).is_err() {
            return Value::Infeasible;
        }
        let d = self.block_dim;
        let first = y.rows(0, d);
        for j in 1..self.members {
            if y.rows(j * d, d) != first {
                return Value::Infeasible;
            }
        }
        let kappa: f64 = self.l1_coeffs.iter().sum();
        Value::Finite(kappa * first.iter().map(|v| v.abs()).sum::<f64>())
    }

    fn prox(&self, v: &DVector<f64>, metric: &Diag) -> Result<DVector<f64>> {
        let weights = self.block_weights(metric)?;
        self.prox_weighted(v, &weights)
    }
}

/// An objective split into a proximable part and a smooth part,
/// `f = f¹ + f²`. Proximal algorithms use `prox_total`; linearized variants
/// take gradient steps on `f²` and prox steps on `f¹` only.
#[derive(Debug, Clone)]
pub struct Objective {
    prox_part: Arc<dyn ConvexFn>,
    smooth_part: Arc<dyn ConvexFn>,
}

impl Objective {
    pub fn split(prox_part: Arc<dyn ConvexFn>, smooth_part: Arc<dyn ConvexFn>) -> Result<Self> {
        if prox_part.dim() != smooth_part.dim() {
            return Err(Error::DimensionMismatch(format!(
                "objective parts disagree: {} vs {}",
                prox_part.dim(),
                smooth_part.dim()
            )));
        }
        if !smooth_part.is_zero() && smooth_part.gradient_lipschitz().is_none() {
            return Err(Error::InvalidParameter(
                "smooth part must provide a gradient and Lipschitz constant".into(),
            ));
        }
        Ok(Self { prox_part, smooth_part })
    }

    /// A function handled entirely by its prox.
    pub fn proximable(f: impl ConvexFn + 'static) -> Self {
        let dim = f.dim();
        Self { prox_part: Arc::new(f), smooth_part: Arc::new(ZeroFn::new(dim)) }
    }

    /// A smooth function handled entirely by gradient steps.
    pub fn smooth(f: impl ConvexFn + 'static) -> Result<Self> {
        let dim = f.dim();
        Self::split(Arc::new(ZeroFn::new(dim)), Arc::new(f))
    }

    pub fn zero(dim: usize) -> Self {
        Self::proximable(ZeroFn::new(dim))
    }

    pub fn dim(&self) -> usize {
        self.prox_part.dim()
    }

    pub fn prox_part(&self) -> &Arc<dyn ConvexFn> {
        &self.prox_part
    }

    pub fn smooth_part(&self) -> &Arc<dyn ConvexFn> {
        &self.smooth_part
    }

    pub fn eval_total(&self, x: &DVector<f64>) -> Value {
        self.prox_part.eval(x) + self.smooth_part.eval(x)
    }

    /// Prox of the full sum `f¹ + f²`. Defined when either part is zero;
    /// general sums have no registered prox.
    pub fn prox_total(&self, v: &DVector<f64>, metric: &Diag) -> Result<DVector<f64>> {
        if self.smooth_part.is_zero() {
            self.prox_part.prox(v, metric)
        } else if self.prox_part.is_zero() {
            self.smooth_part.prox(v, metric)
        } else {
            Err(Error::NoProx(format!(
                "sum of nonzero parts {:?} + {:?}",
                self.prox_part, self.smooth_part
            )))
        }
    }

    /// Gradient of the smooth part, `None` when it is identically zero (so
    /// callers can skip the term instead of adding zeros).
    pub fn smooth_gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        if self.smooth_part.is_zero() {
            None
        } else {
            self.smooth_part.gradient(x)
        }
    }

    /// Lipschitz constant of the smooth part's gradient (0 when absent).
    pub fn smooth_lipschitz(&self) -> f64 {
        self.smooth_part.gradient_lipschitz().unwrap_or(0.0)
    }

    pub fn has_smooth_part(&self) -> bool {
        !self.smooth_part.is_zero()
    }
}
