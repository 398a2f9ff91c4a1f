//! Decentralized proximal-gradient baseline with a doubly stochastic mixing
//! matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::lambda_min_symmetric;

/// `W_m = I − L_G / max_i deg(i)`, with `L_G` the graph Laplacian.
/// Symmetric with unit row sums.
pub fn build_mixing_matrix(graph: &Graph) -> Result<DMatrix<f64>> {
    let n = graph.node_count();
    let max_degree =
        (1..=n).map(|i| graph.degree(i).expect("node in range")).max().unwrap_or(0);
    if max_degree == 0 {
        return Err(Error::InvalidGraph("mixing matrix needs at least one edge".into()));
    }
    let scale = 1.0 / max_degree as f64;
    let mut w = DMatrix::identity(n, n);
    for &(i, j) in graph.edges() {
        // L = D − Adj: subtract scale·L.
        w[(i - 1, j - 1)] += scale;
        w[(j - 1, i - 1)] += scale;
        w[(i - 1, i - 1)] -= scale;
        w[(j - 1, j - 1)] -= scale;
    }
    Ok(w)
}

/// Step size `0.9 (1 + λ_min(W_m)) / L`.
pub fn suggested_eta(mix: &DMatrix<f64>, gradient_lipschitz: f64) -> f64 {
    0.9 * (1.0 + lambda_min_symmetric(mix)) / gradient_lipschitz
}

/// Apply `W_m ⊗ I_d` to a stacked agent vector.
pub fn mix_apply(mix: &DMatrix<f64>, x: &DVector<f64>, d: usize) -> DVector<f64> {
    let n = mix.nrows();
    debug_assert_eq!(x.len(), n * d);
    let mut out = DVector::zeros(n * d);
    for i in 0..n {
        let mut block = out.rows_mut(i * d, d);
        for j in 0..n {
            let w = mix[(i, j)];
            if w != 0.0 {
                block.axpy(w, &x.rows(j * d, d), 1.0);
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct PgExtraState {
    pub k: usize,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
}

impl PgExtraState {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self { k: 0, x: DVector::zeros(n * d), v: DVector::zeros(n * d) }
    }
}

/// One iteration:
/// `x⁺ = prox_h((W_m ⊗ I_d)x − η ∇F(x) − v)`,
/// `v⁺ = v + ½(I − W_m ⊗ I_d)x`,
/// both reading the pre-update `x`.
pub fn pg_extra_step<G, P>(
    mix: &DMatrix<f64>,
    d: usize,
    eta: f64,
    grad_f: G,
    prox_h: P,
    state: &mut PgExtraState,
) -> Result<()>
where
    G: Fn(&DVector<f64>) -> DVector<f64>,
    P: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = mix.nrows();
    if mix.ncols() != n {
        return Err(Error::DimensionMismatch("mixing matrix must be square".into()));
    }
    if state.x.len() != n * d || state.v.len() != n * d {
        return Err(Error::DimensionMismatch(format!(
            "pg-extra state has {} entries, expected {}",
            state.x.len(),
            n * d
        )));
    }
    let mixed = mix_apply(mix, &state.x, d);
    let grad = grad_f(&state.x);
    if grad.len() != n * d {
        return Err(Error::DimensionMismatch("gradient has wrong length".into()));
    }
    let new_x = prox_h(&(&mixed - grad * eta - &state.v));
    let new_v = &state.v + (&state.x - &mixed) * 0.5;
    state.x = new_x;
    state.v = new_v;
    state.k += 1;
    Ok(())
}
