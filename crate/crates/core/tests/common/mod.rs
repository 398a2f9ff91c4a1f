//! Independent oracles for the acceptance suite. Everything here recomputes
//! expected values by brute force or dense linear algebra, deliberately
//! avoiding the library's operator implementations.

use std::sync::Arc;

use cliquewise::clique::CliqueFamily;
use cliquewise::functions::{L1Norm, Objective, Quadratic, ZeroFn};
use cliquewise::graph::Graph;
use cliquewise::linalg::LinearMap;
use cliquewise::params::{validate_clique_wise, Algo, SolverParams};
use cliquewise::problem::{CliqueBlock, CliqueProblem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Dense selection matrix straight from the 0/1-block rule: row block
/// `(l, j)` selects the agent with rank `j` in clique `l`.
pub fn dense_selection_oracle(fam: &CliqueFamily, d: usize) -> DMatrix<f64> {
    let n = fam.node_count();
    let rows: usize = fam.cliques().iter().map(|c| c.size() * d).sum();
    let mut w = DMatrix::zeros(rows, n * d);
    let mut row_block = 0;
    for clique in fam.cliques() {
        for i in 1..=n {
            if clique.contains(i) {
                let j = clique.position(i).expect("member") - 1;
                for r in 0..d {
                    w[(row_block + j * d + r, (i - 1) * d + r)] = 1.0;
                }
            }
        }
        row_block += clique.size() * d;
    }
    w
}

/// All cliques by testing every nonempty subset for completeness.
pub fn brute_force_cliques(g: &Graph) -> Vec<Vec<usize>> {
    let n = g.node_count();
    assert!(n <= 20, "brute force is exponential");
    let mut out = Vec::new();
    for mask in 1u32..(1u32 << n) {
        let set: Vec<usize> = (1..=n).filter(|i| mask & (1 << (i - 1)) != 0).collect();
        let complete = set
            .iter()
            .enumerate()
            .all(|(a, &i)| set[a + 1..].iter().all(|&j| g.has_edge(i, j)));
        if complete {
            out.push(set);
        }
    }
    out.sort();
    out
}

/// Maximality filter over a clique list.
pub fn maximality_filter(all: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = all
        .iter()
        .filter(|c| {
            !all.iter().any(|o| o.len() > c.len() && c.iter().all(|m| o.contains(m)))
        })
        .cloned()
        .collect();
    out.sort();
    out
}

/// Minimize a convex scalar function by ternary search.
pub fn ternary_min(obj: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (-1e3_f64, 1e3_f64);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if obj(m1) < obj(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    0.5 * (lo + hi)
}

/// Gradient-descent minimizer of `½‖Ψy−b‖² + ½(y−v)ᵀ diag(q) (y−v)`, the
/// independent route for the quadratic prox.
pub fn quadratic_prox_oracle(
    psi: &DMatrix<f64>,
    b: &DVector<f64>,
    v: &DVector<f64>,
    q: &DVector<f64>,
) -> DVector<f64> {
    let gram = psi.transpose() * psi;
    let lip: f64 = gram.iter().map(|x| x.abs()).sum::<f64>()
        + q.iter().cloned().fold(0.0, f64::max);
    let step = 1.0 / lip;
    let psi_t_b = psi.transpose() * b;
    let mut y = v.clone();
    for _ in 0..200_000 {
        let grad = &gram * &y - &psi_t_b + (&y - v).component_mul(q);
        if grad.norm() < 1e-12 {
            break;
        }
        y -= grad * step;
    }
    y
}

pub fn dense_lambda_min(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn dense_lambda_max(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| (rng.random::<f64>() * 2.0 - 1.0) * scale)
}

fn random_vector<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| (rng.random::<f64>() * 2.0 - 1.0) * scale)
}

/// A random instance with dense coupling blocks plus parameters constructed
/// to satisfy the clique-wise conditions with positive margins:
/// `β_l = 1/(γ_l λ_max(B_lᵀB_l) + 3 L_{g_l²} + 0.2)` and `α_i` slightly
/// inside the x-step bound.
pub fn random_validated_instance(
    seed: u64,
    with_smooth_parts: bool,
) -> (CliqueProblem, SolverParams, Algo) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=8);
    let d = rng.random_range(1..=3);
    let graph = Arc::new(Graph::erdos_renyi_connected(n, 0.55, &mut rng, 1000).unwrap());
    let family = Arc::new(CliqueFamily::enumerate_maximal(&graph).unwrap());

    let objectives: Vec<Objective> = (0..n)
        .map(|_| {
            if with_smooth_parts {
                let prox: Arc<dyn cliquewise::functions::ConvexFn> = if rng.random::<f64>() < 0.5
                {
                    Arc::new(L1Norm::new(d, 0.05).unwrap())
                } else {
                    Arc::new(ZeroFn::new(d))
                };
                let smooth = Quadratic::new(
                    random_matrix(&mut rng, d, d, 0.5),
                    random_vector(&mut rng, d, 1.0),
                )
                .unwrap();
                Objective::split(prox, Arc::new(smooth)).unwrap()
            } else {
                match rng.random_range(0..3) {
                    0 => Objective::zero(d),
                    1 => Objective::proximable(L1Norm::new(d, 0.05).unwrap()),
                    _ => Objective::proximable(
                        Quadratic::new(
                            random_matrix(&mut rng, d, d, 0.6),
                            random_vector(&mut rng, d, 1.0),
                        )
                        .unwrap(),
                    ),
                }
            }
        })
        .collect();

    let mut blocks = Vec::with_capacity(family.len());
    for clique in family.cliques() {
        let cols = clique.size() * d;
        let p = rng.random_range(1..=3);
        let q = rng.random_range(1..=3);
        let a = LinearMap::Dense(random_matrix(&mut rng, p, cols, 0.8));
        let b = LinearMap::Dense(random_matrix(&mut rng, p, q, 0.8));
        let c = random_vector(&mut rng, p, 0.5);
        let g = if with_smooth_parts && rng.random::<f64>() < 0.5 {
            let prox: Arc<dyn cliquewise::functions::ConvexFn> =
                Arc::new(L1Norm::new(q, 0.1).unwrap());
            let smooth =
                Quadratic::new(random_matrix(&mut rng, q, q, 0.15), DVector::zeros(q)).unwrap();
            Objective::split(prox, Arc::new(smooth)).unwrap()
        } else if rng.random::<f64>() < 0.5 {
            Objective::proximable(L1Norm::new(q, 0.1).unwrap())
        } else {
            Objective::zero(q)
        };
        blocks.push(CliqueBlock::new(clique.id(), a, b, c, g).unwrap());
    }
    let problem = CliqueProblem::new(graph, family, d, objectives, blocks).unwrap();

    let algo = if with_smooth_parts { Algo::ClFlipAdmm } else { Algo::ClAdmm };
    let m = problem.family().len();
    let gamma: Vec<f64> = (0..m).map(|_| 0.2 + 0.3 * rng.random::<f64>()).collect();
    let phi: Vec<f64> = (0..m).map(|_| 0.7 + 0.6 * rng.random::<f64>()).collect();
    let beta: Vec<f64> = (0..m)
        .map(|l| {
            let lam_b = problem.block(l).b().gram_lambda_max();
            let l_g = algo.effective_lipschitz(problem.block(l).g());
            1.0 / (gamma[l] * lam_b + 3.0 * l_g + 0.2)
        })
        .collect();
    let alpha: Vec<f64> = (1..=problem.n())
        .map(|i| {
            let coupling: f64 = problem
                .family()
                .agent_cliques(i)
                .unwrap()
                .iter()
                .map(|&l| gamma[l] * problem.block(l).a().gram_lambda_max())
                .sum();
            let denom = coupling + algo.effective_lipschitz(problem.agent_objective(i));
            (0.95 / denom).min(100.0)
        })
        .collect();
    let params = SolverParams::clique_wise(alpha, beta, gamma, phi).unwrap();
    let report = validate_clique_wise(&problem, &params, algo).unwrap();
    assert!(report.ok(), "constructed parameters must validate:\n{report}");
    (problem, params, algo)
}
