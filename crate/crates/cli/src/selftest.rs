//! Quick property suites runnable without the test harness. Each suite
//! prints one pass/fail line; the process exits nonzero if any fails.

use std::sync::Arc;

use cliquewise::clique::CliqueFamily;
use cliquewise::experiment::{run_experiment, ExperimentConfig};
use cliquewise::functions::{soft_threshold, CliqueConsensus, Objective, Quadratic};
use cliquewise::graph::Graph;
use cliquewise::params::suggest_params;
use cliquewise::problem::build_consensus_problem;
use cliquewise::runtime::{Network, ShareMode};
use cliquewise::solver::{aggregated_step, cl_admm_step, cl_flip_admm_step, SolverState};
use cliquewise::{Algo, CliqueProblem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn random_consensus(seed: u64, n: usize, d: usize, proximable: bool) -> CliqueProblem {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let g = Arc::new(Graph::erdos_renyi_connected(n, 0.5, &mut rng, 1000).unwrap());
    let fam = Arc::new(CliqueFamily::enumerate_maximal(&g).unwrap());
    let fs: Vec<Objective> = (0..n)
        .map(|_| {
            let psi = DMatrix::identity(d, d)
                + DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() * 0.2 - 0.1);
            let b = DVector::from_fn(d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let quad = Quadratic::new(psi, b).unwrap();
            if proximable {
                Objective::proximable(quad)
            } else {
                Objective::smooth(quad).unwrap()
            }
        })
        .collect();
    build_consensus_problem(g, fam, d, fs, &vec![0.001; n]).unwrap()
}

fn adjoint_identity() -> bool {
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    for _ in 0..20 {
        let n = rng.random_range(3..=15);
        let g = Graph::erdos_renyi(n, 0.4, &mut rng).unwrap();
        let fam = CliqueFamily::enumerate_all(&g).unwrap();
        let d = rng.random_range(1..=3);
        let x = DVector::from_fn(n * d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let v = DVector::from_fn(fam.total_member_slots() * d, |_, _| {
            rng.random::<f64>() * 2.0 - 1.0
        });
        let lhs = fam.select(&x, d).unwrap().dot(&v);
        let rhs = x.dot(&fam.adjoint_select(&v, d).unwrap());
        if (lhs - rhs).abs() > 1e-12 * lhs.abs().max(1.0) {
            return false;
        }
    }
    true
}

fn enumeration_matches_brute_force() -> bool {
    let mut rng = ChaCha12Rng::seed_from_u64(102);
    for _ in 0..30 {
        let n = rng.random_range(1..=8);
        let g = Graph::erdos_renyi(n, 0.5, &mut rng).unwrap();
        let fam = CliqueFamily::enumerate_all(&g).unwrap();
        let mut brute = Vec::new();
        for mask in 1u32..(1 << n) {
            let set: Vec<usize> = (1..=n).filter(|i| mask & (1 << (i - 1)) != 0).collect();
            let complete = set
                .iter()
                .enumerate()
                .all(|(a, &i)| set[a + 1..].iter().all(|&j| g.has_edge(i, j)));
            if complete {
                brute.push(set);
            }
        }
        brute.sort();
        let got: Vec<Vec<usize>> =
            fam.cliques().iter().map(|c| c.members().to_vec()).collect();
        if got != brute {
            return false;
        }
    }
    true
}

fn prox_oracles() -> bool {
    let mut rng = ChaCha12Rng::seed_from_u64(103);
    let ternary = |obj: &dyn Fn(f64) -> f64| {
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
    };
    for _ in 0..40 {
        let v = rng.random::<f64>() * 6.0 - 3.0;
        let t = rng.random::<f64>() * 2.0 + 0.01;
        let want = ternary(&|y| t * y.abs() + 0.5 * (v - y).powi(2));
        if (soft_threshold(v, t) - want).abs() > 1e-6 {
            return false;
        }
    }
    for _ in 0..20 {
        let m = rng.random_range(2..=5);
        let coeffs: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 0.5).collect();
        let kappa_total: f64 = coeffs.iter().sum();
        let f = CliqueConsensus::new(m, 1, coeffs).unwrap();
        let v = DVector::from_fn(m, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let w: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.2).collect();
        let got = f.prox_weighted(&v, &w).unwrap();
        let want = ternary(&|xi| {
            v.iter()
                .zip(&w)
                .map(|(vj, wj)| 0.5 * wj * (vj - xi).powi(2))
                .sum::<f64>()
                + kappa_total * xi.abs()
        });
        if (got[0] - want).abs() > 1e-6 {
            return false;
        }
    }
    true
}

fn reduction_identity() -> bool {
    for seed in [201u64, 202, 203] {
        let p = random_consensus(seed, 5, 2, true);
        let params = suggest_params(&p, Algo::ClAdmm).unwrap();
        let mut a = SolverState::zeros(&p);
        let mut b = SolverState::zeros(&p);
        for _ in 0..25 {
            cl_admm_step(&p, &params, &mut a).unwrap();
            cl_flip_admm_step(&p, &params, &mut b).unwrap();
            if a.x() != b.x() || a.y() != b.y() || a.u() != b.u() {
                return false;
            }
        }
    }
    true
}

fn runtime_matches_oracle() -> bool {
    for seed in [301u64, 302, 303] {
        let p = random_consensus(seed, 6, 2, false);
        let agg = p.aggregate().unwrap();
        for algo in [Algo::ClAdmm, Algo::ClFlipAdmm] {
            let params = suggest_params(&p, algo).unwrap();
            let central = SolverState::zeros(&p);
            let mut net =
                Network::new(&p, &params, algo, ShareMode::Replicated, &central).unwrap();
            let mut dense = SolverState::zeros(&p);
            for _ in 0..50 {
                net.run_round().unwrap();
                aggregated_step(&agg, &params, &mut dense, algo).unwrap();
                let (x, y, u) = net.assemble();
                if (&x - dense.x()).norm() > 1e-10 {
                    return false;
                }
                for l in 0..p.blocks().len() {
                    if (&y[l] - &dense.y()[l]).norm() > 1e-10
                        || (&u[l] - &dense.u()[l]).norm() > 1e-10
                    {
                        return false;
                    }
                }
            }
            if net.locality_violations(&p) != 0 {
                return false;
            }
        }
    }
    true
}

fn experiment_determinism() -> bool {
    let dir_a = match tempdir() {
        Some(d) => d,
        None => return false,
    };
    let dir_b = match tempdir() {
        Some(d) => d,
        None => return false,
    };
    let mut cfg = ExperimentConfig::desk(5, dir_a.clone());
    cfg.n = 8;
    cfg.edge_prob = 0.4;
    cfg.d = 3;
    cfg.horizon = 300;
    cfg.lyapunov_check = false;
    let mut cfg_b = cfg.clone();
    cfg_b.output_dir = dir_b.clone();
    let a = run_experiment(&cfg, false);
    let b = run_experiment(&cfg_b, false);
    let ok = match (a, b) {
        (Ok(oa), Ok(_)) => oa.methods.iter().all(|m| {
            let name = format!("{}.csv", m.name);
            match (std::fs::read(dir_a.join(&name)), std::fs::read(dir_b.join(&name))) {
                (Ok(x), Ok(y)) => x == y,
                _ => false,
            }
        }),
        _ => false,
    };
    let _ = std::fs::remove_dir_all(&dir_a);
    let _ = std::fs::remove_dir_all(&dir_b);
    ok
}

fn tempdir() -> Option<std::path::PathBuf> {
    let base = std::env::temp_dir().join(format!(
        "cliquewise-selftest-{}-{:?}",
        std::process::id(),
        std::time::Instant::now()
    ));
    std::fs::create_dir_all(&base).ok()?;
    Some(base)
}

type Suite = (&'static str, fn() -> bool);

pub fn run_all() -> u8 {
    let suites: [Suite; 6] = [
        ("selection adjoint identity", adjoint_identity),
        ("clique enumeration vs brute force", enumeration_matches_brute_force),
        ("prox closed forms vs 1-d search", prox_oracles),
        ("linearized reduction identity", reduction_identity),
        ("runtime vs aggregated oracle", runtime_matches_oracle),
        ("experiment byte determinism", experiment_determinism),
    ];
    let mut failures = 0;
    for (name, suite) in suites {
        let ok = suite();
        println!("{}: {}", name, if ok { "pass" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    }
    if failures > 0 {
        1
    } else {
        0
    }
}
