//! Minimal library walkthrough: build a consensus instance on a path graph,
//! validate the suggested parameters, and run the proximal solver.

use std::sync::Arc;

use cliquewise::functions::{Objective, Quadratic};
use cliquewise::params::{suggest_params, validate};
use cliquewise::solver::{run, RunOptions};
use cliquewise::{build_consensus_problem, Algo, CliqueFamily, Graph, SolverState};
use nalgebra::{DMatrix, DVector};

fn main() -> cliquewise::Result<()> {
    let graph = Arc::new(Graph::path(3));
    let cliques = Arc::new(CliqueFamily::enumerate_maximal(&graph)?);
    let objectives = (0..3)
        .map(|i| {
            let target = DVector::from_element(2, i as f64);
            Ok(Objective::proximable(Quadratic::new(DMatrix::identity(2, 2), target)?))
        })
        .collect::<cliquewise::Result<Vec<_>>>()?;
    let problem = build_consensus_problem(graph, cliques, 2, objectives, &[0.0; 3])?;

    let params = suggest_params(&problem, Algo::ClAdmm)?;
    let report = validate(&problem, &params, Algo::ClAdmm)?;
    assert!(report.ok());

    let record = run(
        &problem,
        Algo::ClAdmm,
        &params,
        SolverState::zeros(&problem),
        &RunOptions::new(500),
        |_| {},
    )?;
    let last = record.rows.last().expect("metrics recorded");
    println!("coupling residual after {} iterations: {:e}", last.k, last.residual);
    println!("agent blocks: {:?}", record.final_state.x().as_slice());
    Ok(())
}
