//! Clique-coupled distributed optimization.
//!
//! Agents on an undirected communication graph minimize a sum of private
//! objectives plus per-clique objectives tied together by linear coupling
//! constraints over each clique's members. The solvers are synchronous
//! proximal/linearized splitting iterations whose parameters, and the
//! conditions guaranteeing convergence, depend only on information local to
//! each agent and its cliques.
//!
//! Module map:
//! * [`graph`], [`clique`] — graphs, clique families, the selection operator.
//! * [`functions`] — convex function toolkit with proximal mappings.
//! * [`problem`] — problem assembly and the dense aggregated form.
//! * [`params`], [`solver`], [`lyapunov`] — parameters, validators, steps,
//!   the descent monitor.
//! * [`pg_extra`] — the decentralized proximal-gradient baseline.
//! * [`runtime`] — locality-enforcing message-passing execution.
//! * [`experiment`] — instance generation and the experiment driver.

pub mod clique;
pub mod error;
pub mod experiment;
pub mod functions;
pub mod graph;
pub mod linalg;
pub mod lyapunov;
pub mod params;
pub mod pg_extra;
pub mod problem;
pub mod runtime;
pub mod solver;

pub use clique::{Clique, CliqueFamily, CliqueMode};
pub use error::{Error, Result};
pub use functions::{Diag, Objective, Value};
pub use graph::Graph;
pub use params::{Algo, ParamMode, SolverParams, ValidationReport};
pub use problem::{build_consensus_problem, AggregatedProblem, CliqueBlock, CliqueProblem};
pub use solver::{RunOptions, RunRecord, RunStatus, SolverState};
