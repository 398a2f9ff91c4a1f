use thiserror::Error;

/// Errors surfaced by graph construction, problem assembly, and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} is out of range 1..={n}")]
    UnknownNode { node: usize, n: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("clique explosion: enumeration exceeded cap of {cap} cliques")]
    CliqueExplosion { cap: usize },

    #[error("{members:?} does not induce a complete subgraph (missing edge {{{i},{j}}})")]
    NotAClique { members: Vec<usize>, i: usize, j: usize },

    #[error("node {node} is not a member of clique {clique}")]
    NotAMember { node: usize, clique: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("function has no registered proximal mapping: {0}")]
    NoProx(String),

    #[error("aggregated form too large: {cols} columns exceeds cap {cap}")]
    AggregateTooLarge { cols: usize, cap: usize },

    #[error("iterate diverged at iteration {iteration} (norm {norm:.3e} exceeds guard {guard:.1e})")]
    Divergence { iteration: usize, norm: f64, guard: f64 },

    #[error("locality violation: agent {from} attempted to send to non-neighbor {to}")]
    LocalityViolation { from: usize, to: usize },

    #[error("clique {clique} copies diverged across members in round {round}")]
    CliqueCopyDivergence { clique: usize, round: usize },

    #[error("could not generate a connected graph within {attempts} attempts")]
    ConnectivityRetriesExhausted { attempts: usize },

    #[error("reference solve did not reach tolerance {tolerance:.1e} within {max_iterations} iterations (reached {achieved:.3e})")]
    ReferenceNotConverged { tolerance: f64, max_iterations: usize, achieved: f64 },

    #[error("parameter validation failed: {0}")]
    ValidationFailed(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
