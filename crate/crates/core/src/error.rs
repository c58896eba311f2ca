use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    Invalid(String),

    #[error("history tree would exceed the node budget ({budget} nodes)")]
    Capacity { budget: usize },

    #[error("negative demand {value} at node {node}")]
    Domain { node: usize, value: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
        /// Best iterate found.
        best: Option<Box<crate::equilibrium::SolveReport>>,
    },

    #[error("total demand is zero, average price undefined")]
    ZeroDemand,

    #[error("file not found: {0}")]
    NotFound(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
