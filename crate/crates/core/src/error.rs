use thiserror::Error;

/// Errors raised by graph ingestion, chain construction, simulation and analytics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: self-loop on node {node} is not allowed")]
    SelfLoop { line: usize, node: i64 },

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("graph is not connected ({components} components)")]
    Disconnected { components: usize },

    #[error("node {node} out of range for graph with {node_count} nodes")]
    NodeOutOfRange { node: usize, node_count: usize },

    #[error("cannot place {edges} edges on {nodes} nodes (max {max})")]
    InfeasibleEdgeCount { nodes: usize, edges: usize, max: usize },

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("invalid transition matrix: {0}")]
    InvalidKernel(String),

    #[error("kernel is not reversible: symmetrization residual {residual:e}")]
    NonReversible { residual: f64 },

    #[error("chain is not ergodic (SLEM {slem})")]
    NonErgodic { slem: f64 },

    #[error("measure leaves the interior of the simplex at node {node} (value {value:e})")]
    Domain { node: usize, value: f64 },

    #[error("invalid repellence parameter alpha = {0} (must be finite and > -0.5)")]
    InvalidAlpha(f64),

    #[error("alpha = {alpha} outside supported range: {reason}")]
    OutOfTheory { alpha: f64, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("integration failed at t = {t}: step size fell below {min_dt:e}")]
    Integration { t: f64, min_dt: f64 },

    #[error("quadrature horizon {horizon} too short for tolerance; need at least {suggested:.3}")]
    QuadratureHorizon { horizon: f64, suggested: f64 },

    #[error("observable has no component outside span{{1}}; reduction ratio undefined")]
    UndefinedLambda,

    #[error("{0} requires at least {1} samples")]
    NotEnoughSamples(&'static str, usize),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by malformed input or configuration rather than
    /// by the numerics. A periodic chain (a walk on a bipartite graph) counts
    /// as input.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::SelfLoop { .. }
                | Error::EmptyGraph
                | Error::Disconnected { .. }
                | Error::NodeOutOfRange { .. }
                | Error::InfeasibleEdgeCount { .. }
                | Error::InvalidDistribution(_)
                | Error::InvalidKernel(_)
                | Error::InvalidAlpha(_)
                | Error::NonErgodic { .. }
                | Error::Config(_)
        )
    }
}
