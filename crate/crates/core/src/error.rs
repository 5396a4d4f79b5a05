use thiserror::Error;

use crate::network::{EdgeId, NodeId};
use crate::nf::NfSolution;

/// Problems with the network description or scenario data.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("network is disconnected: {} components {:?}", .components.len(), .components)]
    DisconnectedGraph { components: Vec<Vec<NodeId>> },
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("network has no slack node")]
    NoSlack,
    #[error("network has more than one slack node: {0:?}")]
    MultipleSlack(Vec<String>),
    #[error("edge {edge} is a self loop on node {node}")]
    SelfLoop { edge: EdgeId, node: NodeId },
    #[error("edge {edge} references node {node} outside 0..{num_nodes}")]
    UnknownNode {
        edge: EdgeId,
        node: NodeId,
        num_nodes: usize,
    },
    #[error("network has no nodes")]
    Empty,
    #[error("invalid dissipation law (delta = {delta}, alpha = {alpha}): delta must be > 0 and alpha >= 1")]
    InvalidLaw { delta: f64, alpha: f64 },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("negative pressure bound at node {0}")]
    NegativePressureBound(String),
    #[error("edge {0} has zero or negative friction")]
    ZeroFriction(String),
    #[error("edge {0} does not follow the quadratic gas law (alpha != 2)")]
    NotGasNetwork(EdgeId),
}

/// Failures of the network-flow solvers and the energy oracle built on them.
#[derive(Debug, Clone, Error)]
pub enum SolveError {
    #[error("Newton solve did not converge in {iterations} iterations (residual {residual:e})")]
    MaxIterationsExceeded {
        iterations: usize,
        residual: f64,
        best: Box<NfSolution>,
    },
    #[error("line search stalled after {iterations} iterations (residual {residual:e})")]
    LineSearchFailed {
        iterations: usize,
        residual: f64,
        best: Box<NfSolution>,
    },
    #[error("reduced Laplacian is not positive definite")]
    SingularHessian,
    #[error("flow violates conservation by {residual:e}")]
    InfeasibleFlow { residual: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl SolveError {
    /// The best iterate reached before the solver gave up, if any.
    pub fn best_iterate(&self) -> Option<&NfSolution> {
        match self {
            SolveError::MaxIterationsExceeded { best, .. }
            | SolveError::LineSearchFailed { best, .. } => Some(best),
            _ => None,
        }
    }
}

/// Failures of the max-throughput optimizers.
#[derive(Debug, Clone, Error)]
pub enum OptimizeError {
    #[error("scenario is infeasible: {0}")]
    InfeasibleScenario(String),
    #[error("outer loop did not converge in {iterations} iterations")]
    NotConverged {
        iterations: usize,
        best: Box<crate::throughput::ThroughputSolution>,
    },
    #[error("barrier method failed to converge: {0}")]
    BarrierNonconvergence(String),
    #[error("bounds refer to different instances: {0}")]
    MismatchedScenario(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
