//! Error types shared across the simulator.

use thiserror::Error;

use crate::engine::NodeId;

/// Graph construction and analysis failures.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("infeasible degree: n={n}, d={d} (need n*d even and d < n)")]
    InfeasibleDegree { n: u64, d: u32 },
    #[error("random regular generation exhausted {0} retries")]
    RetryExhausted(u32),
    #[error("graph is not connected")]
    NotConnected,
    #[error("self loop at node {0}")]
    SelfLoop(NodeId),
    #[error("edge references unknown node {0}")]
    UnknownNode(NodeId),
    #[error("malformed edge list at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Cycle-bundle maintenance failures.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CycleError {
    #[error("refresh would leave the network empty")]
    EmptyNetwork,
    #[error("departed set does not match live cycle membership")]
    UnknownDeparture,
}

/// Size-sketch failures.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SketchError {
    #[error("sketch needs k >= 2, got {0}")]
    BadK(usize),
    #[error("sketch width mismatch: {0} vs {1}")]
    KMismatch(usize, usize),
    #[error("sum of minima is zero; estimate undefined")]
    DegenerateSum,
    #[error("malformed sketch dump at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Why a churn action was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ActionViolation {
    #[error("replacement count exceeds churn budget")]
    BudgetExceeded,
    #[error("depart set contains dead ids or arrive set reuses ids")]
    StaleIds,
    #[error("proposed topology is disconnected")]
    Disconnected,
    #[error("proposed topology's spectral gap is below the constraint")]
    GapTooSmall,
    #[error("depart and arrive sets differ in size")]
    Unbalanced,
    #[error("adversary supplied adjacency in self-maintained mode")]
    AdjacencyForbidden,
}

/// Transcript parsing failures.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranscriptError {
    #[error("malformed transcript at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("transcript is missing its FINAL line")]
    MissingFinal,
}

/// Top-level simulation failures.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("adversary emitted an invalid action in round {round}: {violation}")]
    InvalidAction {
        round: u32,
        violation: ActionViolation,
    },
    #[error("transcript config digest does not match the supplied config")]
    ConfigMismatch,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Cycle(#[from] CycleError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
}
