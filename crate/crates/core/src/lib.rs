//! Deterministic round-synchronous simulator for agreement protocols in
//! dynamic networks under adversarial churn.
//!
//! The pieces:
//!
//! * [`engine`] — the round executor: churn, deliver, step, send, with a
//!   hash-chained transcript for bit-exact replay.
//! * [`graph`], [`spectral`], [`cycles`] — topology: random regular graphs,
//!   spectral gap estimation, and expander maintenance from Hamilton cycles.
//! * [`adversary`] — oblivious and adaptive churn strategies plus action
//!   validation.
//! * [`flooding`] — the epidemic push primitive and its coverage metrics.
//! * [`aggregation`] — network-size estimation from minima of exponential
//!   draws, min-merged through the network.
//! * [`agreement`] — almost-everywhere binary agreement composed from the
//!   two primitives, in a cheap variant and an adaptive-resistant one.
//!
//! Everything is deterministic given a [`config::RunConfig`]: node draws
//! come from counter-based streams derived from (seed, node, round), so a
//! run can be replayed and checked against its transcript.

pub mod adversary;
pub mod aggregation;
pub mod agreement;
pub mod config;
pub mod cycles;
pub mod digest;
pub mod engine;
pub mod error;
pub mod flooding;
pub mod graph;
pub mod metrics;
pub mod rng;
pub mod spectral;
pub mod transcript;

pub use adversary::{
    build_adversary, oblivious_schedule, schedule_from_text, schedule_to_text, validate_action,
    AdversaryConfig, ChurnAction,
};
pub use config::{ProtocolKind, RunConfig, StrategyKind, TopologyMode};
pub use engine::{
    replay_check, replay_report, run_simulation, Adversary, Engine, NetworkState, NodeId,
    Protocol, Round, SimOutput,
};
pub use error::SimError;
pub use metrics::{MetricsSeries, RoundMetrics};
pub use transcript::Transcript;
