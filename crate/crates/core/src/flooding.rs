//! Epidemic flooding: push every known value to every neighbor, every round.
//!
//! Push-to-all is the strongest single-round primitive, which makes the
//! static-graph oracle exact: on a static connected graph, the set of nodes
//! holding a value after round r is exactly the BFS ball of radius r around
//! its source. The beta target is a metric, not an enforcement mechanism:
//! runs are evaluated against coverage >= 1 - beta within a round budget.

use std::collections::BTreeMap;

use crate::digest::Digest;
use crate::engine::{Envelope, NodeId, NodeObservation, Protocol, Round, StepCtx};
use crate::error::GraphError;
use crate::graph::Graph;
use crate::metrics::{MetricsSeries, ProtocolMetrics};
use crate::rng::DetRng;

pub type FloodId = u64;

/// One flood value on the wire: identity, payload and the round its source
/// injected it (so late joiners can timestamp what they learn).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FloodValue {
    pub flood: FloodId,
    pub value: u64,
    pub origin_round: Round,
}

/// What a node remembers about one flood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FloodInfo {
    pub value: u64,
    pub first_seen: Round,
    pub origin_round: Round,
}

/// Per-node flooding state. Knowledge is monotone while the node lives.
#[derive(Debug, Clone, Default)]
pub struct FloodState {
    pub known: BTreeMap<FloodId, FloodInfo>,
    pub last_update: Option<Round>,
}

/// A flood message: the sender's entire known set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FloodMsg(pub Vec<FloodValue>);

/// One value to inject at round 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FloodSpec {
    pub flood: FloodId,
    pub value: u64,
    /// Must be an initial node id (< n); floods start at round 0.
    pub source: NodeId,
}

/// The flooding protocol: inject the configured values at their sources,
/// then push-to-all forever.
#[derive(Debug, Clone)]
pub struct FloodingProtocol {
    pub floods: Vec<FloodSpec>,
}

impl FloodingProtocol {
    /// Single flood (id 0) from the given source.
    pub fn single(source: NodeId) -> Self {
        FloodingProtocol {
            floods: vec![FloodSpec {
                flood: 0,
                value: 0,
                source,
            }],
        }
    }
}

/// One synchronous flooding step: absorb the inbox, then forward everything
/// known to every neighbor. Newly arrived nodes know nothing yet and so
/// forward nothing in their first round.
pub fn flood_step(
    state: &mut FloodState,
    inbox: &[Envelope<FloodMsg>],
    neighbors: &[NodeId],
    round: Round,
) -> Vec<(NodeId, FloodMsg)> {
    let before = state.known.len();
    for env in inbox {
        for item in &env.msg.0 {
            state.known.entry(item.flood).or_insert(FloodInfo {
                value: item.value,
                first_seen: round,
                origin_round: item.origin_round,
            });
        }
    }
    debug_assert!(state.known.len() >= before, "knowledge is monotone");
    if state.known.len() > before {
        state.last_update = Some(round);
    }
    if state.known.is_empty() {
        return Vec::new();
    }
    let payload: Vec<FloodValue> = state
        .known
        .iter()
        .map(|(&flood, info)| FloodValue {
            flood,
            value: info.value,
            origin_round: info.origin_round,
        })
        .collect();
    neighbors
        .iter()
        .map(|&to| (to, FloodMsg(payload.clone())))
        .collect()
}

impl Protocol for FloodingProtocol {
    type State = FloodState;
    type Msg = FloodMsg;

    fn init(&mut self, node: NodeId, round: Round, _rng: &mut DetRng) -> FloodState {
        let mut state = FloodState::default();
        if round == Round(0) {
            for spec in self.floods.iter().filter(|s| s.source == node) {
                state.known.insert(
                    spec.flood,
                    FloodInfo {
                        value: spec.value,
                        first_seen: Round(0),
                        origin_round: Round(0),
                    },
                );
                state.last_update = Some(Round(0));
            }
        }
        state
    }

    fn step(
        &mut self,
        ctx: &StepCtx<'_>,
        state: &mut FloodState,
        inbox: &[Envelope<FloodMsg>],
        _rng: &mut DetRng,
    ) -> Vec<(NodeId, FloodMsg)> {
        flood_step(state, inbox, ctx.neighbors, ctx.round)
    }

    fn observe(&self, state: &FloodState) -> NodeObservation {
        NodeObservation {
            last_update: state.last_update,
            items: state.known.len() as u64,
        }
    }

    fn digest_state(&self, state: &FloodState, d: &mut Digest) {
        d.write_u64(state.known.len() as u64);
        for (flood, info) in &state.known {
            d.write_u64(*flood);
            d.write_u64(info.value);
            d.write_u32(info.first_seen.0);
            d.write_u32(info.origin_round.0);
        }
        d.write_u32(state.last_update.map_or(u32::MAX, |r| r.0));
    }

    fn digest_msg(&self, msg: &FloodMsg, d: &mut Digest) {
        d.write_u64(msg.0.len() as u64);
        for item in &msg.0 {
            d.write_u64(item.flood);
            d.write_u64(item.value);
            d.write_u32(item.origin_round.0);
        }
    }

    fn msg_bits(&self, msg: &FloodMsg) -> u64 {
        msg.0.len() as u64 * (64 + 64 + 32)
    }

    fn metrics(&self, states: &BTreeMap<NodeId, FloodState>) -> ProtocolMetrics {
        ProtocolMetrics {
            coverage: self
                .floods
                .first()
                .map(|spec| measure_coverage(states, spec.flood)),
            ..ProtocolMetrics::default()
        }
    }
}

/// Exact fraction of live nodes holding the flood value.
pub fn measure_coverage(states: &BTreeMap<NodeId, FloodState>, flood: FloodId) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    let holding = states.values().filter(|s| s.known.contains_key(&flood)).count();
    holding as f64 / states.len() as f64
}

/// Coverage trajectory of a run, against a beta target.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    /// (round, coverage) for every round that recorded coverage.
    pub per_round: Vec<(u32, f64)>,
    /// First round with coverage >= 1 - beta, if any. Coverage need not be
    /// monotone under churn, so this is a first-passage time.
    pub rounds_to_threshold: Option<u32>,
}

pub fn coverage_report(metrics: &MetricsSeries, beta: f64) -> CoverageReport {
    let per_round = metrics.coverage_series();
    let rounds_to_threshold = per_round
        .iter()
        .find(|(_, c)| *c >= 1.0 - beta)
        .map(|(r, _)| *r);
    CoverageReport {
        per_round,
        rounds_to_threshold,
    }
}

/// Rounds for push-to-all flooding to cover a static connected graph from
/// `source`: exactly the BFS eccentricity of the source. This is the test
/// oracle for static-graph flooding.
pub fn rounds_to_cover_oracle(g: &Graph, source: NodeId) -> Result<u32, GraphError> {
    if !g.has_node(source) {
        return Err(GraphError::UnknownNode(source));
    }
    let mut dist: BTreeMap<NodeId, u32> = BTreeMap::new();
    dist.insert(source, 0);
    let mut frontier = vec![source];
    let mut ecc = 0;
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for v in frontier {
            let dv = dist[&v];
            for u in g.neighbors(v) {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(u) {
                    e.insert(dv + 1);
                    ecc = ecc.max(dv + 1);
                    next.push(u);
                }
            }
        }
        frontier = next;
    }
    if dist.len() != g.n() {
        return Err(GraphError::NotConnected);
    }
    Ok(ecc)
}

/// BFS ball of radius `r` around `source`, as a node count. Together with
/// [`rounds_to_cover_oracle`] this is the exact oracle for per-round coverage
/// on static graphs.
pub fn bfs_ball_size(g: &Graph, source: NodeId, r: u32) -> usize {
    let mut dist: BTreeMap<NodeId, u32> = BTreeMap::new();
    dist.insert(source, 0);
    let mut frontier = vec![source];
    let mut d = 0;
    while !frontier.is_empty() && d < r {
        d += 1;
        let mut next = Vec::new();
        for v in frontier {
            for u in g.neighbors(v) {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(u) {
                    e.insert(d);
                    next.push(u);
                }
            }
        }
        frontier = next;
    }
    dist.len()
}
