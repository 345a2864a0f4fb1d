//! Deterministic round-synchronous execution engine.
//!
//! Every round runs four phases in a fixed order:
//!
//! 1. **churn** — the adversary's action is validated and applied: departed
//!    nodes vanish with their state, paired arrivals join with fresh ids and
//!    empty protocol state, and the topology is rewired (by the adversary in
//!    adversarial mode, by cycle repair in self-maintained mode).
//! 2. **deliver** — messages collected in the previous round's send phase
//!    reach recipients that are still live; messages addressed to nodes
//!    churned out this round are silently dropped, which is exactly the
//!    adversary's suppression power.
//! 3. **step** — every live node's step function runs on its inbox. Each
//!    node draws randomness from a stream derived from (seed, node, round),
//!    so draws are independent of iteration order.
//! 4. **send** — outgoing messages are collected for delivery next round.
//!
//! Round 0 is construction: nodes are initialized and immediately step once
//! on an empty inbox, so sources emit their first pushes before the first
//! adversary move. Each phase appends exactly one digest event to the
//! transcript; equal seeds and configs therefore reproduce byte-identical
//! transcripts.

use std::collections::BTreeMap;
use std::fmt;

use crate::adversary::{validate_action, ChurnAction};
use crate::config::{RunConfig, TopologyMode};
use crate::cycles::{refresh_cycles, CycleBundle};
use crate::digest::Digest;
use crate::error::SimError;
use crate::graph::{gen_random_regular, Graph};
use crate::metrics::{MetricsSeries, ProtocolMetrics, RoundMetrics};
use crate::rng::{tag, DetRng};
use crate::spectral::spectral_gap;
use crate::transcript::{EventKind, Transcript, TranscriptBuilder};

/// Node identity: unique within a run, never reused after churn-out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Round counter, starting at 0 and incremented once per engine step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Round(pub u32);

impl Round {
    pub fn next(self) -> Round {
        Round(self.0 + 1)
    }
}

impl fmt::Display for Round {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A message in flight.
#[derive(Debug, Clone)]
pub struct Envelope<M> {
    pub from: NodeId,
    pub to: NodeId,
    pub msg: M,
}

/// What a node knows when it steps.
pub struct StepCtx<'a> {
    pub node: NodeId,
    pub round: Round,
    /// Round the node joined the network (0 for initial members).
    pub joined: Round,
    /// Current neighbors, sorted.
    pub neighbors: &'a [NodeId],
}

/// Protocol-public view of one node, exposed to adaptive adversaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeObservation {
    /// Round the node's protocol state last changed, if ever.
    pub last_update: Option<Round>,
    /// How much the node knows (protocol-specific count, e.g. values held).
    pub items: u64,
}

/// A per-node protocol: pure step functions plus the hooks the engine needs
/// for transcripts, metrics and adversary observation. The engine owns all
/// state mutation; `&mut self` exists so a protocol can keep run-level
/// records (e.g. every input ever injected).
pub trait Protocol {
    type State;
    type Msg: Clone;

    /// State of a node joining in `round` (initial members join at round 0).
    fn init(&mut self, node: NodeId, round: Round, rng: &mut DetRng) -> Self::State;

    /// One synchronous step: consume the inbox, mutate the state, return
    /// outgoing (recipient, message) pairs for delivery next round.
    fn step(
        &mut self,
        ctx: &StepCtx<'_>,
        state: &mut Self::State,
        inbox: &[Envelope<Self::Msg>],
        rng: &mut DetRng,
    ) -> Vec<(NodeId, Self::Msg)>;

    fn observe(&self, state: &Self::State) -> NodeObservation;

    /// Compact commitment of a node state for transcript events.
    fn digest_state(&self, state: &Self::State, d: &mut Digest);

    /// Compact commitment of a message for transcript events.
    fn digest_msg(&self, msg: &Self::Msg, d: &mut Digest);

    /// Size accounting for the bits_sent metric.
    fn msg_bits(&self, msg: &Self::Msg) -> u64;

    fn metrics(&self, states: &BTreeMap<NodeId, Self::State>) -> ProtocolMetrics;
}

/// Full network state between rounds.
pub struct NetworkState<P: Protocol> {
    pub round: Round,
    pub graph: Graph,
    pub states: BTreeMap<NodeId, P::State>,
    /// Join round per live node.
    pub joined: BTreeMap<NodeId, Round>,
    /// Messages sent last round, awaiting delivery.
    pub in_flight: Vec<Envelope<P::Msg>>,
    /// Lowest id never used; arrivals must take ids from here upward.
    pub next_fresh: u64,
}

impl<P: Protocol> NetworkState<P> {
    /// Live population size.
    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn live(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.states.keys().copied()
    }
}

/// What an adaptive adversary may see before choosing its action: topology
/// and protocol-public per-node state, but no future randomness.
pub struct ObservableState<'a> {
    pub round: Round,
    pub graph: &'a Graph,
    pub observations: &'a BTreeMap<NodeId, NodeObservation>,
    pub next_fresh: u64,
}

/// Per-round churn decision maker. Strategies are stateful per run.
pub trait Adversary {
    fn next_action(&mut self, view: &ObservableState<'_>) -> ChurnAction;
}

impl<A: Adversary + ?Sized> Adversary for Box<A> {
    fn next_action(&mut self, view: &ObservableState<'_>) -> ChurnAction {
        (**self).next_action(view)
    }
}

impl<A: Adversary + ?Sized> Adversary for &mut A {
    fn next_action(&mut self, view: &ObservableState<'_>) -> ChurnAction {
        (**self).next_action(view)
    }
}

/// Everything a finished run produces.
pub struct SimOutput<P: Protocol> {
    pub final_state: NetworkState<P>,
    pub transcript: Transcript,
    pub metrics: MetricsSeries,
    /// The protocol instance, returned for post-run measurement.
    pub protocol: P,
}

/// The engine for one run: owns the protocol, transcript, metrics and (in
/// self-maintained mode) the cycle bundle.
pub struct Engine<P: Protocol> {
    config: RunConfig,
    protocol: P,
    transcript: TranscriptBuilder,
    metrics: MetricsSeries,
    bundle: Option<CycleBundle>,
}

impl<P: Protocol> Engine<P> {
    /// Validate the config, build the initial topology and node states, and
    /// run the round-0 construction step.
    pub fn new(config: RunConfig, mut protocol: P) -> Result<(Self, NetworkState<P>), SimError> {
        config.validate()?;
        let seed = config.seed;
        let ids: Vec<NodeId> = (0..config.n).map(NodeId).collect();

        let (graph, bundle) = match config.mode {
            TopologyMode::Adversarial => {
                let graph = match &config.initial_graph {
                    Some(g) => g.clone(),
                    None => gen_random_regular(
                        config.n,
                        config.degree,
                        &mut DetRng::stream(seed, &[tag::TOPOLOGY]),
                    )?,
                };
                (graph, None)
            }
            TopologyMode::SelfMaintained => {
                let bundle = CycleBundle::new_random(
                    &ids,
                    config.cycle_count(),
                    &mut DetRng::stream(seed, &[tag::CYCLE_INIT]),
                );
                (bundle.union_graph(), Some(bundle))
            }
        };

        let mut states = BTreeMap::new();
        let mut joined = BTreeMap::new();
        for &id in &ids {
            let mut rng = DetRng::stream(seed, &[tag::NODE_INIT, id.0, 0]);
            states.insert(id, protocol.init(id, Round(0), &mut rng));
            joined.insert(id, Round(0));
        }

        let mut state = NetworkState {
            round: Round(0),
            graph,
            states,
            joined,
            in_flight: Vec::new(),
            next_fresh: config.n,
        };

        let mut engine = Engine {
            transcript: TranscriptBuilder::new(seed, config.digest()),
            config,
            protocol,
            metrics: MetricsSeries::default(),
            bundle,
        };

        let mut d = Digest::new();
        d.write_u64(state.n() as u64);
        digest_graph(&state.graph, &mut d);
        engine.digest_states(&state, &mut d);
        engine.transcript.push(0, EventKind::Init, d.finish());

        // Round-0 construction step on empty inboxes: sources and fresh
        // sketches get on the wire before the first adversary move.
        let (outbox, _) = engine.step_phase(&mut state, &BTreeMap::new(), Round(0));
        let mut d = Digest::new();
        engine.digest_states(&state, &mut d);
        engine.transcript.push(0, EventKind::Step, d.finish());

        let mut d = Digest::new();
        engine.digest_envelopes(&outbox, &mut d);
        engine.transcript.push(0, EventKind::Send, d.finish());
        state.in_flight = outbox;

        Ok((engine, state))
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn protocol(&self) -> &P {
        &self.protocol
    }

    /// Protocol-public observations for the adversary.
    pub fn observations(&self, state: &NetworkState<P>) -> BTreeMap<NodeId, NodeObservation> {
        state
            .states
            .iter()
            .map(|(&id, s)| (id, self.protocol.observe(s)))
            .collect()
    }

    /// Execute one full round. The action must come from the adversary for
    /// exactly this round; an invalid action aborts the run.
    pub fn run_round(
        &mut self,
        mut state: NetworkState<P>,
        action: ChurnAction,
    ) -> Result<NetworkState<P>, SimError> {
        let round = state.round.next();
        if let Err(violation) = validate_action(&action, &state, &self.config) {
            return Err(SimError::InvalidAction {
                round: round.0,
                violation,
            });
        }

        // Phase 1: churn.
        self.apply_churn(&mut state, &action, round)?;
        debug_assert_eq!(state.n() as u64, self.config.n, "population conservation");
        let mut d = Digest::new();
        d.write_u64(action.depart.len() as u64);
        for id in &action.depart {
            d.write_u64(id.0);
        }
        d.write_u64(action.arrive.len() as u64);
        for id in &action.arrive {
            d.write_u64(id.0);
        }
        digest_graph(&state.graph, &mut d);
        self.transcript.push(round.0, EventKind::Churn, d.finish());

        // Phase 2: deliver to still-live recipients.
        let mut delivered: Vec<Envelope<P::Msg>> = std::mem::take(&mut state.in_flight)
            .into_iter()
            .filter(|e| state.states.contains_key(&e.to))
            .collect();
        delivered.sort_by_key(|e| (e.to, e.from));
        let mut d = Digest::new();
        self.digest_envelopes(&delivered, &mut d);
        self.transcript.push(round.0, EventKind::Deliver, d.finish());
        let mut inboxes: BTreeMap<NodeId, Vec<Envelope<P::Msg>>> = BTreeMap::new();
        for e in delivered {
            inboxes.entry(e.to).or_default().push(e);
        }

        // Phase 3: step every live node.
        let (outbox, bits) = self.step_phase(&mut state, &inboxes, round);
        let mut d = Digest::new();
        self.digest_states(&state, &mut d);
        self.transcript.push(round.0, EventKind::Step, d.finish());

        // Phase 4: collect sends.
        let mut d = Digest::new();
        self.digest_envelopes(&outbox, &mut d);
        self.transcript.push(round.0, EventKind::Send, d.finish());
        state.in_flight = outbox;
        state.round = round;

        let pm = self.protocol.metrics(&state.states);
        let gap = self.gap_metric(&state, round);
        self.metrics.push(RoundMetrics {
            round: round.0,
            coverage: pm.coverage,
            agree_fraction: pm.agree_fraction,
            undecided_fraction: pm.undecided_fraction,
            n_hat_median: pm.n_hat_median,
            spectral_gap: gap,
            bits_sent: bits,
        });
        Ok(state)
    }

    /// Consume the engine after the horizon.
    pub fn finish(self) -> (Transcript, MetricsSeries, P) {
        (self.transcript.finish(), self.metrics, self.protocol)
    }

    fn apply_churn(
        &mut self,
        state: &mut NetworkState<P>,
        action: &ChurnAction,
        round: Round,
    ) -> Result<(), SimError> {
        if action.depart.is_empty() && action.arrive.is_empty() && action.new_adjacency.is_none() {
            return Ok(());
        }
        for id in &action.depart {
            state.states.remove(id);
            state.joined.remove(id);
        }
        match self.config.mode {
            TopologyMode::SelfMaintained => {
                if !action.depart.is_empty() || !action.arrive.is_empty() {
                    let bundle = self.bundle.as_ref().expect("self-maintained bundle");
                    let next = refresh_cycles(
                        bundle,
                        &action.depart,
                        &action.arrive,
                        &mut DetRng::stream(self.config.seed, &[tag::CYCLE_REFRESH, round.0 as u64]),
                    )?;
                    state.graph = next.union_graph();
                    self.bundle = Some(next);
                }
            }
            TopologyMode::Adversarial => match &action.new_adjacency {
                Some(edges) => {
                    let nodes = state
                        .states
                        .keys()
                        .copied()
                        .chain(action.arrive.iter().copied());
                    // Endpoint validity was checked by validate_action.
                    state.graph = Graph::from_edges(nodes, edges.iter().copied())?;
                }
                None => {
                    // Substitution rewiring: each arrival inherits the edges
                    // of the departed node it replaces (paired in sorted
                    // order), so the topology stays isomorphic.
                    let map: BTreeMap<NodeId, NodeId> = action
                        .depart
                        .iter()
                        .copied()
                        .zip(action.arrive.iter().copied())
                        .collect();
                    if !map.is_empty() {
                        let remap = |v: NodeId| map.get(&v).copied().unwrap_or(v);
                        let nodes: Vec<NodeId> = state.graph.nodes().map(remap).collect();
                        let edges: Vec<(NodeId, NodeId)> = state
                            .graph
                            .edges()
                            .map(|(u, v)| (remap(u), remap(v)))
                            .collect();
                        state.graph = Graph::from_edges(nodes, edges)?;
                    }
                }
            },
        }
        for &id in &action.arrive {
            let mut rng = DetRng::stream(self.config.seed, &[tag::NODE_INIT, id.0, round.0 as u64]);
            state.states.insert(id, self.protocol.init(id, round, &mut rng));
            state.joined.insert(id, round);
            state.next_fresh = state.next_fresh.max(id.0 + 1);
        }
        debug_assert!(
            state.graph.nodes().eq(state.states.keys().copied()),
            "adjacency must reference exactly the live nodes"
        );
        Ok(())
    }

    /// Run phase 3 for every live node; returns (outbox, total bits).
    fn step_phase(
        &mut self,
        state: &mut NetworkState<P>,
        inboxes: &BTreeMap<NodeId, Vec<Envelope<P::Msg>>>,
        round: Round,
    ) -> (Vec<Envelope<P::Msg>>, u64) {
        let empty: Vec<Envelope<P::Msg>> = Vec::new();
        let mut outbox = Vec::new();
        let mut bits = 0u64;
        let mut nbuf: Vec<NodeId> = Vec::new();
        let ids: Vec<NodeId> = state.states.keys().copied().collect();
        for id in ids {
            nbuf.clear();
            nbuf.extend(state.graph.neighbors(id));
            let ctx = StepCtx {
                node: id,
                round,
                joined: state.joined[&id],
                neighbors: &nbuf,
            };
            let mut rng = DetRng::stream(self.config.seed, &[tag::NODE_STEP, id.0, round.0 as u64]);
            let inbox = inboxes.get(&id).unwrap_or(&empty);
            let st = state.states.get_mut(&id).expect("live node state");
            for (to, msg) in self.protocol.step(&ctx, st, inbox, &mut rng) {
                bits += self.protocol.msg_bits(&msg);
                outbox.push(Envelope { from: id, to, msg });
            }
        }
        (outbox, bits)
    }

    fn digest_states(&self, state: &NetworkState<P>, d: &mut Digest) {
        d.write_u64(state.states.len() as u64);
        for (id, s) in &state.states {
            d.write_u64(id.0);
            self.protocol.digest_state(s, d);
        }
    }

    fn digest_envelopes(&self, envelopes: &[Envelope<P::Msg>], d: &mut Digest) {
        d.write_u64(envelopes.len() as u64);
        for e in envelopes {
            d.write_u64(e.from.0);
            d.write_u64(e.to.0);
            self.protocol.digest_msg(&e.msg, d);
        }
    }

    fn gap_metric(&self, state: &NetworkState<P>, round: Round) -> Option<f64> {
        let every = self.config.gap_every;
        if every == 0 || !round.0.is_multiple_of(every) {
            return None;
        }
        let mut rng = DetRng::stream(self.config.seed, &[tag::GAP_METRIC, round.0 as u64]);
        spectral_gap(&state.graph, 1e-6, 2000, &mut rng)
            .ok()
            .map(|r| r.gap)
    }
}

fn digest_graph(g: &Graph, d: &mut Digest) {
    d.write_u64(g.n() as u64);
    d.write_u64(g.edge_count() as u64);
    for (u, v) in g.edges() {
        d.write_u64(u.0);
        d.write_u64(v.0);
    }
}

/// Run a full simulation: `rounds` engine steps driven by the adversary.
pub fn run_simulation<P: Protocol, A: Adversary>(
    config: RunConfig,
    mut adversary: A,
    protocol: P,
) -> Result<SimOutput<P>, SimError> {
    let rounds = config.rounds;
    let (mut engine, mut state) = Engine::new(config, protocol)?;
    for _ in 0..rounds {
        let observations = engine.observations(&state);
        let action = adversary.next_action(&ObservableState {
            round: state.round,
            graph: &state.graph,
            observations: &observations,
            next_fresh: state.next_fresh,
        });
        state = engine.run_round(state, action)?;
    }
    let (transcript, metrics, protocol) = engine.finish();
    Ok(SimOutput {
        final_state: state,
        transcript,
        metrics,
        protocol,
    })
}

/// Outcome of replaying a transcript against a config.
#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub matches: bool,
    /// (event index, expected line, recomputed line) of the first divergence.
    pub first_divergence: Option<(usize, String, String)>,
}

/// Re-execute and compare against a stored transcript.
///
/// The adversary and protocol must be fresh instances constructed exactly as
/// for the original run; the config digest embedded in the transcript guards
/// against replaying with the wrong config (including a different seed).
pub fn replay_report<P: Protocol, A: Adversary>(
    transcript: &Transcript,
    config: &RunConfig,
    adversary: A,
    protocol: P,
) -> Result<ReplayReport, SimError> {
    if transcript.config_digest != config.digest() || transcript.seed != config.seed {
        return Err(SimError::ConfigMismatch);
    }
    let fresh = run_simulation(config.clone(), adversary, protocol)?;
    let first_divergence = transcript.first_divergence(&fresh.transcript);
    Ok(ReplayReport {
        matches: first_divergence.is_none(),
        first_divergence,
    })
}

/// True iff re-execution reproduces the transcript (events and final hash).
pub fn replay_check<P: Protocol, A: Adversary>(
    transcript: &Transcript,
    config: &RunConfig,
    adversary: A,
    protocol: P,
) -> Result<bool, SimError> {
    Ok(replay_report(transcript, config, adversary, protocol)?.matches)
}
