//! Almost-everywhere binary agreement over flooding and size estimation.
//!
//! Every node floods its (origin id, input bit) pair, merges size sketches
//! to learn n_hat, and after ceil(c_t * log2(n_hat)) rounds of collection
//! decides the majority bit over the distinct origins it has seen (ties to
//! 0). Decided nodes flood their decision every round so replacement nodes
//! can adopt it instead of deciding from a necessarily incomplete tally.
//!
//! Only origins that had at least half a horizon to spread are counted at
//! decision time: fully-propagated pairs are held by every long-lived node,
//! so the deciders' counted tallies coincide and a hair-thin global margin
//! cannot split them over values still in flight.
//!
//! Two variants share this structure and differ only in what they put on the
//! wire while collecting:
//!
//! * **low-communication**: a pair is forwarded once, the round after the
//!   node learns it. Cheap, but a value's spread has a frontier an adaptive
//!   adversary can chase.
//! * **high-communication**: the full tally is re-flooded every round, so an
//!   origin survives anywhere it has ever been replicated; the cost grows
//!   polynomially with the tally size, which is the price of adaptivity.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::aggregation::{draw_sketch, estimate, SizeSketch};
use crate::digest::Digest;
use crate::engine::{Envelope, NodeId, NodeObservation, Protocol, Round, StepCtx};
use crate::metrics::{median, ProtocolMetrics};
use crate::rng::DetRng;

/// How a node's inputs are assigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputAssign {
    /// Every node (initial and churned-in) draws a fair input bit.
    Iid,
    /// Every node gets the same input.
    Constant(bool),
    /// Initial nodes get `v[id]`; arrivals fall back to fair draws.
    Vector(Vec<bool>),
}

/// Wire variants of the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgreeVariant {
    LowCommunication,
    HighCommunication,
}

/// Protocol phase. `Decide` is the round the decision is made; from the next
/// round on the node is `Done` and keeps flooding its decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgreePhase {
    Collect,
    Decide,
    Done,
}

/// One flooded (origin, input) pair, stamped with its injection round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OriginPair {
    pub origin: NodeId,
    pub bit: bool,
    pub origin_round: Round,
}

/// Distinct-origin tally with O(1) membership (origin ids are sequential by
/// construction) and an append-only insertion-order list, which lets a full
/// re-flood receiver merge only the tail it has not seen from that sender.
#[derive(Debug, Clone, Default)]
pub struct Tally {
    slots: Vec<u8>,
    list: Vec<OriginPair>,
    ones: u32,
    zeros: u32,
}

impl Tally {
    fn insert(&mut self, pair: OriginPair) -> bool {
        let idx = pair.origin.0 as usize;
        if idx >= self.slots.len() {
            self.slots.resize(idx + 1, 0);
        }
        if self.slots[idx] != 0 {
            return false;
        }
        self.slots[idx] = 1 + pair.bit as u8;
        if pair.bit {
            self.ones += 1;
        } else {
            self.zeros += 1;
        }
        self.list.push(pair);
        true
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    pub fn counts(&self) -> (u32, u32) {
        (self.zeros, self.ones)
    }

    pub fn pairs(&self) -> &[OriginPair] {
        &self.list
    }

    /// Majority over origins injected no later than `cutoff`; ties to 0.
    fn mature_majority(&self, cutoff: Round) -> bool {
        let mut ones = 0u32;
        let mut zeros = 0u32;
        for p in &self.list {
            if p.origin_round <= cutoff {
                if p.bit {
                    ones += 1;
                } else {
                    zeros += 1;
                }
            }
        }
        ones > zeros
    }
}

/// Per-node agreement state.
#[derive(Debug, Clone)]
pub struct AgreeState {
    pub input: bool,
    pub joined: Round,
    pub phase: AgreePhase,
    pub decision: Option<bool>,
    pub tally: Tally,
    sketch: SizeSketch,
    sketch_dirty: bool,
    /// Pairs learned since the node last sent (own pair included at init).
    fresh: Vec<OriginPair>,
    /// Cached full-tally payload for the high-communication variant.
    full_cache: Option<Arc<Vec<OriginPair>>>,
    /// Full-list lengths already merged, per sender (high variant).
    peer_len: BTreeMap<NodeId, usize>,
    pub last_update: Option<Round>,
}

impl AgreeState {
    /// Rounds the node allots to collection under its current n_hat.
    pub fn horizon(&self, c_t: f64) -> u32 {
        let n_hat = estimate(&self.sketch).map_or(2.0, |e| e.n_hat).max(2.0);
        (c_t * n_hat.log2()).ceil().max(1.0) as u32
    }
}

/// What goes on the wire each round.
#[derive(Debug, Clone)]
pub struct AgreeMsg {
    pub pairs: Arc<Vec<OriginPair>>,
    /// True when `pairs` is the sender's complete tally (high variant).
    pub full: bool,
    pub sketch: Option<Arc<SizeSketch>>,
    pub decision: Option<bool>,
}

/// The agreement protocol; one instance per run (it ledgers every injected
/// input so validity can be checked over nodes that later churned out).
#[derive(Debug, Clone)]
pub struct AgreementProtocol {
    pub variant: AgreeVariant,
    pub k: usize,
    pub c_t: f64,
    pub inputs: InputAssign,
    injected: Vec<(NodeId, bool)>,
}

impl AgreementProtocol {
    pub fn new(variant: AgreeVariant, k: usize, c_t: f64, inputs: InputAssign) -> Self {
        AgreementProtocol {
            variant,
            k,
            c_t,
            inputs,
            injected: Vec::new(),
        }
    }

    /// Low-communication variant: forward each pair once.
    pub fn low_communication(k: usize, c_t: f64, inputs: InputAssign) -> Self {
        Self::new(AgreeVariant::LowCommunication, k, c_t, inputs)
    }

    /// High-communication variant: re-flood the full tally every round.
    pub fn high_communication(k: usize, c_t: f64, inputs: InputAssign) -> Self {
        Self::new(AgreeVariant::HighCommunication, k, c_t, inputs)
    }

    /// Every input ever injected, in injection order.
    pub fn injected(&self) -> &[(NodeId, bool)] {
        &self.injected
    }

    fn assign_input(&self, node: NodeId, rng: &mut DetRng) -> bool {
        match &self.inputs {
            InputAssign::Iid => rng.next_u64() & 1 == 1,
            InputAssign::Constant(b) => *b,
            InputAssign::Vector(v) => match v.get(node.0 as usize) {
                Some(b) => *b,
                None => rng.next_u64() & 1 == 1,
            },
        }
    }
}

impl Protocol for AgreementProtocol {
    type State = AgreeState;
    type Msg = AgreeMsg;

    fn init(&mut self, node: NodeId, round: Round, rng: &mut DetRng) -> AgreeState {
        let input = self.assign_input(node, rng);
        self.injected.push((node, input));
        let own = OriginPair {
            origin: node,
            bit: input,
            origin_round: round,
        };
        let mut tally = Tally::default();
        tally.insert(own);
        AgreeState {
            input,
            joined: round,
            phase: AgreePhase::Collect,
            decision: None,
            tally,
            sketch: draw_sketch(rng, self.k).expect("config guarantees k >= 2"),
            sketch_dirty: true,
            fresh: vec![own],
            full_cache: None,
            peer_len: BTreeMap::new(),
            last_update: Some(round),
        }
    }

    fn step(
        &mut self,
        ctx: &StepCtx<'_>,
        state: &mut AgreeState,
        inbox: &[Envelope<AgreeMsg>],
        _rng: &mut DetRng,
    ) -> Vec<(NodeId, AgreeMsg)> {
        if state.phase != AgreePhase::Collect {
            // Decided: keep flooding the decision for stragglers.
            state.phase = AgreePhase::Done;
            return decision_outbox(state, ctx);
        }

        let mut changed = false;
        let mut decisions = (0u32, 0u32);
        for env in inbox {
            if let Some(d) = env.msg.decision {
                if d {
                    decisions.1 += 1;
                } else {
                    decisions.0 += 1;
                }
            }
            // A full re-flood's list is append-only, so everything below the
            // length we already merged from this sender is already in the
            // tally; only the tail is new.
            let start = if env.msg.full {
                let seen = state.peer_len.get(&env.from).copied().unwrap_or(0);
                state.peer_len.insert(env.from, env.msg.pairs.len());
                seen.min(env.msg.pairs.len())
            } else {
                0
            };
            for pair in &env.msg.pairs[start..] {
                if state.tally.insert(*pair) {
                    state.fresh.push(*pair);
                    changed = true;
                }
            }
            if let Some(sketch) = &env.msg.sketch {
                if state.sketch.merge_in_place(sketch).expect("uniform k") {
                    state.sketch_dirty = true;
                    changed = true;
                }
            }
        }
        if changed {
            state.last_update = Some(ctx.round);
            state.full_cache = None;
        }

        if decisions.0 + decisions.1 > 0 {
            // Stragglers adopt the flooded decision (majority, ties to 0).
            state.decision = Some(decisions.1 > decisions.0);
            state.phase = AgreePhase::Decide;
            state.last_update = Some(ctx.round);
            return decision_outbox(state, ctx);
        }

        let horizon = state.horizon(self.c_t);
        let elapsed = ctx.round.0 - state.joined.0;
        if elapsed >= horizon {
            // Count only origins old enough to have finished spreading.
            let maturity = horizon.div_ceil(2);
            let cutoff = Round(ctx.round.0.saturating_sub(maturity));
            state.decision = Some(state.tally.mature_majority(cutoff));
            state.phase = AgreePhase::Decide;
            state.last_update = Some(ctx.round);
            return decision_outbox(state, ctx);
        }

        // Still collecting: put pairs (delta or full, by variant) and the
        // sketch (when it changed) on the wire.
        let pairs: Arc<Vec<OriginPair>> = match self.variant {
            AgreeVariant::LowCommunication => Arc::new(std::mem::take(&mut state.fresh)),
            AgreeVariant::HighCommunication => {
                state.fresh.clear();
                state
                    .full_cache
                    .get_or_insert_with(|| Arc::new(state.tally.list.clone()))
                    .clone()
            }
        };
        let full = self.variant == AgreeVariant::HighCommunication;
        let sketch = state
            .sketch_dirty
            .then(|| Arc::new(state.sketch.clone()));
        state.sketch_dirty = false;
        if pairs.is_empty() && sketch.is_none() {
            return Vec::new();
        }
        ctx.neighbors
            .iter()
            .map(|&to| {
                (
                    to,
                    AgreeMsg {
                        pairs: pairs.clone(),
                        full,
                        sketch: sketch.clone(),
                        decision: None,
                    },
                )
            })
            .collect()
    }

    fn observe(&self, state: &AgreeState) -> NodeObservation {
        NodeObservation {
            last_update: state.last_update,
            items: state.tally.len() as u64,
        }
    }

    fn digest_state(&self, state: &AgreeState, d: &mut Digest) {
        d.write_bool(state.input);
        d.write_u32(state.joined.0);
        d.write_u8(match state.phase {
            AgreePhase::Collect => 0,
            AgreePhase::Decide => 1,
            AgreePhase::Done => 2,
        });
        d.write_u8(state.decision.map_or(2, u8::from));
        let (zeros, ones) = state.tally.counts();
        d.write_u32(zeros);
        d.write_u32(ones);
        if let Some(last) = state.tally.pairs().last() {
            d.write_u64(last.origin.0);
            d.write_bool(last.bit);
            d.write_u32(last.origin_round.0);
        }
        d.write_f64(state.sketch.sum());
        d.write_u32(state.last_update.map_or(u32::MAX, |r| r.0));
    }

    fn digest_msg(&self, msg: &AgreeMsg, d: &mut Digest) {
        d.write_u64(msg.pairs.len() as u64);
        d.write_bool(msg.full);
        if let Some(first) = msg.pairs.first() {
            d.write_u64(first.origin.0);
            d.write_bool(first.bit);
        }
        if let Some(last) = msg.pairs.last() {
            d.write_u64(last.origin.0);
            d.write_bool(last.bit);
        }
        match &msg.sketch {
            Some(s) => {
                d.write_u8(1);
                d.write_f64(s.sum());
            }
            None => d.write_u8(0),
        }
        d.write_u8(msg.decision.map_or(2, u8::from));
    }

    fn msg_bits(&self, msg: &AgreeMsg) -> u64 {
        // 64-bit origin + bit + 32-bit injection round per pair.
        let mut bits = msg.pairs.len() as u64 * (64 + 1 + 32);
        if let Some(s) = &msg.sketch {
            bits += s.k() as u64 * 64;
        }
        if msg.decision.is_some() {
            bits += 1;
        }
        bits
    }

    fn metrics(&self, states: &BTreeMap<NodeId, AgreeState>) -> ProtocolMetrics {
        let outcome = self.measure_outcome(states);
        let n_hats: Vec<f64> = states
            .values()
            .filter_map(|s| estimate(&s.sketch).ok().map(|e| e.n_hat))
            .collect();
        ProtocolMetrics {
            agree_fraction: Some(outcome.agree_fraction),
            undecided_fraction: Some(outcome.undecided_fraction),
            n_hat_median: median(&n_hats),
            ..Default::default()
        }
    }
}

fn decision_outbox(state: &AgreeState, ctx: &StepCtx<'_>) -> Vec<(NodeId, AgreeMsg)> {
    let bit = state.decision.expect("decided nodes carry a decision");
    ctx.neighbors
        .iter()
        .map(|&to| {
            (
                to,
                AgreeMsg {
                    pairs: Arc::new(Vec::new()),
                    full: false,
                    sketch: None,
                    decision: Some(bit),
                },
            )
        })
        .collect()
}

/// Final-round fractions over live nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgreementOutcome {
    /// Fraction of live nodes sharing the plurality decision.
    pub agree_fraction: f64,
    /// Fraction decided against the plurality.
    pub dissent_fraction: f64,
    /// Fraction still undecided.
    pub undecided_fraction: f64,
    /// The plurality decision, if anyone decided.
    pub plurality: Option<bool>,
    /// Vacuously true unless every input ever injected was equal and some
    /// live node decided otherwise.
    pub validity_ok: bool,
    pub live: usize,
    pub decided: usize,
}

impl AgreementProtocol {
    /// Measure the outcome over the live population (callable at any round;
    /// final-round fractions are the reported result of a run).
    pub fn measure_outcome(&self, states: &BTreeMap<NodeId, AgreeState>) -> AgreementOutcome {
        let live = states.len();
        let mut zeros = 0usize;
        let mut ones = 0usize;
        for s in states.values() {
            match s.decision {
                Some(false) => zeros += 1,
                Some(true) => ones += 1,
                None => {}
            }
        }
        let decided = zeros + ones;
        let plurality_count = zeros.max(ones);
        let plurality = if decided == 0 {
            None
        } else {
            Some(ones > zeros)
        };
        let unanimous_input = self
            .injected
            .split_first()
            .and_then(|((_, first), rest)| rest.iter().all(|(_, b)| b == first).then_some(*first));
        let validity_ok = match unanimous_input {
            Some(v) => states
                .values()
                .filter_map(|s| s.decision)
                .all(|d| d == v),
            None => true,
        };
        let denom = live.max(1) as f64;
        AgreementOutcome {
            agree_fraction: plurality_count as f64 / denom,
            dissent_fraction: (decided - plurality_count) as f64 / denom,
            undecided_fraction: (live - decided) as f64 / denom,
            plurality,
            validity_ok,
            live,
            decided,
        }
    }
}

/// External dump: one `node_id<TAB>decision|undecided` line per live node.
pub fn decision_dump(states: &BTreeMap<NodeId, AgreeState>) -> String {
    let mut out = String::new();
    for (id, s) in states {
        let cell = match s.decision {
            Some(b) => if b { "1" } else { "0" }.to_string(),
            None => "undecided".to_string(),
        };
        out.push_str(&format!("{id}\t{cell}\n"));
    }
    out
}
