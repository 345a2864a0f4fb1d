//! Churn adversaries: per-round replacement actions under a budget.
//!
//! Oblivious strategies commit their whole schedule before the run starts;
//! adaptive strategies observe topology and protocol-public node state (but
//! never future randomness) each round. Every emitted action must pass
//! [`validate_action`]; the engine re-validates and aborts the run on a
//! violation, since that indicates a buggy adversary, not a protocol fault.

use std::collections::{BTreeSet, VecDeque};

use crate::config::{RunConfig, StrategyKind, TopologyMode};
use crate::engine::{Adversary, NetworkState, NodeId, ObservableState, Protocol, Round};
use crate::error::{ActionViolation, SimError};
use crate::graph::Graph;
use crate::rng::{tag, DetRng};
use crate::spectral::spectral_gap;

/// One round's churn: paired departures and fresh-id arrivals, plus an
/// optional full rewiring (adversarial-topology mode only). Without an
/// explicit rewiring each arrival inherits the departed node's edges.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChurnAction {
    pub depart: BTreeSet<NodeId>,
    /// Fresh ids in ascending order; |arrive| == |depart|.
    pub arrive: Vec<NodeId>,
    pub new_adjacency: Option<Vec<(NodeId, NodeId)>>,
}

impl ChurnAction {
    pub fn empty() -> Self {
        ChurnAction::default()
    }

    pub fn is_empty(&self) -> bool {
        self.depart.is_empty() && self.arrive.is_empty() && self.new_adjacency.is_none()
    }

    /// Replace `depart` with sequential fresh ids starting at `next_fresh`.
    pub fn replace(depart: BTreeSet<NodeId>, next_fresh: u64) -> Self {
        let arrive = (0..depart.len() as u64).map(|i| NodeId(next_fresh + i)).collect();
        ChurnAction {
            depart,
            arrive,
            new_adjacency: None,
        }
    }
}

/// Strategy-facing configuration, derived from the run config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversaryConfig {
    pub n: u64,
    /// Budget C: maximum replacements per round.
    pub budget: u32,
    pub strategy: StrategyKind,
    /// Minimum spectral gap the post-churn topology must keep, if set.
    pub alpha: Option<f64>,
}

impl AdversaryConfig {
    pub fn from_run(config: &RunConfig) -> Self {
        AdversaryConfig {
            n: config.n,
            budget: config.churn,
            strategy: config.strategy,
            alpha: config.alpha,
        }
    }
}

/// Check an action against the budget, id freshness and (adversarial mode)
/// topology constraints. The post-churn graph is simulated, never applied.
pub fn validate_action<P: Protocol>(
    action: &ChurnAction,
    state: &NetworkState<P>,
    config: &RunConfig,
) -> Result<(), ActionViolation> {
    if action.depart.len() != action.arrive.len() {
        return Err(ActionViolation::Unbalanced);
    }
    if action.depart.len() > config.churn as usize {
        return Err(ActionViolation::BudgetExceeded);
    }
    if action.depart.iter().any(|id| !state.states.contains_key(id)) {
        return Err(ActionViolation::StaleIds);
    }
    let mut seen = BTreeSet::new();
    for id in &action.arrive {
        if id.0 < state.next_fresh || !seen.insert(*id) {
            return Err(ActionViolation::StaleIds);
        }
    }
    match (&action.new_adjacency, config.mode) {
        (Some(_), TopologyMode::SelfMaintained) => Err(ActionViolation::AdjacencyForbidden),
        (Some(edges), TopologyMode::Adversarial) => {
            let survivors = state
                .live()
                .filter(|id| !action.depart.contains(id))
                .chain(action.arrive.iter().copied());
            let g = Graph::from_edges(survivors, edges.iter().copied())
                .map_err(|_| ActionViolation::StaleIds)?;
            check_topology(&g, config, state.round)
        }
        (None, TopologyMode::Adversarial) if config.alpha.is_some() => {
            // Substitution rewiring is an isomorphism, so the current graph
            // stands in for the post-churn one.
            check_topology(&state.graph, config, state.round)
        }
        _ => Ok(()),
    }
}

fn check_topology(g: &Graph, config: &RunConfig, round: Round) -> Result<(), ActionViolation> {
    if !g.is_connected() {
        return Err(ActionViolation::Disconnected);
    }
    if let Some(alpha) = config.alpha {
        let mut rng = DetRng::stream(config.seed, &[tag::VALIDATE, round.0 as u64]);
        let report =
            spectral_gap(g, 1e-6, 3000, &mut rng).map_err(|_| ActionViolation::Disconnected)?;
        if report.gap < alpha {
            return Err(ActionViolation::GapTooSmall);
        }
    }
    Ok(())
}

/// Pre-commit a whole schedule of uniform replacement actions.
///
/// Depart sets are drawn uniformly from the ids live under the schedule's
/// own bookkeeping (initial ids 0..n-1, arrivals numbered sequentially), so
/// the schedule aligns with any engine run of the same shape without ever
/// observing it.
pub fn oblivious_schedule(
    config: &AdversaryConfig,
    horizon: u32,
    rng: &mut DetRng,
) -> Vec<ChurnAction> {
    let mut live: Vec<NodeId> = (0..config.n).map(NodeId).collect();
    let mut next_fresh = config.n;
    let c = (config.budget as usize).min(live.len());
    (0..horizon)
        .map(|_| {
            // Partial Fisher-Yates: the first c slots become the depart set.
            for i in 0..c {
                let j = i + rng.next_below((live.len() - i) as u64) as usize;
                live.swap(i, j);
            }
            let depart: BTreeSet<NodeId> = live[..c].iter().copied().collect();
            let action = ChurnAction::replace(depart, next_fresh);
            live[..c].copy_from_slice(&action.arrive);
            next_fresh += c as u64;
            action
        })
        .collect()
}

/// Oblivious-uniform strategy: replays a pre-committed uniform schedule.
pub struct ObliviousUniformAdversary {
    schedule: VecDeque<ChurnAction>,
}

impl ObliviousUniformAdversary {
    pub fn new(config: &AdversaryConfig, horizon: u32, rng: &mut DetRng) -> Self {
        ObliviousUniformAdversary {
            schedule: oblivious_schedule(config, horizon, rng).into(),
        }
    }
}

impl Adversary for ObliviousUniformAdversary {
    fn next_action(&mut self, _view: &ObservableState<'_>) -> ChurnAction {
        self.schedule.pop_front().unwrap_or_default()
    }
}

/// Oblivious-schedule strategy: replays an explicit caller-supplied schedule.
pub struct ScheduledAdversary {
    schedule: VecDeque<ChurnAction>,
}

impl ScheduledAdversary {
    pub fn new(actions: Vec<ChurnAction>) -> Self {
        ScheduledAdversary {
            schedule: actions.into(),
        }
    }
}

impl Adversary for ScheduledAdversary {
    fn next_action(&mut self, _view: &ObservableState<'_>) -> ChurnAction {
        self.schedule.pop_front().unwrap_or_default()
    }
}

/// Adaptive-frontier strategy: departs the live nodes whose protocol state
/// was updated most recently (ties broken toward better-informed nodes, then
/// lower ids), suppressing information spread at its growth frontier. Nodes
/// that never held any state are not worth the budget and are left alone.
pub struct AdaptiveFrontierAdversary {
    config: AdversaryConfig,
    seed: u64,
    /// Rounds where the topology constraint forced an empty action.
    pub fallbacks: u64,
}

impl AdaptiveFrontierAdversary {
    pub fn new(config: AdversaryConfig, seed: u64) -> Self {
        AdaptiveFrontierAdversary {
            config,
            seed,
            fallbacks: 0,
        }
    }
}

impl Adversary for AdaptiveFrontierAdversary {
    fn next_action(&mut self, view: &ObservableState<'_>) -> ChurnAction {
        let mut candidates: Vec<(Round, u64, NodeId)> = view
            .observations
            .iter()
            .filter_map(|(&id, obs)| obs.last_update.map(|r| (r, obs.items, id)))
            .collect();
        candidates.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
        let depart: BTreeSet<NodeId> = candidates
            .into_iter()
            .take(self.config.budget as usize)
            .map(|(_, _, id)| id)
            .collect();
        let action = ChurnAction::replace(depart, view.next_fresh);
        constrained(action, &self.config, self.seed, view, &mut self.fallbacks)
    }
}

/// Adaptive-cut strategy: departs the uninformed nodes adjacent to informed
/// ones (a greedy cut across the reception frontier), spending any leftover
/// budget on the most recently informed nodes.
pub struct AdaptiveCutAdversary {
    config: AdversaryConfig,
    seed: u64,
    pub fallbacks: u64,
}

impl AdaptiveCutAdversary {
    pub fn new(config: AdversaryConfig, seed: u64) -> Self {
        AdaptiveCutAdversary {
            config,
            seed,
            fallbacks: 0,
        }
    }
}

impl Adversary for AdaptiveCutAdversary {
    fn next_action(&mut self, view: &ObservableState<'_>) -> ChurnAction {
        let budget = self.config.budget as usize;
        let informed = |id: &NodeId| view.observations.get(id).is_some_and(|o| o.items > 0);
        let mut boundary: Vec<(usize, NodeId)> = view
            .observations
            .iter()
            .filter(|(id, obs)| obs.items == 0 && view.graph.has_node(**id))
            .filter_map(|(&id, _)| {
                let cut_degree = view.graph.neighbors(id).filter(informed).count();
                (cut_degree > 0).then_some((cut_degree, id))
            })
            .collect();
        boundary.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut depart: BTreeSet<NodeId> =
            boundary.into_iter().take(budget).map(|(_, id)| id).collect();
        if depart.len() < budget {
            let mut rest: Vec<(Round, u64, NodeId)> = view
                .observations
                .iter()
                .filter(|(id, _)| !depart.contains(id))
                .filter_map(|(&id, obs)| obs.last_update.map(|r| (r, obs.items, id)))
                .filter(|(_, items, _)| *items > 0)
                .collect();
            rest.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
            for (_, _, id) in rest.into_iter().take(budget - depart.len()) {
                depart.insert(id);
            }
        }
        let action = ChurnAction::replace(depart, view.next_fresh);
        constrained(action, &self.config, self.seed, view, &mut self.fallbacks)
    }
}

/// Enforce the adaptive strategies' topology constraint: if the post-churn
/// graph (isomorphic to the current one under substitution rewiring) would
/// violate the gap constraint, fall back to the empty action and log it.
fn constrained(
    action: ChurnAction,
    config: &AdversaryConfig,
    seed: u64,
    view: &ObservableState<'_>,
    fallbacks: &mut u64,
) -> ChurnAction {
    let Some(alpha) = config.alpha else {
        return action;
    };
    if action.is_empty() {
        return action;
    }
    let mut rng = DetRng::stream(seed, &[tag::ADVERSARY, tag::VALIDATE, view.round.0 as u64]);
    let ok = view.graph.is_connected()
        && spectral_gap(view.graph, 1e-6, 3000, &mut rng).is_ok_and(|r| r.gap >= alpha);
    if ok {
        action
    } else {
        *fallbacks += 1;
        ChurnAction::empty()
    }
}

/// Serialize a pre-committed schedule in the transcript's line style: one
/// `round<TAB>churn<TAB>depart;depart<TAB>arrive;arrive` line per round.
/// Explicit adjacency rewirings have no text form and are rejected.
pub fn schedule_to_text(actions: &[ChurnAction]) -> Result<String, SimError> {
    let mut out = String::new();
    for (round, action) in actions.iter().enumerate() {
        if action.new_adjacency.is_some() {
            return Err(SimError::InvalidConfig(
                "explicit adjacency rewirings are not serializable".into(),
            ));
        }
        let ids = |v: &mut dyn Iterator<Item = NodeId>| {
            v.map(|id| id.0.to_string()).collect::<Vec<_>>().join(";")
        };
        out.push_str(&format!(
            "{}\tchurn\t{}\t{}\n",
            round + 1,
            ids(&mut action.depart.iter().copied()),
            ids(&mut action.arrive.iter().copied()),
        ));
    }
    Ok(out)
}

/// Parse [`schedule_to_text`] output.
pub fn schedule_from_text(text: &str) -> Result<Vec<ChurnAction>, SimError> {
    let bad = |line: usize, reason: &str| {
        SimError::InvalidConfig(format!("schedule line {line}: {reason}"))
    };
    let mut actions = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [round, "churn", depart, arrive] = fields.as_slice() else {
            return Err(bad(i + 1, "expected `round\\tchurn\\tdepart\\tarrive`"));
        };
        let expect: usize = round.parse().map_err(|_| bad(i + 1, "bad round"))?;
        if expect != actions.len() + 1 {
            return Err(bad(i + 1, "rounds must be contiguous from 1"));
        }
        let parse_ids = |s: &str| -> Result<Vec<NodeId>, SimError> {
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split(';')
                .map(|x| x.parse().map(NodeId).map_err(|_| bad(i + 1, "bad id")))
                .collect()
        };
        actions.push(ChurnAction {
            depart: parse_ids(depart)?.into_iter().collect(),
            arrive: parse_ids(arrive)?,
            new_adjacency: None,
        });
    }
    Ok(actions)
}

/// Construct the strategy named by the config. `Scheduled` cannot be built
/// from a config alone; pass a [`ScheduledAdversary`] explicitly instead.
pub fn build_adversary(config: &RunConfig) -> Result<Box<dyn Adversary>, SimError> {
    let acfg = AdversaryConfig::from_run(config);
    let mut rng = DetRng::stream(config.seed, &[tag::ADVERSARY]);
    Ok(match config.strategy {
        StrategyKind::ObliviousUniform => {
            Box::new(ObliviousUniformAdversary::new(&acfg, config.rounds, &mut rng))
        }
        StrategyKind::AdaptiveFrontier => {
            Box::new(AdaptiveFrontierAdversary::new(acfg, config.seed))
        }
        StrategyKind::AdaptiveCut => Box::new(AdaptiveCutAdversary::new(acfg, config.seed)),
        StrategyKind::Scheduled => {
            return Err(SimError::InvalidConfig(
                "scheduled strategy requires an explicit schedule".into(),
            ))
        }
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::engine::NodeObservation;

    fn acfg(n: u64, budget: u32) -> AdversaryConfig {
        AdversaryConfig {
            n,
            budget,
            strategy: StrategyKind::ObliviousUniform,
            alpha: None,
        }
    }

    #[test]
    fn zero_budget_schedule_is_empty_actions() {
        let mut rng = DetRng::new(1);
        let sched = oblivious_schedule(&acfg(16, 0), 5, &mut rng);
        assert_eq!(sched.len(), 5);
        assert!(sched.iter().all(|a| a.is_empty()));
    }

    #[test]
    fn full_budget_replaces_entire_population() {
        let mut rng = DetRng::new(2);
        let sched = oblivious_schedule(&acfg(4, 4), 3, &mut rng);
        let r1: BTreeSet<NodeId> = (0..4).map(NodeId).collect();
        assert_eq!(sched[0].depart, r1);
        assert_eq!(sched[0].arrive, (4..8).map(NodeId).collect::<Vec<_>>());
        let r2: BTreeSet<NodeId> = (4..8).map(NodeId).collect();
        assert_eq!(sched[1].depart, r2);
    }

    #[test]
    fn schedules_replay_deterministically() {
        let a = oblivious_schedule(&acfg(64, 8), 20, &mut DetRng::new(3));
        let b = oblivious_schedule(&acfg(64, 8), 20, &mut DetRng::new(3));
        assert_eq!(a, b);
        let c = oblivious_schedule(&acfg(64, 8), 20, &mut DetRng::new(4));
        assert_ne!(a, c);
    }

    #[test]
    fn schedule_departs_only_live_ids() {
        let mut rng = DetRng::new(5);
        let sched = oblivious_schedule(&acfg(8, 3), 50, &mut rng);
        let mut live: BTreeSet<NodeId> = (0..8).map(NodeId).collect();
        for action in sched {
            assert_eq!(action.depart.len(), 3);
            for d in &action.depart {
                assert!(live.remove(d), "departed a dead id {d}");
            }
            live.extend(action.arrive.iter().copied());
            assert_eq!(live.len(), 8);
        }
    }

    fn view_fixture<'a>(
        graph: &'a Graph,
        observations: &'a BTreeMap<NodeId, NodeObservation>,
    ) -> ObservableState<'a> {
        ObservableState {
            round: Round(1),
            graph,
            observations,
            next_fresh: graph.n() as u64,
        }
    }

    #[test]
    fn frontier_departs_lone_source() {
        let graph = Graph::from_edges(
            (0..4).map(NodeId),
            [(NodeId(0), NodeId(1)), (NodeId(1), NodeId(2)), (NodeId(2), NodeId(3))],
        )
        .unwrap();
        let mut obs = BTreeMap::new();
        for i in 0..4 {
            obs.insert(
                NodeId(i),
                NodeObservation {
                    last_update: (i == 2).then_some(Round(0)),
                    items: u64::from(i == 2),
                },
            );
        }
        let mut adv = AdaptiveFrontierAdversary::new(acfg(4, 2), 0);
        let action = adv.next_action(&view_fixture(&graph, &obs));
        // Only the source has state; the budget is not wasted on the rest.
        assert_eq!(action.depart, [NodeId(2)].into());
        assert_eq!(action.arrive, vec![NodeId(4)]);

        let mut none = AdaptiveFrontierAdversary::new(acfg(4, 0), 0);
        assert!(none.next_action(&view_fixture(&graph, &obs)).is_empty());
    }

    #[test]
    fn frontier_respects_budget_with_many_candidates() {
        let graph = Graph::with_nodes((0..10).map(NodeId));
        let obs: BTreeMap<NodeId, NodeObservation> = (0..10)
            .map(|i| {
                (
                    NodeId(i),
                    NodeObservation {
                        last_update: Some(Round(i as u32)),
                        items: 1,
                    },
                )
            })
            .collect();
        let mut adv = AdaptiveFrontierAdversary::new(acfg(10, 3), 0);
        let action = adv.next_action(&view_fixture(&graph, &obs));
        // Most recently updated first.
        assert_eq!(action.depart, [NodeId(9), NodeId(8), NodeId(7)].into());
    }

    #[test]
    fn schedule_text_roundtrip() {
        let mut rng = DetRng::new(9);
        let schedule = oblivious_schedule(&acfg(16, 3), 12, &mut rng);
        let text = schedule_to_text(&schedule).unwrap();
        assert_eq!(schedule_from_text(&text).unwrap(), schedule);
        assert!(text.starts_with("1\tchurn\t"));
        assert!(schedule_from_text("1\tchurn\tx\t\n").is_err());
        assert!(schedule_from_text("5\tchurn\t\t\n").is_err());
    }

    #[test]
    fn validate_action_matrix() {
        use crate::engine::Engine;
        use crate::flooding::FloodingProtocol;

        let mut ring = Graph::with_nodes((0..8).map(NodeId));
        for i in 0..8 {
            ring.add_edge(NodeId(i), NodeId((i + 1) % 8)).unwrap();
        }
        let mut config = RunConfig::base(8, 1);
        config.mode = crate::config::TopologyMode::Adversarial;
        config.degree = 2;
        config.churn = 2;
        config.initial_graph = Some(ring);
        let (_, state) = Engine::new(config.clone(), FloodingProtocol::single(NodeId(0))).unwrap();

        let ok = |a: &ChurnAction| validate_action(a, &state, &config);
        assert_eq!(ok(&ChurnAction::empty()), Ok(()));
        assert_eq!(
            ok(&ChurnAction::replace([NodeId(0)].into(), 8)),
            Ok(())
        );
        // Budget is 2; three replacements exceed it.
        assert_eq!(
            ok(&ChurnAction::replace(
                [NodeId(0), NodeId(1), NodeId(2)].into(),
                8
            )),
            Err(ActionViolation::BudgetExceeded)
        );
        // Departing a dead id and reusing an id are both stale.
        assert_eq!(
            ok(&ChurnAction::replace([NodeId(99)].into(), 8)),
            Err(ActionViolation::StaleIds)
        );
        assert_eq!(
            ok(&ChurnAction {
                depart: [NodeId(0)].into(),
                arrive: vec![NodeId(3)],
                new_adjacency: None,
            }),
            Err(ActionViolation::StaleIds)
        );
        assert_eq!(
            ok(&ChurnAction {
                depart: [NodeId(0)].into(),
                arrive: vec![],
                new_adjacency: None,
            }),
            Err(ActionViolation::Unbalanced)
        );
        // Two disjoint cliques: connectivity is required of any supplied
        // rewiring even without an alpha constraint.
        let two_cliques: Vec<(NodeId, NodeId)> = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (6, 7)]
            .iter()
            .map(|&(u, v)| (NodeId(u), NodeId(v)))
            .collect();
        assert_eq!(
            ok(&ChurnAction {
                depart: BTreeSet::new(),
                arrive: vec![],
                new_adjacency: Some(two_cliques),
            }),
            Err(ActionViolation::Disconnected)
        );

        // No rewiring is allowed at all in self-maintained mode.
        let mut sm_config = RunConfig::base(8, 1);
        sm_config.churn = 2;
        let (_, sm_state) =
            Engine::new(sm_config.clone(), FloodingProtocol::single(NodeId(0))).unwrap();
        let ring: Vec<(NodeId, NodeId)> = (0..8).map(|i| (NodeId(i), NodeId((i + 1) % 8))).collect();
        assert_eq!(
            validate_action(
                &ChurnAction {
                    depart: BTreeSet::new(),
                    arrive: vec![],
                    new_adjacency: Some(ring),
                },
                &sm_state,
                &sm_config
            ),
            Err(ActionViolation::AdjacencyForbidden)
        );

        // A gap constraint above what the topology achieves rejects even the
        // empty action: the constraint is unsatisfiable.
        let mut gap_config = config.clone();
        gap_config.alpha = Some(0.9);
        assert_eq!(
            validate_action(&ChurnAction::empty(), &state, &gap_config),
            Err(ActionViolation::GapTooSmall)
        );
    }

    #[test]
    fn cut_targets_uninformed_boundary() {
        // 0 informed; 1 and 2 uninformed neighbors; 3 uninformed, isolated
        // from the informed side.
        let graph = Graph::from_edges(
            (0..4).map(NodeId),
            [(NodeId(0), NodeId(1)), (NodeId(0), NodeId(2)), (NodeId(1), NodeId(3))],
        )
        .unwrap();
        let mut obs = BTreeMap::new();
        for i in 0..4 {
            obs.insert(
                NodeId(i),
                NodeObservation {
                    last_update: (i == 0).then_some(Round(0)),
                    items: u64::from(i == 0),
                },
            );
        }
        let mut adv = AdaptiveCutAdversary::new(acfg(4, 2), 0);
        let action = adv.next_action(&view_fixture(&graph, &obs));
        assert_eq!(action.depart, [NodeId(1), NodeId(2)].into());
    }
}
