//! Expander maintenance from unions of Hamilton cycles.
//!
//! The self-maintained topology keeps c independent Hamilton cycles over the
//! live nodes; their union is a graph of degree at most 2c that stays
//! connected by construction and keeps a healthy spectral gap with high
//! probability under replacement churn. Churn repair is local: departed
//! nodes are shortcut out of each cycle and arrivals are spliced in at
//! uniformly random positions.

use std::collections::BTreeSet;

use crate::engine::NodeId;
use crate::error::CycleError;
use crate::graph::Graph;
use crate::rng::DetRng;

/// A bundle of Hamilton cycles over one shared vertex set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleBundle {
    cycles: Vec<Vec<NodeId>>,
}

impl CycleBundle {
    /// Build `c` independent uniformly random Hamilton cycles over `nodes`.
    pub fn new_random(nodes: &[NodeId], c: usize, rng: &mut DetRng) -> Self {
        let cycles = (0..c)
            .map(|_| {
                let mut cycle = nodes.to_vec();
                rng.shuffle(&mut cycle);
                cycle
            })
            .collect();
        CycleBundle { cycles }
    }

    pub fn cycle_count(&self) -> usize {
        self.cycles.len()
    }

    pub fn cycles(&self) -> &[Vec<NodeId>] {
        &self.cycles
    }

    /// The union graph of all cycles. Degree is at most 2 * cycle_count.
    pub fn union_graph(&self) -> Graph {
        let nodes = self.cycles.first().cloned().unwrap_or_default();
        let mut g = Graph::with_nodes(nodes);
        for cycle in &self.cycles {
            let len = cycle.len();
            if len < 2 {
                continue;
            }
            // A 2-cycle degenerates to a single edge.
            let wrap = if len == 2 { 1 } else { len };
            for i in 0..wrap {
                let u = cycle[i];
                let v = cycle[(i + 1) % len];
                let _ = g.add_edge(u, v);
            }
        }
        g
    }

    /// Every cycle must visit every live node exactly once.
    pub fn is_valid(&self) -> bool {
        let Some(first) = self.cycles.first() else {
            return true;
        };
        let reference: BTreeSet<NodeId> = first.iter().copied().collect();
        if reference.len() != first.len() {
            return false;
        }
        self.cycles.iter().all(|c| {
            c.len() == first.len() && c.iter().copied().collect::<BTreeSet<_>>() == reference
        })
    }
}

/// Repair every cycle after replacement churn: shortcut departures, splice
/// each arrival at a uniformly random position per cycle.
pub fn refresh_cycles(
    bundle: &CycleBundle,
    departed: &BTreeSet<NodeId>,
    arrived: &[NodeId],
    rng: &mut DetRng,
) -> Result<CycleBundle, CycleError> {
    let live_before: usize = bundle.cycles.first().map_or(0, |c| c.len());
    if let Some(first) = bundle.cycles.first() {
        let members: BTreeSet<NodeId> = first.iter().copied().collect();
        if departed.iter().any(|d| !members.contains(d)) {
            return Err(CycleError::UnknownDeparture);
        }
    }
    if live_before > 0 && departed.len() == live_before && arrived.is_empty() {
        return Err(CycleError::EmptyNetwork);
    }
    let mut cycles = Vec::with_capacity(bundle.cycles.len());
    for cycle in &bundle.cycles {
        let mut next: Vec<NodeId> = cycle
            .iter()
            .copied()
            .filter(|v| !departed.contains(v))
            .collect();
        for &a in arrived {
            let pos = rng.next_below(next.len() as u64 + 1) as usize;
            next.insert(pos, a);
        }
        if next.is_empty() {
            return Err(CycleError::EmptyNetwork);
        }
        cycles.push(next);
    }
    Ok(CycleBundle { cycles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::spectral_gap;

    fn ids(range: std::ops::Range<u64>) -> Vec<NodeId> {
        range.map(NodeId).collect()
    }

    #[test]
    fn no_churn_is_identity() {
        let mut rng = DetRng::new(1);
        let b = CycleBundle::new_random(&ids(0..8), 3, &mut rng);
        let same = refresh_cycles(&b, &BTreeSet::new(), &[], &mut rng).unwrap();
        assert_eq!(b, same);
    }

    #[test]
    fn splice_replaces_node() {
        let mut rng = DetRng::new(2);
        let b = CycleBundle::new_random(&ids(0..4), 1, &mut rng);
        let departed: BTreeSet<NodeId> = [NodeId(2)].into();
        let next = refresh_cycles(&b, &departed, &[NodeId(9)], &mut rng).unwrap();
        let cycle = &next.cycles()[0];
        assert_eq!(cycle.len(), 4);
        assert!(cycle.contains(&NodeId(9)));
        assert!(!cycle.contains(&NodeId(2)));
        assert!(next.is_valid());
    }

    #[test]
    fn removing_everyone_is_an_error() {
        let mut rng = DetRng::new(3);
        let b = CycleBundle::new_random(&ids(0..4), 2, &mut rng);
        let departed: BTreeSet<NodeId> = ids(0..4).into_iter().collect();
        assert_eq!(
            refresh_cycles(&b, &departed, &[], &mut rng),
            Err(CycleError::EmptyNetwork)
        );
    }

    #[test]
    fn unknown_departure_is_an_error() {
        let mut rng = DetRng::new(4);
        let b = CycleBundle::new_random(&ids(0..4), 1, &mut rng);
        let departed: BTreeSet<NodeId> = [NodeId(77)].into();
        assert_eq!(
            refresh_cycles(&b, &departed, &[NodeId(4)], &mut rng),
            Err(CycleError::UnknownDeparture)
        );
    }

    #[test]
    fn union_degree_bound_holds() {
        let mut rng = DetRng::new(5);
        let b = CycleBundle::new_random(&ids(0..64), 4, &mut rng);
        let g = b.union_graph();
        assert_eq!(g.n(), 64);
        assert!(g.is_connected());
        for v in g.nodes() {
            assert!(g.degree(v) <= 8);
        }
    }

    #[test]
    fn refresh_preserves_hamilton_property_under_churn() {
        let mut rng = DetRng::new(6);
        let mut b = CycleBundle::new_random(&ids(0..64), 4, &mut rng);
        let mut next_id = 64;
        for _ in 0..50 {
            let live: Vec<NodeId> = b.cycles()[0].clone();
            let departed: BTreeSet<NodeId> = (0..4)
                .map(|_| live[rng.next_below(live.len() as u64) as usize])
                .collect();
            let arrived: Vec<NodeId> =
                (0..departed.len() as u64).map(|i| NodeId(next_id + i)).collect();
            next_id += arrived.len() as u64;
            b = refresh_cycles(&b, &departed, &arrived, &mut rng).unwrap();
            assert!(b.is_valid());
            assert!(b.union_graph().is_connected());
        }
    }

    #[test]
    fn gap_survives_churn_smoke() {
        // Small fast version of the maintenance property; the full-scale one
        // lives in the acceptance suite.
        let mut gaps = Vec::new();
        for seed in 0..20 {
            let mut rng = DetRng::stream(seed, &[99]);
            let mut b = CycleBundle::new_random(&ids(0..64), 4, &mut rng);
            let mut next_id = 64;
            for _ in 0..10 {
                let live: Vec<NodeId> = b.cycles()[0].clone();
                let mut departed = BTreeSet::new();
                while departed.len() < 4 {
                    departed.insert(live[rng.next_below(live.len() as u64) as usize]);
                }
                let arrived: Vec<NodeId> = (0..4).map(|i| NodeId(next_id + i)).collect();
                next_id += 4;
                b = refresh_cycles(&b, &departed, &arrived, &mut rng).unwrap();
            }
            let r = spectral_gap(&b.union_graph(), 1e-6, 5000, &mut rng).unwrap();
            gaps.push(r.gap);
        }
        let ok = gaps.iter().filter(|&&g| g >= 0.05).count();
        assert!(ok >= 19, "gaps {gaps:?}");
    }
}
