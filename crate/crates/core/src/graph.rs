//! Simple undirected graphs over node ids, plus random regular generation.
//!
//! Graphs are stored as sorted adjacency sets so every iteration order is
//! deterministic. Node ids are arbitrary (churn replaces nodes with fresh
//! ids), so the vertex set is explicit rather than implied by a count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::engine::NodeId;
use crate::error::GraphError;
use crate::rng::DetRng;

/// Undirected simple graph: no self loops, no parallel edges.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Graph {
    adj: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn with_nodes<I: IntoIterator<Item = NodeId>>(nodes: I) -> Self {
        let mut g = Graph::new();
        for v in nodes {
            g.add_node(v);
        }
        g
    }

    /// Build from an explicit vertex set and edge list. Duplicate edges
    /// collapse silently (set semantics); self loops and unknown endpoints
    /// are errors.
    pub fn from_edges<N, E>(nodes: N, edges: E) -> Result<Self, GraphError>
    where
        N: IntoIterator<Item = NodeId>,
        E: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut g = Graph::with_nodes(nodes);
        for (u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn add_node(&mut self, v: NodeId) {
        self.adj.entry(v).or_default();
    }

    pub fn has_node(&self, v: NodeId) -> bool {
        self.adj.contains_key(&v)
    }

    /// Insert an edge; returns false if it was already present.
    pub fn add_edge(&mut self, u: NodeId, v: NodeId) -> Result<bool, GraphError> {
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        if !self.adj.contains_key(&u) {
            return Err(GraphError::UnknownNode(u));
        }
        if !self.adj.contains_key(&v) {
            return Err(GraphError::UnknownNode(v));
        }
        let inserted = self.adj.get_mut(&u).unwrap().insert(v);
        self.adj.get_mut(&v).unwrap().insert(u);
        Ok(inserted)
    }

    /// Remove a node and all incident edges. No-op if absent.
    pub fn remove_node(&mut self, v: NodeId) {
        if let Some(nbrs) = self.adj.remove(&v) {
            for u in nbrs {
                if let Some(set) = self.adj.get_mut(&u) {
                    set.remove(&v);
                }
            }
        }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adj.get(&v).map_or(0, |s| s.len())
    }

    pub fn max_degree(&self) -> usize {
        self.adj.values().map(|s| s.len()).max().unwrap_or(0)
    }

    pub fn neighbors(&self, v: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adj.get(&v).into_iter().flatten().copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adj.keys().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(|s| s.len()).sum::<usize>() / 2
    }

    /// Edges as ordered (u, v) pairs with u < v, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adj
            .iter()
            .flat_map(|(&u, nbrs)| nbrs.iter().copied().filter(move |&v| u < v).map(move |v| (u, v)))
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adj.get(&u).is_some_and(|s| s.contains(&v))
    }

    /// True iff the graph has a single connected component. The empty graph
    /// counts as connected by convention.
    pub fn is_connected(&self) -> bool {
        let Some(&start) = self.adj.keys().next() else {
            return true;
        };
        let mut seen = BTreeSet::new();
        let mut stack = vec![start];
        seen.insert(start);
        while let Some(v) = stack.pop() {
            for u in self.neighbors(v) {
                if seen.insert(u) {
                    stack.push(u);
                }
            }
        }
        seen.len() == self.adj.len()
    }

    /// Exchange format: header `n d` (vertex count, max degree), then one
    /// `u v` edge per line. Ids are canonicalized to 0..n-1 in sorted order.
    pub fn to_edge_list(&self) -> String {
        let index: BTreeMap<NodeId, usize> =
            self.nodes().enumerate().map(|(i, v)| (v, i)).collect();
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.n(), self.max_degree());
        for (u, v) in self.edges() {
            let _ = writeln!(out, "{} {}", index[&u], index[&v]);
        }
        out
    }

    /// Parse the [`to_edge_list`](Self::to_edge_list) format.
    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(GraphError::Parse {
            line: 1,
            reason: "missing header".into(),
        })?;
        let mut parts = header.split_whitespace();
        let n: u64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or(GraphError::Parse {
                line: 1,
                reason: "bad vertex count".into(),
            })?;
        // The degree field is informational; it is re-derived on load.
        let mut g = Graph::with_nodes((0..n).map(NodeId));
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |s: Option<&str>| -> Option<u64> { s.and_then(|x| x.parse().ok()) };
            let (u, v) = match (parse(parts.next()), parse(parts.next())) {
                (Some(u), Some(v)) => (u, v),
                _ => {
                    return Err(GraphError::Parse {
                        line: i + 1,
                        reason: "expected `u v`".into(),
                    })
                }
            };
            if u >= n || v >= n {
                return Err(GraphError::Parse {
                    line: i + 1,
                    reason: format!("endpoint out of range: {u} {v}"),
                });
            }
            g.add_edge(NodeId(u), NodeId(v))
                .map_err(|e| GraphError::Parse {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
        }
        Ok(g)
    }
}

/// Maximum full restarts of the pairing model before giving up.
const MAX_ATTEMPTS: u32 = 64;

/// Generate a uniform-ish random simple d-regular graph on vertices 0..n-1
/// via the configuration (stub-pairing) model. Self loops and parallel edges
/// are repaired by random double swaps against clean pairs; if a repair pass
/// cannot finish, the whole pairing is redrawn, up to a bounded retry count.
pub fn gen_random_regular(n: u64, d: u32, rng: &mut DetRng) -> Result<Graph, GraphError> {
    if (n * d as u64) % 2 == 1 || (d as u64 >= n && n > 0) || n == 0 {
        return Err(GraphError::InfeasibleDegree { n, d });
    }
    if d == 0 {
        return Ok(Graph::with_nodes((0..n).map(NodeId)));
    }
    for _ in 0..MAX_ATTEMPTS {
        if let Some(g) = try_pairing(n, d, rng) {
            return Ok(g);
        }
    }
    Err(GraphError::RetryExhausted(MAX_ATTEMPTS))
}

fn try_pairing(n: u64, d: u32, rng: &mut DetRng) -> Option<Graph> {
    let mut stubs: Vec<u64> = (0..n)
        .flat_map(|v| std::iter::repeat_n(v, d as usize))
        .collect();
    rng.shuffle(&mut stubs);
    let m = stubs.len() / 2;
    let mut pairs: Vec<(u64, u64)> = (0..m)
        .map(|i| order(stubs[2 * i], stubs[2 * i + 1]))
        .collect();

    let mut counts: BTreeMap<(u64, u64), u32> = BTreeMap::new();
    for &p in &pairs {
        *counts.entry(p).or_insert(0) += 1;
    }
    let is_bad =
        |p: (u64, u64), counts: &BTreeMap<(u64, u64), u32>| p.0 == p.1 || counts[&p] > 1;

    let mut queue: Vec<usize> = (0..m).filter(|&i| is_bad(pairs[i], &counts)).collect();
    let mut budget = 200 + 50 * queue.len() as u32;
    while let Some(&i) = queue.last() {
        if !is_bad(pairs[i], &counts) {
            queue.pop();
            continue;
        }
        if budget == 0 {
            return None;
        }
        budget -= 1;
        let j = rng.next_below(m as u64) as usize;
        if j == i {
            continue;
        }
        let (a, b) = pairs[i];
        let (c, e) = pairs[j];
        // Two rewirings of the four stubs; pick one at random and accept it
        // only if both resulting pairs are simple and unused.
        let (p1, p2) = if rng.next_below(2) == 0 {
            (order(a, c), order(b, e))
        } else {
            (order(a, e), order(b, c))
        };
        let fresh = |p: (u64, u64)| p.0 != p.1 && counts.get(&p).copied().unwrap_or(0) == 0;
        if p1 == p2 || !fresh(p1) || !fresh(p2) {
            continue;
        }
        for old in [pairs[i], pairs[j]] {
            let c = counts.get_mut(&old).unwrap();
            *c -= 1;
            if *c == 0 {
                counts.remove(&old);
            }
        }
        *counts.entry(p1).or_insert(0) += 1;
        *counts.entry(p2).or_insert(0) += 1;
        pairs[i] = p1;
        pairs[j] = p2;
        if is_bad(pairs[j], &counts) {
            queue.push(j);
        }
    }

    let mut g = Graph::with_nodes((0..n).map(NodeId));
    for (u, v) in pairs {
        g.add_edge(NodeId(u), NodeId(v)).ok()?;
    }
    Some(g)
}

fn order(a: u64, b: u64) -> (u64, u64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
