//! Run configuration: one simulated execution is fully determined by a
//! `RunConfig` (including its seed), which is what the transcript commits to.

use crate::digest::Digest;
use crate::error::SimError;
use crate::graph::Graph;

/// Who owns the topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyMode {
    /// The adversary may rewire the graph each round (subject to the
    /// connectivity / gap constraints); absent an explicit rewiring, each
    /// arrival inherits the departed node's edges.
    Adversarial,
    /// The engine maintains the topology itself as a union of Hamilton
    /// cycles, repaired locally each round.
    SelfMaintained,
}

/// Built-in churn strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    /// Pre-committed schedule with uniformly random depart sets.
    ObliviousUniform,
    /// Pre-committed schedule supplied explicitly by the caller.
    Scheduled,
    /// Departs the nodes whose protocol state changed most recently.
    AdaptiveFrontier,
    /// Departs uninformed nodes adjacent to informed ones (a greedy cut).
    AdaptiveCut,
}

/// Which per-node protocol the run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    /// Epidemic push of a single value from node 0.
    Flood,
    /// Network-size estimation by flooding min-merged sketches.
    Estimate,
    /// Binary agreement, low-communication variant.
    Agree,
    /// Binary agreement, full-tally re-flooding variant.
    AgreeAdaptive,
}

/// Complete description of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Population size; constant for the whole run (replacement churn).
    pub n: u64,
    /// Target node degree of the generated topology.
    pub degree: u32,
    /// Churn budget: maximum node replacements per round.
    pub churn: u32,
    /// Horizon: number of rounds to execute.
    pub rounds: u32,
    pub mode: TopologyMode,
    pub strategy: StrategyKind,
    pub protocol: ProtocolKind,
    /// Optional minimum spectral gap the adversary must preserve
    /// (adversarial-topology mode only).
    pub alpha: Option<f64>,
    /// Coverage target parameter: floods aim at a 1 - beta fraction.
    pub beta: f64,
    /// Sketch width for size estimation.
    pub k: u32,
    /// Agreement horizon constant: a node collects for
    /// ceil(c_t * log2(n_hat)) rounds before deciding.
    pub c_t: f64,
    pub seed: u64,
    /// Record the spectral gap metric every this many rounds (0 = never).
    pub gap_every: u32,
    /// Explicit initial topology (tests and custom experiments); nodes must
    /// be exactly 0..n-1. Adversarial mode only.
    pub initial_graph: Option<Graph>,
}

impl RunConfig {
    /// Baseline config with documented defaults; see the README for the
    /// rationale behind each value.
    pub fn base(n: u64, seed: u64) -> Self {
        let mut degree = 8.min(n.saturating_sub(1)) as u32;
        let mode = if n >= 3 {
            // Self-maintained cycles need an even degree of at least 2.
            degree -= degree % 2;
            TopologyMode::SelfMaintained
        } else {
            if (n * degree as u64) % 2 == 1 {
                degree -= 1;
            }
            TopologyMode::Adversarial
        };
        let log2n = (n.max(2) as f64).log2();
        RunConfig {
            n,
            degree,
            churn: 0,
            rounds: (4.0 * log2n).ceil() as u32 + 16,
            mode,
            strategy: StrategyKind::ObliviousUniform,
            protocol: ProtocolKind::Flood,
            alpha: None,
            beta: 0.05,
            k: 64,
            c_t: 4.0,
            seed,
            gap_every: 0,
            initial_graph: None,
        }
    }

    /// Check every config invariant, naming the violated one.
    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: &str| Err(SimError::InvalidConfig(msg.to_string()));
        if self.n < 1 {
            return fail("n >= 1");
        }
        if self.churn as u64 > self.n {
            return fail("churn <= n");
        }
        if self.degree as u64 >= self.n && !(self.n == 1 && self.degree == 0) {
            return fail("degree < n");
        }
        if !(0.0..1.0).contains(&self.beta) {
            return fail("beta in [0, 1)");
        }
        if let Some(a) = self.alpha {
            if !(0.0..1.0).contains(&a) {
                return fail("alpha in [0, 1)");
            }
            if self.mode == TopologyMode::SelfMaintained {
                return fail("alpha requires adversarial-topology mode");
            }
        }
        if self.k < 2 {
            return fail("k >= 2");
        }
        if !self.c_t.is_finite() || self.c_t <= 0.0 {
            return fail("c_t > 0");
        }
        match self.mode {
            TopologyMode::SelfMaintained => {
                if self.degree < 2 || !self.degree.is_multiple_of(2) {
                    return fail("self-maintained mode needs an even degree >= 2");
                }
                if self.n < 3 {
                    return fail("self-maintained mode needs n >= 3");
                }
                if self.initial_graph.is_some() {
                    return fail("explicit initial graph requires adversarial-topology mode");
                }
            }
            TopologyMode::Adversarial => {
                if let Some(g) = &self.initial_graph {
                    if g.n() as u64 != self.n {
                        return fail("initial graph must have exactly n nodes");
                    }
                    if !g.nodes().enumerate().all(|(i, v)| v.0 == i as u64) {
                        return fail("initial graph nodes must be exactly 0..n-1");
                    }
                } else if (self.n * self.degree as u64) % 2 == 1 {
                    return fail("n * degree must be even");
                }
            }
        }
        Ok(())
    }

    /// Number of Hamilton cycles maintained in self-maintained mode.
    pub fn cycle_count(&self) -> usize {
        (self.degree / 2) as usize
    }

    /// Canonical digest committed into transcripts; any field change
    /// (including the seed) changes it.
    pub fn digest(&self) -> u64 {
        let mut d = Digest::new();
        d.write_u64(self.n);
        d.write_u32(self.degree);
        d.write_u32(self.churn);
        d.write_u32(self.rounds);
        d.write_u8(match self.mode {
            TopologyMode::Adversarial => 0,
            TopologyMode::SelfMaintained => 1,
        });
        d.write_u8(match self.strategy {
            StrategyKind::ObliviousUniform => 0,
            StrategyKind::Scheduled => 1,
            StrategyKind::AdaptiveFrontier => 2,
            StrategyKind::AdaptiveCut => 3,
        });
        d.write_u8(match self.protocol {
            ProtocolKind::Flood => 0,
            ProtocolKind::Estimate => 1,
            ProtocolKind::Agree => 2,
            ProtocolKind::AgreeAdaptive => 3,
        });
        match self.alpha {
            Some(a) => {
                d.write_u8(1);
                d.write_f64(a);
            }
            None => d.write_u8(0),
        }
        d.write_f64(self.beta);
        d.write_u32(self.k);
        d.write_f64(self.c_t);
        d.write_u64(self.seed);
        d.write_u32(self.gap_every);
        match &self.initial_graph {
            Some(g) => {
                d.write_u8(1);
                d.write_u64(g.n() as u64);
                d.write_u64(g.edge_count() as u64);
                for (u, v) in g.edges() {
                    d.write_u64(u.0);
                    d.write_u64(v.0);
                }
            }
            None => d.write_u8(0),
        }
        d.finish()
    }
}
