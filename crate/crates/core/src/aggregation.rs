//! Network-size estimation from minima of exponential draws.
//!
//! Each node draws k independent rate-1 exponentials; the entrywise minimum
//! over m contributing nodes is Exp(m) per entry, the sum over k entries is
//! Gamma(k, m), and (k-1)/sum is an unbiased estimate of m. Sketches flood
//! through the network under min-merge, so every node converges to the
//! minima over everything it (transitively) heard from. An adversary that
//! removes nodes before their draws spread biases the surviving minima, the
//! suppression error this module quantifies.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::adversary::build_adversary;
use crate::config::RunConfig;
use crate::digest::Digest;
use crate::engine::{run_simulation, Envelope, NodeId, NodeObservation, Protocol, Round, StepCtx};
use crate::error::{SimError, SketchError};
use crate::metrics::median;
use crate::rng::DetRng;

/// k running minima of rate-1 exponential draws. Entries are strictly
/// positive; merging never increases any entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeSketch {
    minima: Vec<f64>,
}

/// Draw a fresh k-entry sketch from the node's stream.
pub fn draw_sketch(rng: &mut DetRng, k: usize) -> Result<SizeSketch, SketchError> {
    if k < 2 {
        return Err(SketchError::BadK(k));
    }
    Ok(SizeSketch {
        minima: (0..k).map(|_| rng.next_exp()).collect(),
    })
}

/// Entrywise minimum of two equal-width sketches.
pub fn merge(a: &SizeSketch, b: &SizeSketch) -> Result<SizeSketch, SketchError> {
    let mut out = a.clone();
    out.merge_in_place(b)?;
    Ok(out)
}

/// The unbiased estimate from a sketch.
pub fn estimate(s: &SizeSketch) -> Result<SizeEstimate, SketchError> {
    let sum = s.sum();
    if sum == 0.0 {
        return Err(SketchError::DegenerateSum);
    }
    Ok(SizeEstimate {
        n_hat: (s.k() as f64 - 1.0) / sum,
        k: s.k(),
        rounds: 0,
    })
}

impl SizeSketch {
    /// Wrap explicit minima (parsing, tests). Entries must be nonnegative;
    /// sketches produced by [`draw_sketch`] are strictly positive.
    pub fn from_minima(minima: Vec<f64>) -> Result<Self, SketchError> {
        if minima.len() < 2 {
            return Err(SketchError::BadK(minima.len()));
        }
        if let Some(pos) = minima.iter().position(|m| !m.is_finite() || *m < 0.0) {
            return Err(SketchError::Parse {
                line: pos + 2,
                reason: "minima must be nonnegative finite numbers".into(),
            });
        }
        Ok(SizeSketch { minima })
    }

    pub fn k(&self) -> usize {
        self.minima.len()
    }

    pub fn minima(&self) -> &[f64] {
        &self.minima
    }

    pub fn sum(&self) -> f64 {
        self.minima.iter().sum()
    }

    /// Entrywise min-merge; returns whether any entry decreased.
    pub fn merge_in_place(&mut self, other: &SizeSketch) -> Result<bool, SketchError> {
        if self.k() != other.k() {
            return Err(SketchError::KMismatch(self.k(), other.k()));
        }
        let mut changed = false;
        for (mine, theirs) in self.minima.iter_mut().zip(&other.minima) {
            if *theirs < *mine {
                *mine = *theirs;
                changed = true;
            }
        }
        Ok(changed)
    }

    /// Dump format: `k` on the first line, then one minimum per line with 17
    /// significant digits (round-trip exact).
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.k());
        for m in &self.minima {
            out.push_str(&crate::metrics::fmt_f64(*m));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, SketchError> {
        let mut lines = text.lines();
        let k: usize = lines
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or(SketchError::Parse {
                line: 1,
                reason: "bad k header".into(),
            })?;
        let mut minima = Vec::with_capacity(k);
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: f64 = line.trim().parse().map_err(|_| SketchError::Parse {
                line: i + 2,
                reason: "bad minimum".into(),
            })?;
            minima.push(v);
        }
        if minima.len() != k {
            return Err(SketchError::Parse {
                line: 1,
                reason: format!("expected {k} minima, found {}", minima.len()),
            });
        }
        Self::from_minima(minima)
    }
}

/// Estimate derived from a sketch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeEstimate {
    pub n_hat: f64,
    pub k: usize,
    /// Rounds of spreading behind the estimate (0 for a bare sketch).
    pub rounds: u32,
}

/// Heuristic sketch width for a target relative error eps at size n.
pub fn default_sketch_k(n: u64, eps: f64) -> u32 {
    ((8.0 * (n.max(2) as f64).ln()) / (eps * eps)).ceil() as u32
}

/// Per-node state of the estimation protocol.
#[derive(Debug, Clone)]
pub struct EstState {
    pub sketch: SizeSketch,
    /// Sketch changed since the node last pushed it.
    dirty: bool,
    pub last_update: Option<Round>,
    updates: u64,
}

/// Size estimation by flooding sketches with min-merge instead of set-union.
/// Nodes push their sketch only when it changed; min-merge converges, so
/// traffic dies out once nothing new spreads.
#[derive(Debug, Clone)]
pub struct EstimationProtocol {
    pub k: usize,
}

impl Protocol for EstimationProtocol {
    type State = EstState;
    type Msg = Arc<SizeSketch>;

    fn init(&mut self, _node: NodeId, round: Round, rng: &mut DetRng) -> EstState {
        EstState {
            sketch: draw_sketch(rng, self.k).expect("config guarantees k >= 2"),
            dirty: true,
            last_update: Some(round),
            updates: 0,
        }
    }

    fn step(
        &mut self,
        ctx: &StepCtx<'_>,
        state: &mut EstState,
        inbox: &[Envelope<Arc<SizeSketch>>],
        _rng: &mut DetRng,
    ) -> Vec<(NodeId, Arc<SizeSketch>)> {
        for env in inbox {
            // Widths agree protocol-wide by construction.
            if state.sketch.merge_in_place(&env.msg).expect("uniform k") {
                state.dirty = true;
                state.last_update = Some(ctx.round);
                state.updates += 1;
            }
        }
        if state.dirty {
            state.dirty = false;
            let payload = Arc::new(state.sketch.clone());
            ctx.neighbors.iter().map(|&to| (to, payload.clone())).collect()
        } else {
            Vec::new()
        }
    }

    fn observe(&self, state: &EstState) -> NodeObservation {
        NodeObservation {
            last_update: state.last_update,
            items: state.updates + 1,
        }
    }

    fn digest_state(&self, state: &EstState, d: &mut Digest) {
        d.write_u64(state.sketch.k() as u64);
        d.write_f64(state.sketch.sum());
        d.write_f64(state.sketch.minima[0]);
        d.write_f64(*state.sketch.minima.last().unwrap());
        d.write_u32(state.last_update.map_or(u32::MAX, |r| r.0));
        d.write_bool(state.dirty);
    }

    fn digest_msg(&self, msg: &Arc<SizeSketch>, d: &mut Digest) {
        d.write_u64(msg.k() as u64);
        d.write_f64(msg.sum());
        d.write_f64(msg.minima[0]);
        d.write_f64(*msg.minima.last().unwrap());
    }

    fn msg_bits(&self, msg: &Arc<SizeSketch>) -> u64 {
        msg.k() as u64 * 64
    }

    fn metrics(&self, states: &BTreeMap<NodeId, EstState>) -> crate::metrics::ProtocolMetrics {
        let estimates: Vec<f64> = states
            .values()
            .filter_map(|s| estimate(&s.sketch).ok().map(|e| e.n_hat))
            .collect();
        crate::metrics::ProtocolMetrics {
            n_hat_median: median(&estimates),
            ..Default::default()
        }
    }
}

/// Result of one estimation run paired with its churn-free baseline.
#[derive(Debug, Clone)]
pub struct EstimationOutcome {
    /// Final estimate at every live node.
    pub estimates: BTreeMap<NodeId, SizeEstimate>,
    pub median_n_hat: f64,
    /// Median over live nodes of |n_hat - n| / n.
    pub median_abs_rel_err: f64,
    pub baseline_median_n_hat: f64,
    pub baseline_median_abs_rel_err: f64,
    /// How much worse the churned run is than the baseline; this is the
    /// adversary's suppression (plus turnover) error.
    pub suppression_excess: f64,
}

/// Run the estimation protocol under the configured adversary, then rerun
/// the same seed with zero churn to isolate the adversary-induced error.
pub fn run_estimation_protocol(
    config: &RunConfig,
    adversary: impl crate::engine::Adversary,
) -> Result<EstimationOutcome, SimError> {
    let churned = run_one(config.clone(), adversary)?;
    let mut baseline_config = config.clone();
    baseline_config.churn = 0;
    let baseline_adv = build_adversary(&baseline_config)?;
    let baseline = run_one(baseline_config, baseline_adv)?;
    Ok(EstimationOutcome {
        suppression_excess: churned.1 - baseline.1,
        estimates: churned.2,
        median_n_hat: churned.0,
        median_abs_rel_err: churned.1,
        baseline_median_n_hat: baseline.0,
        baseline_median_abs_rel_err: baseline.1,
    })
}

fn run_one(
    config: RunConfig,
    adversary: impl crate::engine::Adversary,
) -> Result<(f64, f64, BTreeMap<NodeId, SizeEstimate>), SimError> {
    let n = config.n as f64;
    let rounds = config.rounds;
    let protocol = EstimationProtocol {
        k: config.k as usize,
    };
    let out = run_simulation(config, adversary, protocol)?;
    let mut estimates = BTreeMap::new();
    for (&id, st) in &out.final_state.states {
        let mut e = estimate(&st.sketch)?;
        e.rounds = rounds;
        estimates.insert(id, e);
    }
    let n_hats: Vec<f64> = estimates.values().map(|e| e.n_hat).collect();
    let errs: Vec<f64> = n_hats.iter().map(|h| (h - n).abs() / n).collect();
    Ok((
        median(&n_hats).unwrap_or(f64::NAN),
        median(&errs).unwrap_or(f64::NAN),
        estimates,
    ))
}
