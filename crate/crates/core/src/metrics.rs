//! Per-round metric series recorded by the engine.

/// Protocol-reported fractions for one round; fields a protocol does not
/// track stay `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProtocolMetrics {
    pub coverage: Option<f64>,
    pub agree_fraction: Option<f64>,
    pub undecided_fraction: Option<f64>,
    pub n_hat_median: Option<f64>,
}

/// One row per executed round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundMetrics {
    pub round: u32,
    pub coverage: Option<f64>,
    pub agree_fraction: Option<f64>,
    pub undecided_fraction: Option<f64>,
    pub n_hat_median: Option<f64>,
    pub spectral_gap: Option<f64>,
    /// Total message bits sent this round (as collected in the send phase;
    /// bits of messages later dropped by churn still count).
    pub bits_sent: u64,
}

/// The full series for a run; empty when the horizon is zero rounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsSeries {
    pub rows: Vec<RoundMetrics>,
}

impl MetricsSeries {
    pub fn push(&mut self, row: RoundMetrics) {
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&RoundMetrics> {
        self.rows.last()
    }

    /// Coverage column as (round, value) pairs, skipping rounds without it.
    pub fn coverage_series(&self) -> Vec<(u32, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.coverage.map(|c| (r.round, c)))
            .collect()
    }

    /// Mean sent bits per round per node.
    pub fn mean_bits_per_round_per_node(&self, n: u64) -> f64 {
        if self.rows.is_empty() || n == 0 {
            return 0.0;
        }
        let total: u64 = self.rows.iter().map(|r| r.bits_sent).sum();
        total as f64 / self.rows.len() as f64 / n as f64
    }
}

/// Render an f64 with 17 significant digits (round-trip exact for f64).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Median of a slice (mean of the middle two for even lengths).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("median input must not contain NaN"));
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}
