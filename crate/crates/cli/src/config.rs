//! Campaign configuration: a flat `key = value` text format with sweep
//! lists over n, churn, strategy, beta and k.
//!
//! Unknown keys are hard errors: a typo in a large sweep must not silently
//! fall back to a default. Values left out resolve to documented defaults
//! per cell (most derive from the cell's n).

use churnsim_core::aggregation::default_sketch_k;
use churnsim_core::config::{ProtocolKind, RunConfig, StrategyKind, TopologyMode};

use crate::CliError;

/// A parsed experiment campaign: sweep axes, scalar overrides, seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub n: Vec<u64>,
    pub churn: Vec<u32>,
    pub strategy: Vec<StrategyKind>,
    pub beta: Vec<f64>,
    /// `None` means "derive per cell" (protocol-dependent default).
    pub k: Vec<Option<u32>>,
    pub protocol: ProtocolKind,
    pub mode: Option<TopologyMode>,
    pub degree: Option<u32>,
    pub rounds: Option<u32>,
    pub c_t: Option<f64>,
    pub alpha: Option<f64>,
    pub gap_every: Option<u32>,
    /// Explicit seed list; never derived from time.
    pub seeds: Vec<u64>,
    /// Output directory; the `--out` flag overrides it.
    pub out: Option<std::path::PathBuf>,
}

/// One fully resolved run cell (everything but the seed).
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub n: u64,
    pub churn: u32,
    pub strategy: StrategyKind,
    pub beta: f64,
    pub k: u32,
}

impl Campaign {
    /// Expand the sweep axes in declaration order (n outermost, k innermost).
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        let mut index = 0;
        for &n in &self.n {
            for &churn in &self.churn {
                for &strategy in &self.strategy {
                    for &beta in &self.beta {
                        for &k in &self.k {
                            cells.push(Cell {
                                index,
                                n,
                                churn,
                                strategy,
                                beta,
                                k: k.unwrap_or_else(|| self.default_k(n)),
                            });
                            index += 1;
                        }
                    }
                }
            }
        }
        cells
    }

    fn default_k(&self, n: u64) -> u32 {
        match self.protocol {
            // The estimation protocol defaults to the accuracy heuristic for
            // a 10% target relative error; agreement only needs a coarse
            // n_hat for its horizon.
            ProtocolKind::Estimate => default_sketch_k(n, 0.1),
            _ => 64,
        }
    }

    /// Resolve one cell and seed into a validated engine config.
    pub fn run_config(&self, cell: &Cell, seed: u64) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::base(cell.n, seed);
        config.protocol = self.protocol;
        config.churn = cell.churn;
        config.strategy = cell.strategy;
        config.beta = cell.beta;
        config.k = cell.k;
        if let Some(mode) = self.mode {
            config.mode = mode;
            if mode == TopologyMode::Adversarial && self.degree.is_none() {
                // base() picked a self-maintained-friendly degree; re-derive
                // the plain default for the explicit mode.
                let mut d = 8.min(cell.n.saturating_sub(1)) as u32;
                if (cell.n * d as u64) % 2 == 1 {
                    d -= 1;
                }
                config.degree = d;
            }
        }
        if let Some(d) = self.degree {
            config.degree = d;
        }
        if let Some(r) = self.rounds {
            config.rounds = r;
        }
        if let Some(c_t) = self.c_t {
            config.c_t = c_t;
        }
        config.alpha = self.alpha;
        if let Some(g) = self.gap_every {
            config.gap_every = g;
        }
        config.validate().map_err(|e| CliError::Validation {
            cell: cell.index,
            reason: e.to_string(),
        })?;
        Ok(config)
    }
}

/// Parse the campaign text format.
pub fn parse_config(text: &str) -> Result<Campaign, CliError> {
    let mut campaign = Campaign {
        n: Vec::new(),
        churn: vec![0],
        strategy: vec![StrategyKind::ObliviousUniform],
        beta: vec![0.05],
        k: vec![None],
        protocol: ProtocolKind::Flood,
        mode: None,
        degree: None,
        rounds: None,
        c_t: None,
        alpha: None,
        gap_every: None,
        seeds: vec![0],
        out: None,
    };
    let mut seen = std::collections::BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CliError::Parse {
            line: lineno,
            reason: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(CliError::Parse {
                line: lineno,
                reason: format!("duplicate key `{key}`"),
            });
        }
        let bad = |reason: String| CliError::Parse {
            line: lineno,
            reason,
        };
        match key {
            "n" => campaign.n = parse_list(value).map_err(bad)?,
            "churn" => campaign.churn = parse_list(value).map_err(bad)?,
            "strategy" => {
                campaign.strategy = value
                    .split(',')
                    .map(|s| parse_strategy(s.trim()))
                    .collect::<Result<_, _>>()
                    .map_err(bad)?
            }
            "beta" => campaign.beta = parse_list(value).map_err(bad)?,
            "k" => {
                campaign.k = parse_list::<u32>(value)
                    .map_err(bad)?
                    .into_iter()
                    .map(Some)
                    .collect()
            }
            "protocol" => {
                campaign.protocol = match value {
                    "flood" => ProtocolKind::Flood,
                    "estimate" => ProtocolKind::Estimate,
                    "agree" => ProtocolKind::Agree,
                    "agree-adaptive" => ProtocolKind::AgreeAdaptive,
                    other => return Err(bad(format!("unknown protocol `{other}`"))),
                }
            }
            "mode" => {
                campaign.mode = Some(match value {
                    "adversarial" => TopologyMode::Adversarial,
                    "self-maintained" => TopologyMode::SelfMaintained,
                    other => return Err(bad(format!("unknown mode `{other}`"))),
                })
            }
            "degree" => campaign.degree = Some(parse_scalar(value).map_err(bad)?),
            "rounds" => campaign.rounds = Some(parse_scalar(value).map_err(bad)?),
            "c-t" | "c_t" => campaign.c_t = Some(parse_scalar(value).map_err(bad)?),
            "alpha" => campaign.alpha = Some(parse_scalar(value).map_err(bad)?),
            "gap-every" | "gap_every" => {
                campaign.gap_every = Some(parse_scalar(value).map_err(bad)?)
            }
            "seeds" => campaign.seeds = parse_seed_list(value).map_err(bad)?,
            "out" => {
                if value.is_empty() {
                    return Err(bad("empty output directory".into()));
                }
                campaign.out = Some(std::path::PathBuf::from(value));
            }
            other => {
                return Err(CliError::Parse {
                    line: lineno,
                    reason: format!("unknown key `{other}`"),
                })
            }
        }
    }
    if campaign.n.is_empty() {
        return Err(CliError::Parse {
            line: 0,
            reason: "missing required key `n`".into(),
        });
    }
    // Every sweep cell must resolve to a valid run config.
    for cell in campaign.cells() {
        for &seed in campaign.seeds.iter().take(1) {
            campaign.run_config(&cell, seed)?;
        }
    }
    Ok(campaign)
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    Ok(match s {
        "oblivious-uniform" => StrategyKind::ObliviousUniform,
        "adaptive-frontier" => StrategyKind::AdaptiveFrontier,
        "adaptive-cut" => StrategyKind::AdaptiveCut,
        other => return Err(format!("unknown strategy `{other}`")),
    })
}

fn parse_scalar<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("bad value `{s}`"))
}

fn parse_list<T: std::str::FromStr + Copy>(s: &str) -> Result<Vec<T>, String> {
    let items: Vec<T> = s
        .split(',')
        .map(|part| parse_scalar(part.trim()))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err("empty list".into());
    }
    Ok(items)
}

/// Seeds: a comma list (`1, 5, 9`) or an inclusive range (`0..9`). An empty
/// value is an explicitly empty campaign.
fn parse_seed_list(s: &str) -> Result<Vec<u64>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: u64 = parse_scalar(lo.trim())?;
        let hi: u64 = parse_scalar(hi.trim())?;
        if hi < lo {
            return Err(format!("empty seed range `{s}`"));
        }
        return Ok((lo..=hi).collect());
    }
    parse_list(s)
}
