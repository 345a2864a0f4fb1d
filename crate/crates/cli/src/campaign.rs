//! Campaign execution: one metrics CSV per cell, transcripts per run, and a
//! campaign summary. Output bytes are a pure function of (config bytes,
//! seed list), so identical campaigns re-run byte-identically.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use churnsim_core::adversary::build_adversary;
use churnsim_core::agreement::{AgreementProtocol, InputAssign};
use churnsim_core::aggregation::EstimationProtocol;
use churnsim_core::config::{ProtocolKind, RunConfig, StrategyKind, TopologyMode};
use churnsim_core::engine::{run_simulation, NodeId};
use churnsim_core::flooding::FloodingProtocol;
use churnsim_core::metrics::{fmt_f64, MetricsSeries};
use churnsim_core::transcript::Transcript;
use churnsim_core::SimError;

use crate::config::{Campaign, Cell};
use crate::CliError;

pub const METRICS_HEADER: &str =
    "run,seed,round,coverage,agree_fraction,undecided_fraction,n_hat_median,spectral_gap,bits_sent";

pub const SUMMARY_HEADER: &str = "cell,run,seed,n,degree,churn,rounds,mode,strategy,protocol,beta,k,c_t,status,final_coverage,final_agree_fraction,final_undecided_fraction,final_n_hat_median,total_bits,final_hash,transcript,error";

/// Everything one run leaves behind.
pub struct RunArtifacts {
    pub transcript: Transcript,
    pub metrics: MetricsSeries,
    pub validity_ok: Option<bool>,
}

/// Execute one resolved run config, dispatching on the protocol kind.
/// Flood runs inject a single value at node 0; agreement runs draw fair
/// input bits per node.
pub fn execute_run(config: &RunConfig) -> Result<RunArtifacts, SimError> {
    let adversary = build_adversary(config)?;
    match config.protocol {
        ProtocolKind::Flood => {
            let out = run_simulation(config.clone(), adversary, FloodingProtocol::single(NodeId(0)))?;
            Ok(RunArtifacts {
                transcript: out.transcript,
                metrics: out.metrics,
                validity_ok: None,
            })
        }
        ProtocolKind::Estimate => {
            let protocol = EstimationProtocol {
                k: config.k as usize,
            };
            let out = run_simulation(config.clone(), adversary, protocol)?;
            Ok(RunArtifacts {
                transcript: out.transcript,
                metrics: out.metrics,
                validity_ok: None,
            })
        }
        ProtocolKind::Agree | ProtocolKind::AgreeAdaptive => {
            let protocol = agreement_protocol(config);
            let out = run_simulation(config.clone(), adversary, protocol)?;
            let outcome = out.protocol.measure_outcome(&out.final_state.states);
            Ok(RunArtifacts {
                transcript: out.transcript,
                metrics: out.metrics,
                validity_ok: Some(outcome.validity_ok),
            })
        }
    }
}

pub fn agreement_protocol(config: &RunConfig) -> AgreementProtocol {
    match config.protocol {
        ProtocolKind::AgreeAdaptive => AgreementProtocol::high_communication(
            config.k as usize,
            config.c_t,
            InputAssign::Iid,
        ),
        _ => AgreementProtocol::low_communication(config.k as usize, config.c_t, InputAssign::Iid),
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn strategy_name(s: StrategyKind) -> &'static str {
    match s {
        StrategyKind::ObliviousUniform => "oblivious-uniform",
        StrategyKind::Scheduled => "scheduled",
        StrategyKind::AdaptiveFrontier => "adaptive-frontier",
        StrategyKind::AdaptiveCut => "adaptive-cut",
    }
}

fn mode_name(m: TopologyMode) -> &'static str {
    match m {
        TopologyMode::Adversarial => "adversarial",
        TopologyMode::SelfMaintained => "self-maintained",
    }
}

fn protocol_name(p: ProtocolKind) -> &'static str {
    match p {
        ProtocolKind::Flood => "flood",
        ProtocolKind::Estimate => "estimate",
        ProtocolKind::Agree => "agree",
        ProtocolKind::AgreeAdaptive => "agree-adaptive",
    }
}

struct CellOutput {
    index: usize,
    summary_rows: Vec<String>,
    failed: bool,
}

/// Run a whole campaign into `out_dir`. Cells run in parallel up to `jobs`;
/// each cell is single-threaded and writes only its own files. Returns true
/// iff every run completed.
pub fn run_campaign(
    campaign: &Campaign,
    out_dir: &Path,
    jobs: usize,
    seed_offset: u64,
) -> Result<bool, CliError> {
    let cells = campaign.cells();
    let seeds: Vec<u64> = campaign.seeds.iter().map(|s| s + seed_offset).collect();
    fs::create_dir_all(out_dir.join("cells")).map_err(|e| CliError::Io(e.to_string()))?;

    let next = AtomicUsize::new(0);
    let outputs: Mutex<Vec<CellOutput>> = Mutex::new(Vec::new());
    let worker_count = jobs.max(1).min(cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let output = run_cell(campaign, &cells[i], &seeds, out_dir);
                outputs.lock().unwrap().push(output);
            });
        }
    });

    let mut outputs = outputs.into_inner().unwrap();
    outputs.sort_by_key(|o| o.index);
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    let mut all_ok = true;
    for o in &outputs {
        all_ok &= !o.failed;
        for row in &o.summary_rows {
            summary.push_str(row);
            summary.push('\n');
        }
    }
    fs::write(out_dir.join("summary.csv"), summary).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(all_ok)
}

fn run_cell(campaign: &Campaign, cell: &Cell, seeds: &[u64], out_dir: &Path) -> CellOutput {
    let cell_dir = out_dir.join("cells").join(format!("c{:04}", cell.index));
    let mut summary_rows = Vec::new();
    let mut failed = false;
    if let Err(e) = fs::create_dir_all(&cell_dir) {
        return CellOutput {
            index: cell.index,
            summary_rows: vec![format!("c{:04},,,,,,,,,,,,,io-error,,,,,,,,{e}", cell.index)],
            failed: true,
        };
    }
    let mut metrics_csv = String::from(METRICS_HEADER);
    metrics_csv.push('\n');

    for &seed in seeds {
        let run_id = format!("c{:04}-s{seed}", cell.index);
        let config = match campaign.run_config(cell, seed) {
            Ok(c) => c,
            Err(e) => {
                failed = true;
                summary_rows.push(summary_row_failed(cell, &run_id, seed, &e.to_string()));
                continue;
            }
        };
        match execute_run(&config) {
            Ok(artifacts) => {
                for row in &artifacts.metrics.rows {
                    metrics_csv.push_str(&format!(
                        "{run_id},{seed},{round},{cov},{agree},{und},{nhat},{gap},{bits}\n",
                        round = row.round,
                        cov = opt_cell(row.coverage),
                        agree = opt_cell(row.agree_fraction),
                        und = opt_cell(row.undecided_fraction),
                        nhat = opt_cell(row.n_hat_median),
                        gap = opt_cell(row.spectral_gap),
                        bits = row.bits_sent,
                    ));
                }
                let transcript_rel: PathBuf = ["cells", &format!("c{:04}", cell.index), &format!("{run_id}.transcript")]
                    .iter()
                    .collect();
                if let Err(e) = fs::write(
                    out_dir.join(&transcript_rel),
                    artifacts.transcript.to_text(),
                ) {
                    failed = true;
                    summary_rows.push(summary_row_failed(cell, &run_id, seed, &e.to_string()));
                    continue;
                }
                let last = artifacts.metrics.last();
                let total_bits: u64 = artifacts.metrics.rows.iter().map(|r| r.bits_sent).sum();
                summary_rows.push(format!(
                    "c{:04},{run_id},{seed},{n},{degree},{churn},{rounds},{mode},{strategy},{protocol},{beta},{k},{c_t},ok,{cov},{agree},{und},{nhat},{bits},{hash},{transcript},",
                    cell.index,
                    n = config.n,
                    degree = config.degree,
                    churn = config.churn,
                    rounds = config.rounds,
                    mode = mode_name(config.mode),
                    strategy = strategy_name(config.strategy),
                    protocol = protocol_name(config.protocol),
                    beta = fmt_f64(config.beta),
                    k = config.k,
                    c_t = fmt_f64(config.c_t),
                    cov = opt_cell(last.and_then(|r| r.coverage)),
                    agree = opt_cell(last.and_then(|r| r.agree_fraction)),
                    und = opt_cell(last.and_then(|r| r.undecided_fraction)),
                    nhat = opt_cell(last.and_then(|r| r.n_hat_median)),
                    bits = total_bits,
                    hash = churnsim_core::digest::to_hex(artifacts.transcript.final_hash),
                    transcript = transcript_rel.display(),
                ));
            }
            Err(e) => {
                failed = true;
                summary_rows.push(summary_row_failed(cell, &run_id, seed, &e.to_string()));
            }
        }
    }
    if let Err(e) = fs::write(cell_dir.join("metrics.csv"), metrics_csv) {
        failed = true;
        summary_rows.push(summary_row_failed(cell, "metrics-csv", 0, &e.to_string()));
    }
    CellOutput {
        index: cell.index,
        summary_rows,
        failed,
    }
}

fn summary_row_failed(cell: &Cell, run_id: &str, seed: u64, error: &str) -> String {
    format!(
        "c{:04},{run_id},{seed},{n},,{churn},,,{strategy},,{beta},{k},,failed,,,,,,,,{error}",
        cell.index,
        n = cell.n,
        churn = cell.churn,
        strategy = strategy_name(cell.strategy),
        beta = fmt_f64(cell.beta),
        k = cell.k,
        error = error.replace(',', ";"),
    )
}

/// Write-through helper for the `simulate` subcommand. The output directory
/// resolves as: explicit override (the `--out` flag), then the campaign's
/// `out` key, then `$CHURNSIM_OUT`, then `./out`.
pub fn simulate_file(
    config_path: &Path,
    out_override: Option<&Path>,
    jobs: usize,
    seed_offset: u64,
) -> Result<(bool, PathBuf), CliError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", config_path.display())))?;
    let campaign = crate::config::parse_config(&text)?;
    let out_dir = out_override
        .map(Path::to_path_buf)
        .or_else(|| campaign.out.clone())
        .or_else(|| std::env::var("CHURNSIM_OUT").ok().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let all_ok = run_campaign(&campaign, &out_dir, jobs, seed_offset)?;
    Ok((all_ok, out_dir))
}
