//! Replay tooling: re-execute a stored transcript against its campaign
//! config and report the first divergent event, if any.

use std::fs;
use std::path::Path;

use churnsim_core::adversary::build_adversary;
use churnsim_core::aggregation::EstimationProtocol;
use churnsim_core::config::{ProtocolKind, RunConfig};
use churnsim_core::engine::{replay_report, NodeId, ReplayReport};
use churnsim_core::flooding::FloodingProtocol;
use churnsim_core::transcript::Transcript;
use churnsim_core::SimError;

use crate::campaign::agreement_protocol;
use crate::config::Campaign;
use crate::CliError;

/// Outcome of a replay attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayOutcome {
    Match,
    Diverged {
        index: usize,
        expected: String,
        recomputed: String,
    },
    /// No run derivable from the campaign matches the transcript's embedded
    /// config digest (wrong cell, wrong seed list, edited config...).
    ConfigMismatch,
}

/// Re-run the transcript's config (located by digest among all runs the
/// campaign derives) and compare event-for-event.
pub fn replay_against_campaign(
    transcript: &Transcript,
    campaign: &Campaign,
    seed_offset: u64,
) -> Result<ReplayOutcome, CliError> {
    let Some(config) = find_config(transcript, campaign, seed_offset) else {
        return Ok(ReplayOutcome::ConfigMismatch);
    };
    let report = replay_resolved(transcript, &config).map_err(|e| CliError::Run(e.to_string()))?;
    Ok(if report.matches {
        ReplayOutcome::Match
    } else {
        let (index, expected, recomputed) = report.first_divergence.expect("divergent replay");
        ReplayOutcome::Diverged {
            index,
            expected,
            recomputed,
        }
    })
}

fn find_config(transcript: &Transcript, campaign: &Campaign, seed_offset: u64) -> Option<RunConfig> {
    for cell in campaign.cells() {
        for &seed in &campaign.seeds {
            if let Ok(config) = campaign.run_config(&cell, seed + seed_offset) {
                if config.digest() == transcript.config_digest {
                    return Some(config);
                }
            }
        }
    }
    None
}

/// Replay one resolved run config.
pub fn replay_resolved(transcript: &Transcript, config: &RunConfig) -> Result<ReplayReport, SimError> {
    let adversary = build_adversary(config)?;
    match config.protocol {
        ProtocolKind::Flood => replay_report(
            transcript,
            config,
            adversary,
            FloodingProtocol::single(NodeId(0)),
        ),
        ProtocolKind::Estimate => replay_report(
            transcript,
            config,
            adversary,
            EstimationProtocol {
                k: config.k as usize,
            },
        ),
        ProtocolKind::Agree | ProtocolKind::AgreeAdaptive => {
            replay_report(transcript, config, adversary, agreement_protocol(config))
        }
    }
}

/// File-level entry point for the `replay` subcommand.
pub fn replay_files(
    transcript_path: &Path,
    config_path: &Path,
    seed_offset: u64,
) -> Result<ReplayOutcome, CliError> {
    let transcript_text = fs::read_to_string(transcript_path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", transcript_path.display())))?;
    let transcript =
        Transcript::parse(&transcript_text).map_err(|e| CliError::Run(e.to_string()))?;
    let config_text = fs::read_to_string(config_path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", config_path.display())))?;
    let campaign = crate::config::parse_config(&config_text)?;
    replay_against_campaign(&transcript, &campaign, seed_offset)
}
