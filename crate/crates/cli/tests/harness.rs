//! Harness-level contracts: config parsing, campaign output shape,
//! determinism of the full pipeline, and the replay subcommand surface.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use churnsim_cli::{parse_config, replay_files, run_campaign, simulate_file, CliError, ReplayOutcome};

static DIR_SEQ: AtomicU64 = AtomicU64::new(0);

/// Fresh scratch directory under the target tmpdir; removed on drop.
struct Scratch(PathBuf);

impl Scratch {
    fn new(label: &str) -> Self {
        let seq = DIR_SEQ.fetch_add(1, Ordering::SeqCst);
        let dir = std::env::temp_dir().join(format!(
            "churnsim-test-{}-{label}-{seq}",
            std::process::id()
        ));
        fs::create_dir_all(&dir).unwrap();
        Scratch(dir)
    }

    fn path(&self) -> &Path {
        &self.0
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

/// All files under a directory as (relative path, bytes), sorted.
fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn empty_seed_list_yields_empty_summary_and_success() {
    let scratch = Scratch::new("empty");
    let campaign = parse_config("n = 8\nseeds =\n").unwrap();
    assert!(campaign.seeds.is_empty());
    let ok = run_campaign(&campaign, scratch.path(), 1, 0).unwrap();
    assert!(ok);
    let summary = fs::read_to_string(scratch.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1, "header only");
    assert!(summary.starts_with("cell,run,seed,"));
}

#[test]
fn campaign_writes_one_csv_per_cell_with_stable_schema() {
    let scratch = Scratch::new("cells");
    let text = "n = 16, 32\nchurn = 0, 2\nrounds = 6\nseeds = 0..2\n";
    let campaign = parse_config(text).unwrap();
    assert_eq!(campaign.cells().len(), 4);
    let ok = run_campaign(&campaign, scratch.path(), 1, 0).unwrap();
    assert!(ok);
    for cell in 0..4 {
        let metrics = fs::read_to_string(
            scratch
                .path()
                .join(format!("cells/c{cell:04}/metrics.csv")),
        )
        .unwrap();
        let mut lines = metrics.lines();
        assert_eq!(lines.next().unwrap(), churnsim_cli::METRICS_HEADER);
        // 3 seeds x 6 rounds.
        assert_eq!(lines.count(), 18);
    }
    let summary = fs::read_to_string(scratch.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4 * 3);
    assert!(summary.lines().skip(1).all(|l| l.contains(",ok,")));
}

#[test]
fn rerunning_a_campaign_is_byte_identical() {
    let text = "n = 24\nchurn = 3\nprotocol = agree\nrounds = 40\nk = 8\nseeds = 0..4\nstrategy = adaptive-frontier\n";
    let campaign = parse_config(text).unwrap();
    let a = Scratch::new("detA");
    let b = Scratch::new("detB");
    assert!(run_campaign(&campaign, a.path(), 1, 0).unwrap());
    assert!(run_campaign(&campaign, b.path(), 2, 0).unwrap());
    let ca = dir_contents(a.path());
    let cb = dir_contents(b.path());
    assert_eq!(ca.len(), cb.len());
    for ((pa, ba), (pb, bb)) in ca.iter().zip(cb.iter()) {
        assert_eq!(pa, pb);
        assert_eq!(ba, bb, "{pa} differs between identical campaigns");
    }
}

#[test]
fn failing_cell_is_marked_and_partial_results_survive() {
    // alpha = 0.9 is far above any 8-regular graph's spectral gap, so every
    // action (even the empty one) violates the topology constraint and the
    // run aborts; the other cell still completes.
    let scratch = Scratch::new("fail");
    let text = "n = 32\nchurn = 0, 2\nmode = adversarial\nalpha = 0.9\nrounds = 4\nseeds = 0\n";
    let campaign = parse_config(text).unwrap();
    let ok = run_campaign(&campaign, scratch.path(), 1, 0).unwrap();
    assert!(!ok, "campaign must report failure");
    let summary = fs::read_to_string(scratch.path().join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    let failed_rows: Vec<&&str> = rows.iter().filter(|r| r.contains(",failed,")).collect();
    assert_eq!(failed_rows.len(), 2, "both cells trip the gap constraint");
    assert!(failed_rows[0].contains("spectral gap"), "{}", failed_rows[0]);
}

#[test]
fn replay_subcommand_matrix() {
    let scratch = Scratch::new("replay");
    let text = "n = 16, 32\nchurn = 2\nrounds = 8\nseeds = 0..1\n";
    let config_path = scratch.path().join("campaign.conf");
    fs::write(&config_path, text).unwrap();
    let out_dir = scratch.path().join("out");
    let (ok, resolved) = simulate_file(&config_path, Some(&out_dir), 1, 0).unwrap();
    assert!(ok);
    assert_eq!(resolved, out_dir);

    let transcript_path = out_dir.join("cells/c0000/c0000-s1.transcript");

    // Untouched transcript replays clean.
    match replay_files(&transcript_path, &config_path, 0).unwrap() {
        ReplayOutcome::Match => {}
        _ => panic!("expected clean replay"),
    }

    // Corrupting the final hash must fail the replay.
    let original = fs::read_to_string(&transcript_path).unwrap();
    let corrupted = {
        let mut t = original.clone();
        let final_pos = t.rfind("FINAL\t").unwrap();
        let hex_start = final_pos + "FINAL\t".len();
        let old = t.as_bytes()[hex_start];
        let new = if old == b'0' { '1' } else { '0' };
        t.replace_range(hex_start..hex_start + 1, &new.to_string());
        t
    };
    let corrupted_path = scratch.path().join("corrupted.transcript");
    fs::write(&corrupted_path, corrupted).unwrap();
    match replay_files(&corrupted_path, &config_path, 0).unwrap() {
        ReplayOutcome::Diverged { .. } => {}
        _ => panic!("expected divergence"),
    }

    // A transcript replayed against a different campaign is a mismatch.
    let other_config = scratch.path().join("other.conf");
    fs::write(&other_config, "n = 48\nchurn = 2\nrounds = 8\nseeds = 0..1\n").unwrap();
    match replay_files(&transcript_path, &other_config, 0).unwrap() {
        ReplayOutcome::ConfigMismatch => {}
        _ => panic!("expected config mismatch"),
    }

    // Missing files are usage errors.
    let missing = scratch.path().join("nope.transcript");
    match replay_files(&missing, &config_path, 0) {
        Err(CliError::Usage(_)) => {}
        other => panic!("expected usage error, got {other:?}"),
    }
}

#[test]
fn config_out_key_sets_default_output_dir() {
    let scratch = Scratch::new("outkey");
    let configured = scratch.path().join("from-config");
    let text = format!("n = 8\nrounds = 2\nout = {}\n", configured.display());
    let config_path = scratch.path().join("c.conf");
    fs::write(&config_path, text).unwrap();
    // No override: the config's `out` wins.
    let (ok, resolved) = simulate_file(&config_path, None, 1, 0).unwrap();
    assert!(ok);
    assert_eq!(resolved, configured);
    assert!(configured.join("summary.csv").exists());
    // An explicit override beats the config key.
    let flagged = scratch.path().join("from-flag");
    let (_, resolved) = simulate_file(&config_path, Some(&flagged), 1, 0).unwrap();
    assert_eq!(resolved, flagged);
}

#[test]
fn seed_offset_shifts_every_run() {
    let scratch = Scratch::new("offset");
    let campaign = parse_config("n = 8\nrounds = 3\nseeds = 0..1\n").unwrap();
    assert!(run_campaign(&campaign, scratch.path(), 1, 100).unwrap());
    let summary = fs::read_to_string(scratch.path().join("summary.csv")).unwrap();
    assert!(summary.contains("c0000-s100"));
    assert!(summary.contains("c0000-s101"));
}
