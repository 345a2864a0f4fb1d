//! churnsim: deterministic churn-simulation campaigns and transcript replay.
//!
//! ```text
//! churnsim simulate <config> [--out DIR] [--jobs N] [--seed-offset K]
//! churnsim replay <transcript> <config> [--seed-offset K]
//! ```
//!
//! The default output directory is `$CHURNSIM_OUT`, falling back to `./out`.
//! Exit codes: 0 ok, 1 run failure, 2 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use churnsim_cli::{replay_files, simulate_file, CliError, ReplayOutcome};

const USAGE: &str = "\
usage:
  churnsim simulate <config> [--out DIR] [--jobs N] [--seed-offset K]
  churnsim replay <transcript> <config> [--seed-offset K]

options:
  --out DIR         output directory (default: $CHURNSIM_OUT or ./out)
  --jobs N          run up to N sweep cells in parallel (default 1)
  --seed-offset K   shift every configured seed by K
";

struct Options {
    out: Option<PathBuf>,
    jobs: usize,
    seed_offset: u64,
    positional: Vec<PathBuf>,
}

fn parse_args(args: &[String]) -> Result<Options, CliError> {
    let mut options = Options {
        out: None,
        jobs: 1,
        seed_offset: 0,
        positional: Vec::new(),
    };
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let mut flag_value = |name: &str| {
            it.next()
                .map(String::as_str)
                .ok_or_else(|| CliError::Usage(format!("{name} needs a value")))
        };
        match arg.as_str() {
            "--out" => options.out = Some(PathBuf::from(flag_value("--out")?)),
            "--jobs" => {
                let v = flag_value("--jobs")?;
                options.jobs = v
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad --jobs value `{v}`")))?;
                if options.jobs == 0 {
                    return Err(CliError::Usage("--jobs must be at least 1".into()));
                }
            }
            "--seed-offset" => {
                let v = flag_value("--seed-offset")?;
                options.seed_offset = v
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad --seed-offset value `{v}`")))?;
            }
            flag if flag.starts_with("--") => {
                return Err(CliError::Usage(format!("unknown flag `{flag}`")))
            }
            path => options.positional.push(PathBuf::from(path)),
        }
    }
    Ok(options)
}

fn run() -> Result<(), CliError> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some((command, rest)) = args.split_first() else {
        return Err(CliError::Usage("missing command".into()));
    };
    let options = parse_args(rest)?;
    match command.as_str() {
        "simulate" => {
            let [config] = options.positional.as_slice() else {
                return Err(CliError::Usage("simulate takes exactly one config path".into()));
            };
            let (all_ok, out_dir) = simulate_file(
                config,
                options.out.as_deref(),
                options.jobs,
                options.seed_offset,
            )?;
            if all_ok {
                println!("campaign complete: {}", out_dir.display());
                Ok(())
            } else {
                Err(CliError::Run(format!(
                    "some runs failed; see {}",
                    out_dir.join("summary.csv").display()
                )))
            }
        }
        "replay" => {
            let [transcript, config] = options.positional.as_slice() else {
                return Err(CliError::Usage(
                    "replay takes a transcript path and a config path".into(),
                ));
            };
            match replay_files(transcript, config, options.seed_offset)? {
                ReplayOutcome::Match => {
                    println!("replay ok: transcript reproduced exactly");
                    Ok(())
                }
                ReplayOutcome::Diverged {
                    index,
                    expected,
                    recomputed,
                } => Err(CliError::Run(format!(
                    "replay diverged at event {index}:\n  stored:     {expected}\n  recomputed: {recomputed}"
                ))),
                ReplayOutcome::ConfigMismatch => Err(CliError::Run(
                    "ConfigMismatch: no run derived from this config matches the transcript's embedded config digest".into(),
                )),
            }
        }
        other => Err(CliError::Usage(format!("unknown command `{other}`"))),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("churnsim: {e}");
            if e.exit_code() == 2 {
                eprint!("{USAGE}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
