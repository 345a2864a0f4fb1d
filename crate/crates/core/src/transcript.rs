//! Hash-chained event log for bit-exact replay.
//!
//! Every phase of every round appends one event (round, kind, payload
//! digest); the final hash chains the seed, the config digest and every
//! event, so two executions agree on the final hash iff they agree on the
//! whole event sequence.
//!
//! Text form, one event per line:
//!
//! ```text
//! 0<TAB>seed<TAB><16-hex>
//! 0<TAB>config<TAB><16-hex>
//! <round><TAB><kind><TAB><16-hex>
//! ...
//! FINAL<TAB><16-hex>
//! ```

use crate::digest::{chain, from_hex, to_hex, Digest};
use crate::error::TranscriptError;

/// What happened in an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Initial state construction (round 0 only).
    Init,
    Churn,
    Deliver,
    Step,
    Send,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Init => "init",
            EventKind::Churn => "churn",
            EventKind::Deliver => "deliver",
            EventKind::Step => "step",
            EventKind::Send => "send",
        }
    }

    fn code(self) -> u8 {
        match self {
            EventKind::Init => 0,
            EventKind::Churn => 1,
            EventKind::Deliver => 2,
            EventKind::Step => 3,
            EventKind::Send => 4,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "init" => EventKind::Init,
            "churn" => EventKind::Churn,
            "deliver" => EventKind::Deliver,
            "step" => EventKind::Step,
            "send" => EventKind::Send,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TranscriptEvent {
    pub round: u32,
    pub kind: EventKind,
    pub payload: u64,
}

/// Completed, hash-committed event log of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub seed: u64,
    pub config_digest: u64,
    pub events: Vec<TranscriptEvent>,
    pub final_hash: u64,
}

impl Transcript {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("0\tseed\t{}\n", to_hex(self.seed)));
        out.push_str(&format!("0\tconfig\t{}\n", to_hex(self.config_digest)));
        for e in &self.events {
            out.push_str(&format!("{}\t{}\t{}\n", e.round, e.kind.name(), to_hex(e.payload)));
        }
        out.push_str(&format!("FINAL\t{}\n", to_hex(self.final_hash)));
        out
    }

    pub fn parse(text: &str) -> Result<Self, TranscriptError> {
        let bad = |line: usize, reason: &str| TranscriptError::Parse {
            line,
            reason: reason.to_string(),
        };
        let mut seed = None;
        let mut config_digest = None;
        let mut events = Vec::new();
        let mut final_hash = None;
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            if final_hash.is_some() {
                return Err(bad(lineno, "content after FINAL"));
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["FINAL", h] => {
                    final_hash =
                        Some(from_hex(h).ok_or_else(|| bad(lineno, "bad final hash"))?);
                }
                [round, kind, payload] => {
                    let value =
                        from_hex(payload).ok_or_else(|| bad(lineno, "bad digest"))?;
                    match *kind {
                        "seed" => seed = Some(value),
                        "config" => config_digest = Some(value),
                        k => {
                            let kind = EventKind::parse(k)
                                .ok_or_else(|| bad(lineno, "unknown event kind"))?;
                            let round = round
                                .parse()
                                .map_err(|_| bad(lineno, "bad round number"))?;
                            events.push(TranscriptEvent {
                                round,
                                kind,
                                payload: value,
                            });
                        }
                    }
                }
                _ => return Err(bad(lineno, "expected three tab-separated fields")),
            }
        }
        Ok(Transcript {
            seed: seed.ok_or_else(|| bad(1, "missing seed line"))?,
            config_digest: config_digest.ok_or_else(|| bad(1, "missing config line"))?,
            events,
            final_hash: final_hash.ok_or(TranscriptError::MissingFinal)?,
        })
    }

    /// Index and rendering of the first event differing from `other`, if any.
    pub fn first_divergence(&self, other: &Transcript) -> Option<(usize, String, String)> {
        let render = |e: Option<&TranscriptEvent>| match e {
            Some(e) => format!("{}\t{}\t{}", e.round, e.kind.name(), to_hex(e.payload)),
            None => "<missing>".to_string(),
        };
        let len = self.events.len().max(other.events.len());
        for i in 0..len {
            let (a, b) = (self.events.get(i), other.events.get(i));
            if a != b {
                return Some((i, render(a), render(b)));
            }
        }
        if self.final_hash != other.final_hash {
            return Some((
                len,
                format!("FINAL\t{}", to_hex(self.final_hash)),
                format!("FINAL\t{}", to_hex(other.final_hash)),
            ));
        }
        None
    }
}

/// Incrementally built transcript; the chain hash is updated per event.
#[derive(Debug, Clone)]
pub struct TranscriptBuilder {
    seed: u64,
    config_digest: u64,
    events: Vec<TranscriptEvent>,
    running: u64,
}

impl TranscriptBuilder {
    pub fn new(seed: u64, config_digest: u64) -> Self {
        let mut d = Digest::new();
        d.write_u64(seed);
        d.write_u64(config_digest);
        TranscriptBuilder {
            seed,
            config_digest,
            events: Vec::new(),
            running: d.finish(),
        }
    }

    pub fn push(&mut self, round: u32, kind: EventKind, payload: u64) {
        self.running = chain(self.running, round, kind.code(), payload);
        self.events.push(TranscriptEvent {
            round,
            kind,
            payload,
        });
    }

    pub fn finish(self) -> Transcript {
        Transcript {
            seed: self.seed,
            config_digest: self.config_digest,
            events: self.events,
            final_hash: self.running,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Transcript {
        let mut b = TranscriptBuilder::new(7, 99);
        b.push(0, EventKind::Init, 11);
        b.push(1, EventKind::Churn, 22);
        b.push(1, EventKind::Deliver, 33);
        b.finish()
    }

    #[test]
    fn text_roundtrip() {
        let t = sample();
        let parsed = Transcript::parse(&t.to_text()).unwrap();
        assert_eq!(t, parsed);
    }

    #[test]
    fn final_hash_depends_on_payloads() {
        let a = sample();
        let mut b = TranscriptBuilder::new(7, 99);
        b.push(0, EventKind::Init, 11);
        b.push(1, EventKind::Churn, 23); // flipped payload
        b.push(1, EventKind::Deliver, 33);
        let b = b.finish();
        assert_ne!(a.final_hash, b.final_hash);
        let (idx, _, _) = a.first_divergence(&b).unwrap();
        assert_eq!(idx, 1);
    }

    #[test]
    fn parse_rejects_malformed_lines() {
        assert!(matches!(
            Transcript::parse("0 seed 0000000000000007\n"),
            Err(TranscriptError::Parse { line: 1, .. })
        ));
        let t = sample().to_text();
        let no_final = t.replace("FINAL", "FINA");
        assert!(Transcript::parse(&no_final).is_err());
    }
}
