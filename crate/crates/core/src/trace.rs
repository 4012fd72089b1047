//! Event traces of one engine run and their JSON Lines encoding.
//!
//! A trace file starts with a header line `{"run_config":{...}}` followed by
//! one compact JSON object per event. Tokens are written as surface strings.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocabulary};

/// Identifying metadata for a run, carried in the trace header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `baseline` or `speculative`.
    pub mode: String,
    /// `wait-k` or `adaptive`.
    pub policy: String,
    /// k for wait-k, L for adaptive.
    pub param: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub predictor: String,
    pub corpus: String,
    pub seed: u64,
    pub sentence: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: "baseline".into(),
            policy: "wait-k".into(),
            param: 1.0,
            tau: None,
            predictor: "none".into(),
            corpus: "adhoc".into(),
            seed: 0,
            sentence: 0,
        }
    }
}

/// One step of an engine run.
///
/// `i` indexes source reads (1-based; the read of the source end marker gets
/// index I+1). `j` indexes positions of the φ-augmented output stream, so a
/// READ decision written as `<phi>` occupies a position too.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Read { i: usize, token: TokenId },
    /// Prediction of source position `i`.
    Predict { i: usize, token: TokenId, probability: f64 },
    Speculate { j: usize, token: TokenId, basis: usize },
    Commit { j: usize },
    Withdraw { j: usize, old: TokenId, new: TokenId },
    Write { j: usize, token: TokenId, basis: usize },
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventRecord {
    ev: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    i: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    j: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tok: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pred: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    old: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    new: Option<String>,
}

impl EventRecord {
    fn bare(ev: &str) -> Self {
        EventRecord {
            ev: ev.to_string(),
            i: None,
            j: None,
            tok: None,
            pred: None,
            p: None,
            old: None,
            new: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    run_config: RunConfig,
}

impl Event {
    fn to_record(&self, vocab: &Vocabulary) -> EventRecord {
        let s = |id: TokenId| Some(vocab.surface(id).unwrap_or("<unk>").to_string());
        match *self {
            Event::Read { i, token } => EventRecord {
                i: Some(i),
                tok: s(token),
                ..EventRecord::bare("READ")
            },
            Event::Predict { i, token, probability } => EventRecord {
                i: Some(i),
                pred: s(token),
                p: Some(probability),
                ..EventRecord::bare("PREDICT")
            },
            Event::Speculate { j, token, basis } => EventRecord {
                i: Some(basis),
                j: Some(j),
                tok: s(token),
                ..EventRecord::bare("SPECULATE")
            },
            Event::Commit { j } => EventRecord {
                j: Some(j),
                ..EventRecord::bare("COMMIT")
            },
            Event::Withdraw { j, old, new } => EventRecord {
                j: Some(j),
                old: s(old),
                new: s(new),
                ..EventRecord::bare("WITHDRAW")
            },
            Event::Write { j, token, basis } => EventRecord {
                i: Some(basis),
                j: Some(j),
                tok: s(token),
                ..EventRecord::bare("WRITE")
            },
            Event::End => EventRecord::bare("END"),
        }
    }

    fn from_record(rec: &EventRecord, vocab: &mut Vocabulary, line: usize) -> Result<Event> {
        let missing = |field: &str| Error::TraceFormat {
            line,
            msg: format!("{} event without `{field}`", rec.ev),
        };
        let mut tok = |v: &Option<String>, field: &str| -> Result<TokenId> {
            v.as_deref().map(|s| vocab.intern(s)).ok_or_else(|| missing(field))
        };
        let event = match rec.ev.as_str() {
            "READ" => Event::Read {
                i: rec.i.ok_or_else(|| missing("i"))?,
                token: tok(&rec.tok, "tok")?,
            },
            "PREDICT" => Event::Predict {
                i: rec.i.ok_or_else(|| missing("i"))?,
                token: tok(&rec.pred, "pred")?,
                probability: rec.p.ok_or_else(|| missing("p"))?,
            },
            "SPECULATE" => Event::Speculate {
                j: rec.j.ok_or_else(|| missing("j"))?,
                token: tok(&rec.tok, "tok")?,
                basis: rec.i.ok_or_else(|| missing("i"))?,
            },
            "COMMIT" => Event::Commit {
                j: rec.j.ok_or_else(|| missing("j"))?,
            },
            "WITHDRAW" => Event::Withdraw {
                j: rec.j.ok_or_else(|| missing("j"))?,
                old: tok(&rec.old, "old")?,
                new: tok(&rec.new, "new")?,
            },
            "WRITE" => Event::Write {
                j: rec.j.ok_or_else(|| missing("j"))?,
                token: tok(&rec.tok, "tok")?,
                basis: rec.i.ok_or_else(|| missing("i"))?,
            },
            "END" => Event::End,
            other => {
                return Err(Error::TraceFormat {
                    line,
                    msg: format!("unknown event kind `{other}`"),
                })
            }
        };
        if event.to_record(vocab) != *rec {
            return Err(Error::TraceFormat {
                line,
                msg: format!("unexpected fields on {} event", rec.ev),
            });
        }
        Ok(event)
    }
}

/// The ordered record of one engine run.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub config: RunConfig,
    pub events: Vec<Event>,
}

impl EventTrace {
    pub fn new(config: RunConfig) -> Self {
        EventTrace {
            config,
            events: Vec::new(),
        }
    }

    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    pub fn withdrawals(&self) -> usize {
        self.count(|e| matches!(e, Event::Withdraw { .. }))
    }

    pub fn speculations(&self) -> usize {
        self.count(|e| matches!(e, Event::Speculate { .. }))
    }

    pub fn commits(&self) -> usize {
        self.count(|e| matches!(e, Event::Commit { .. }))
    }

    /// Number of real (non end-marker) source reads.
    pub fn source_len(&self) -> usize {
        self.count(|e| matches!(e, Event::Read { token, .. } if *token != TokenId::EOS))
    }

    fn count(&self, pred: impl Fn(&Event) -> bool) -> usize {
        self.events.iter().filter(|e| pred(e)).count()
    }

    /// Source tokens in read order, end marker excluded.
    pub fn source(&self) -> Vec<TokenId> {
        self.events
            .iter()
            .filter_map(|e| match e {
                Event::Read { token, .. } if *token != TokenId::EOS => Some(*token),
                _ => None,
            })
            .collect()
    }

    /// Serializes to JSON Lines, header first, one event per line.
    pub fn to_jsonl(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        let header = Header {
            run_config: self.config.clone(),
        };
        // serde_json cannot fail on these plain structs
        writeln!(out, "{}", serde_json::to_string(&header).expect("header")).unwrap();
        for e in &self.events {
            let line = serde_json::to_string(&e.to_record(vocab)).expect("event");
            writeln!(out, "{line}").unwrap();
        }
        out
    }

    /// Parses a JSON Lines trace. Surface strings missing from `vocab` are
    /// interned.
    pub fn from_jsonl(text: &str, vocab: &mut Vocabulary) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or(Error::TraceFormat {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header: Header = serde_json::from_str(first).map_err(|e| Error::TraceFormat {
            line: 1,
            msg: e.to_string(),
        })?;
        let mut trace = EventTrace::new(header.run_config);
        for (n, line) in lines {
            let rec: EventRecord = serde_json::from_str(line).map_err(|e| Error::TraceFormat {
                line: n + 1,
                msg: e.to_string(),
            })?;
            trace.push(Event::from_record(&rec, vocab, n + 1)?);
        }
        Ok(trace)
    }

    pub fn write_file(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        std::fs::write(path, self.to_jsonl(vocab)).map_err(|e| Error::io(path, e))
    }

    pub fn read_file(path: &Path, vocab: &mut Vocabulary) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text, vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        Vocabulary::from_corpus(&["a b c A B C"]).unwrap()
    }

    #[test]
    fn header_and_event_layout() {
        let v = vocab();
        let a = v.lookup("a").unwrap();
        let b = v.lookup("B").unwrap();
        let mut t = EventTrace::new(RunConfig::default());
        t.push(Event::Read { i: 1, token: a });
        t.push(Event::Predict { i: 2, token: a, probability: 0.25 });
        t.push(Event::Speculate { j: 1, token: b, basis: 1 });
        t.push(Event::End);
        let text = t.to_jsonl(&v);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[0],
            r#"{"run_config":{"mode":"baseline","policy":"wait-k","param":1.0,"predictor":"none","corpus":"adhoc","seed":0,"sentence":0}}"#
        );
        assert_eq!(lines[1], r#"{"ev":"READ","i":1,"tok":"a"}"#);
        assert_eq!(lines[2], r#"{"ev":"PREDICT","i":2,"pred":"a","p":0.25}"#);
        assert_eq!(lines[3], r#"{"ev":"SPECULATE","i":1,"j":1,"tok":"B"}"#);
        assert_eq!(lines[4], r#"{"ev":"END"}"#);
    }

    #[test]
    fn rejects_missing_and_extra_fields() {
        let mut v = vocab();
        let header = r#"{"run_config":{"mode":"baseline","policy":"wait-k","param":1.0,"predictor":"none","corpus":"adhoc","seed":0,"sentence":0}}"#;
        let missing = format!("{header}\n{{\"ev\":\"READ\",\"i\":1}}\n");
        assert!(EventTrace::from_jsonl(&missing, &mut v).is_err());
        let extra = format!("{header}\n{{\"ev\":\"COMMIT\",\"i\":3,\"j\":1}}\n");
        assert!(EventTrace::from_jsonl(&extra, &mut v).is_err());
        let unknown = format!("{header}\n{{\"ev\":\"JUMP\"}}\n");
        assert!(EventTrace::from_jsonl(&unknown, &mut v).is_err());
        assert!(EventTrace::from_jsonl("", &mut v).is_err());
    }

    fn arb_event() -> impl Strategy<Value = Event> {
        let tok = (0u32..10).prop_map(TokenId);
        prop_oneof![
            (1usize..50, tok.clone()).prop_map(|(i, token)| Event::Read { i, token }),
            (1usize..50, tok.clone(), 0.0f64..=1.0)
                .prop_map(|(i, token, probability)| Event::Predict { i, token, probability }),
            (1usize..50, tok.clone(), 1usize..50)
                .prop_map(|(j, token, basis)| Event::Speculate { j, token, basis }),
            (1usize..50).prop_map(|j| Event::Commit { j }),
            (1usize..50, tok.clone(), tok.clone())
                .prop_map(|(j, old, new)| Event::Withdraw { j, old, new }),
            (1usize..50, tok, 1usize..50).prop_map(|(j, token, basis)| Event::Write { j, token, basis }),
            Just(Event::End),
        ]
    }

    proptest! {
        #[test]
        fn jsonl_round_trip_is_byte_identical(
            events in proptest::collection::vec(arb_event(), 0..40),
            tau in proptest::option::of(0.0f64..=1.0),
            seed in any::<u64>(),
        ) {
            let mut v = Vocabulary::from_corpus(&["a b c d e f"]).unwrap();
            let config = RunConfig { tau, seed, ..RunConfig::default() };
            let trace = EventTrace { config, events };
            let text = trace.to_jsonl(&v);
            let parsed = EventTrace::from_jsonl(&text, &mut v).unwrap();
            prop_assert_eq!(&parsed, &trace);
            prop_assert_eq!(parsed.to_jsonl(&v), text);
        }
    }
}
