//! The snapshot matrix: the visible target prefix after each source read.

use crate::error::{Error, Result};
use crate::trace::{Event, EventTrace};
use crate::vocab::TokenId;

/// Row `i - 1` holds the output visible once read `i` and everything issued
/// before read `i + 1` (including speculative writes) has been processed.
/// Rows never contain `<phi>` or `</s>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotMatrix {
    rows: Vec<Vec<TokenId>>,
}

impl SnapshotMatrix {
    /// Wraps raw rows. Fails on an empty row list.
    pub fn new(rows: Vec<Vec<TokenId>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InconsistentTrace("no source reads".into()));
        }
        Ok(SnapshotMatrix { rows })
    }

    pub fn rows(&self) -> &[Vec<TokenId>] {
        &self.rows
    }

    /// I, the number of source reads.
    pub fn source_len(&self) -> usize {
        self.rows.len()
    }

    pub fn final_row(&self) -> &[TokenId] {
        self.rows.last().expect("non-empty")
    }

    /// J, the length of the final output.
    pub fn target_len(&self) -> usize {
        self.final_row().len()
    }

    /// Replays a trace into its snapshot matrix.
    pub fn from_trace(trace: &EventTrace) -> Result<Self> {
        Replay::default().run(trace)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Committed,
    Speculative,
}

#[derive(Default)]
struct Replay {
    output: Vec<(TokenId, Slot)>,
    rows: Vec<Vec<TokenId>>,
    reads: usize,
    last_read: usize,
    source_done: bool,
    ended: bool,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InconsistentTrace(msg.into())
}

impl Replay {
    fn visible(&self) -> Vec<TokenId> {
        self.output
            .iter()
            .map(|&(t, _)| t)
            .filter(|&t| t != TokenId::PHI && t != TokenId::EOS)
            .collect()
    }

    fn append(&mut self, j: usize, token: TokenId, slot: Slot) -> Result<()> {
        if self.reads == 0 {
            return Err(bad(format!("output at position {j} before the first read")));
        }
        if j != self.output.len() + 1 {
            return Err(bad(format!(
                "position {j} written out of order (expected {})",
                self.output.len() + 1
            )));
        }
        if self.output.last().is_some_and(|&(t, _)| t == TokenId::EOS) {
            return Err(bad(format!("position {j} written after end of output")));
        }
        self.output.push((token, slot));
        Ok(())
    }

    fn speculative_slot(&mut self, j: usize) -> Result<&mut (TokenId, Slot)> {
        let len = self.output.len();
        match self.output.get_mut(j.wrapping_sub(1)) {
            Some(slot) if slot.1 == Slot::Speculative && j == len => Ok(slot),
            Some(_) => Err(bad(format!("position {j} has no open speculation"))),
            None => Err(bad(format!("position {j} was never speculated"))),
        }
    }

    fn run(mut self, trace: &EventTrace) -> Result<SnapshotMatrix> {
        for event in &trace.events {
            if self.ended {
                return Err(bad("event after END"));
            }
            match *event {
                Event::Read { i, token } => {
                    if self.source_done {
                        return Err(bad("read after end of source"));
                    }
                    if i != self.last_read + 1 {
                        return Err(bad(format!("read {i} follows read {}", self.last_read)));
                    }
                    self.last_read = i;
                    if token == TokenId::EOS {
                        self.source_done = true;
                    } else {
                        if self.reads > 0 {
                            self.rows.push(self.visible());
                        }
                        self.reads += 1;
                    }
                }
                Event::Predict { .. } => {}
                Event::Write { j, token, .. } => self.append(j, token, Slot::Committed)?,
                Event::Speculate { j, token, .. } => self.append(j, token, Slot::Speculative)?,
                Event::Commit { j } => self.speculative_slot(j)?.1 = Slot::Committed,
                Event::Withdraw { j, old, new } => {
                    let slot = self.speculative_slot(j)?;
                    if slot.0 != old {
                        return Err(bad(format!("withdrawal at {j} names the wrong token")));
                    }
                    *slot = (new, Slot::Committed);
                }
                Event::End => self.ended = true,
            }
        }
        if !self.ended {
            return Err(bad("trace does not end with END"));
        }
        if self.reads == 0 {
            return Err(bad("no source reads"));
        }
        self.rows.push(self.visible());
        SnapshotMatrix::new(self.rows)
    }
}
