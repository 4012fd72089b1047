//! Branch prediction for simultaneous machine translation.
//!
//! A simultaneous translator alternates READ (consume a source token) and
//! WRITE (emit a target token). This crate adds a branch predictor: after each
//! read, a language model guesses the next source token and the translator
//! decodes one step ahead against that guess. Correct guesses move writes one
//! read earlier; wrong ones are withdrawn and re-decoded, so the final output
//! never changes.
//!
//! Modules:
//! - [`vocab`], [`trace`], [`snapshot`]: tokens, the event log of a run and
//!   the per-read output snapshots derived from it.
//! - [`model`]: the deterministic toy translator and its wait-k / adaptive
//!   policies.
//! - [`predictor`]: n-gram, oracle and adversarial branch predictors.
//! - [`engine`]: baseline and speculative decoding loops.
//! - [`metrics`]: delay vector, Average Lagging, withdrawal rate, BLEU.
//! - [`harness`]: synthetic corpora, experiment sweeps and CSV output.

pub mod engine;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod predictor;
pub mod snapshot;
pub mod trace;
pub mod vocab;

pub use engine::{run_baseline, run_corpus, run_corpus_baseline, run_speculative, EngineConfig, ExecutionMode, RunResult};
pub use error::{Error, Result};
pub use metrics::{average_lagging, awr, corpus_bleu, delay_vector, DelayVector, MetricsReport};
pub use model::{Lexicon, Policy, SimtModel};
pub use predictor::{AlwaysWrongPredictor, BranchPredictor, NgramConfig, NgramModel, OraclePredictor, Prediction};
pub use snapshot::SnapshotMatrix;
pub use trace::{Event, EventTrace, RunConfig};
pub use vocab::{Sentence, TokenId, Vocabulary};
