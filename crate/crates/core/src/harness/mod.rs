//! Experiment harness: synthetic corpora, configuration, sweeps, trace
//! metrics and plot-ready CSVs.

pub mod config;
pub mod corpus;
pub mod experiment;
pub mod plot;
pub mod report;

pub use config::{ExperimentConfig, PredictorKind};
pub use corpus::{gen_corpus, gen_out_of_domain, Dataset, GeneratedCorpus, MarkovSourceSpec};
pub use experiment::{run_experiment, ExperimentOutcome, PointResult, SummaryRow, Workbench};
pub use plot::plot_data;
pub use report::{metrics_from_traces, PairedRow, RunRow, TraceMetrics};
