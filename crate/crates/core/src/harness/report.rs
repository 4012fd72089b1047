//! CSV rows for per-run metrics and paired summaries, and the trace-file
//! metrics pipeline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::engine::RunResult;
use crate::error::{Error, Result};
use crate::metrics::{average_lagging, awr, corpus_bleu, delay_vector};
use crate::snapshot::SnapshotMatrix;
use crate::trace::{EventTrace, RunConfig};
use crate::vocab::{TokenId, Vocabulary};

pub const RUN_COLUMNS: [&str; 13] = [
    "run_id", "policy", "param", "tau", "predictor", "I", "J", "W", "S", "H", "AL", "AWR", "BLEU",
];

/// One row per engine run (one sentence under one configuration).
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub run_id: String,
    pub policy: String,
    pub param: f64,
    pub tau: Option<f64>,
    pub predictor: String,
    pub source_len: usize,
    pub target_len: usize,
    pub withdrawals: usize,
    pub speculations: usize,
    pub hits: usize,
    pub al: f64,
    pub awr: f64,
    pub bleu: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunRow {
    fn from_parts(
        run_id: String,
        config: &RunConfig,
        trace: &EventTrace,
        snapshots: &SnapshotMatrix,
        reference: Option<&[TokenId]>,
    ) -> Result<Self> {
        let target_len = snapshots.target_len();
        let withdrawals = trace.withdrawals();
        let bleu = reference
            .map(|r| corpus_bleu(&[snapshots.final_row()], &[r]))
            .transpose()?;
        Ok(RunRow {
            run_id,
            policy: config.policy.clone(),
            param: config.param,
            tau: config.tau,
            predictor: config.predictor.clone(),
            source_len: snapshots.source_len(),
            target_len,
            withdrawals,
            speculations: trace.speculations(),
            hits: trace.commits(),
            al: average_lagging(&delay_vector(snapshots))?,
            awr: awr(withdrawals, target_len)?,
            bleu,
        })
    }

    pub fn from_run(run_id: String, run: &RunResult, reference: Option<&[TokenId]>) -> Result<Self> {
        Self::from_parts(run_id, &run.trace.config, &run.trace, &run.snapshots, reference)
    }

    pub fn from_trace(run_id: String, trace: &EventTrace, reference: Option<&[TokenId]>) -> Result<Self> {
        let snapshots = SnapshotMatrix::from_trace(trace)?;
        Self::from_parts(run_id, &trace.config, trace, &snapshots, reference)
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.run_id.clone(),
            self.policy.clone(),
            self.param.to_string(),
            opt(self.tau),
            self.predictor.clone(),
            self.source_len.to_string(),
            self.target_len.to_string(),
            self.withdrawals.to_string(),
            self.speculations.to_string(),
            self.hits.to_string(),
            self.al.to_string(),
            self.awr.to_string(),
            opt(self.bleu),
        ]
    }
}

pub fn write_runs(path: &Path, rows: &[RunRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RUN_COLUMNS)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const PAIRED_COLUMNS: [&str; 10] = [
    "policy", "param", "tau", "predictor", "corpus", "sentences", "AL_baseline", "AL", "AL_diff", "AWR",
];

/// Speculative runs of one configuration paired with their baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRow {
    pub policy: String,
    pub param: f64,
    pub tau: Option<f64>,
    pub predictor: String,
    pub corpus: String,
    pub sentences: usize,
    pub al_baseline: f64,
    pub al: f64,
    pub al_diff: f64,
    pub awr: f64,
}

impl PairedRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.policy.clone(),
            self.param.to_string(),
            opt(self.tau),
            self.predictor.clone(),
            self.corpus.clone(),
            self.sentences.to_string(),
            self.al_baseline.to_string(),
            self.al.to_string(),
            self.al_diff.to_string(),
            self.awr.to_string(),
        ]
    }
}

pub fn write_paired(path: &Path, rows: &[PairedRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PAIRED_COLUMNS)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Output of [`metrics_from_traces`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceMetrics {
    pub runs: Vec<RunRow>,
    pub paired: Vec<PairedRow>,
}

/// Computes per-run rows from trace files and pairs every speculative run
/// with the baseline run of the same policy, corpus and sentence.
///
/// `references`, when given, is indexed by the `sentence` field of each
/// trace header and enables the BLEU column.
pub fn metrics_from_traces(paths: &[PathBuf], references: Option<&[String]>) -> Result<TraceMetrics> {
    let mut vocab = Vocabulary::new();
    let refs: Option<Vec<Vec<TokenId>>> = references.map(|lines| {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(|t| vocab.intern(t)).collect())
            .collect()
    });
    let mut runs = Vec::with_capacity(paths.len());
    let mut traces = Vec::with_capacity(paths.len());
    for path in paths {
        let trace = EventTrace::read_file(path, &mut vocab)?;
        let reference = match &refs {
            Some(r) => Some(r.get(trace.config.sentence).map(Vec::as_slice).ok_or_else(|| {
                Error::Config(format!(
                    "{}: sentence {} has no reference",
                    path.display(),
                    trace.config.sentence
                ))
            })?),
            None => None,
        };
        // `<config dir>/<sentence>` as written by the experiment runner
        let id = path
            .with_extension("")
            .iter()
            .rev()
            .take(2)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .map(|c| c.to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        runs.push(RunRow::from_trace(id, &trace, reference)?);
        traces.push(trace);
    }

    type BaseKey = (String, String, String, u64, usize);
    let base_key =
        |c: &RunConfig| -> BaseKey { (c.policy.clone(), c.param.to_string(), c.corpus.clone(), c.seed, c.sentence) };
    let mut baselines: BTreeMap<BaseKey, f64> = BTreeMap::new();
    for (trace, row) in traces.iter().zip(&runs) {
        if trace.config.mode == "baseline" {
            baselines.insert(base_key(&trace.config), row.al);
        }
    }
    // (policy, param, tau, predictor, corpus) -> (n, sum AL_b, sum AL, W, J)
    type GroupKey = (String, String, String, String, String);
    let mut groups: BTreeMap<GroupKey, (usize, f64, f64, usize, usize)> = BTreeMap::new();
    for (trace, row) in traces.iter().zip(&runs) {
        let c = &trace.config;
        if c.mode != "speculative" {
            continue;
        }
        let Some(&al_b) = baselines.get(&base_key(c)) else {
            continue;
        };
        let g = groups
            .entry((c.policy.clone(), c.param.to_string(), opt(c.tau), c.predictor.clone(), c.corpus.clone()))
            .or_default();
        g.0 += 1;
        g.1 += al_b;
        g.2 += row.al;
        g.3 += row.withdrawals;
        g.4 += row.target_len;
    }
    let paired = groups
        .into_iter()
        .map(|((policy, param, tau, predictor, corpus), (n, al_b, al, w, j))| {
            let al_baseline = al_b / n as f64;
            let al = al / n as f64;
            Ok(PairedRow {
                policy,
                param: param.parse().unwrap_or(f64::NAN),
                tau: tau.parse().ok(),
                predictor,
                corpus,
                sentences: n,
                al_baseline,
                al,
                al_diff: al_baseline - al,
                awr: awr(w, j)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TraceMetrics { runs, paired })
}
