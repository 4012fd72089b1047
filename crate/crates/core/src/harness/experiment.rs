//! Sweeps over (policy, predictor, τ) grid points.
//!
//! Every grid point runs the baseline and the speculative engine over the test
//! split, checks output equivalence and withdrawal accounting inline, and
//! contributes one summary row. Grid points and sentences run in parallel;
//! rows are collected in grid order, then sentence order.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::engine::{run_corpus, run_corpus_baseline, EngineConfig, RunResult};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, PredictorKind};
use crate::harness::corpus::{gen_corpus, gen_out_of_domain, read_lines, Dataset};
use crate::harness::report::{write_runs, RunRow};
use crate::metrics::{average_lagging, delay_vector, MetricsReport};
use crate::model::{Policy, SimtModel};
use crate::predictor::{
    sentence_accuracy, AlwaysWrongPredictor, BranchPredictor, NgramModel, OraclePredictor,
};
use crate::vocab::{Sentence, TokenId};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const RUNS_FILE: &str = "runs.csv";
pub const CONFIG_FILE: &str = "config.txt";
pub const TRACE_DIR: &str = "traces";

pub const SUMMARY_COLUMNS: [&str; 18] = [
    "policy",
    "param",
    "tau",
    "predictor",
    "sentences",
    "accuracy",
    "AL_baseline",
    "AL",
    "AL_diff",
    "AWR",
    "BLEU_baseline",
    "BLEU",
    "W",
    "S",
    "H",
    "J",
    "status",
    "data",
];

/// Loaded data plus trained predictors, shared by every grid point.
pub struct Workbench {
    pub config: ExperimentConfig,
    pub dataset: Dataset,
    /// Written into every trace header.
    pub corpus_id: String,
    /// Provenance label for CSV rows (`synthetic-markov` or `file`).
    pub data_label: String,
    alphabet: Vec<TokenId>,
    in_domain: Option<NgramModel>,
    out_of_domain: Option<NgramModel>,
}

impl Workbench {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        let spec = &config.source;
        let (dataset, corpus_id, data_label) = match &config.corpus {
            Some(path) => {
                let lexicon = config
                    .lexicon
                    .as_deref()
                    .ok_or_else(|| Error::Config("`corpus` needs a `lexicon` file".into()))?;
                let dataset = Dataset::load(path, lexicon, config.references.as_deref())?;
                (dataset, path.display().to_string(), "file".to_string())
            }
            None => {
                let generated = gen_corpus(spec, config.sentences)?;
                let dataset = Dataset::from_text(&generated.corpus, &generated.lexicon, None)?;
                let id = format!(
                    "markov:seed={},V={},kappa={},rho={},len={}-{},n={}",
                    spec.seed,
                    spec.vocab_size,
                    spec.kappa,
                    spec.ambiguity_rate,
                    spec.min_len,
                    spec.max_len,
                    config.sentences
                );
                (dataset, id, "synthetic-markov".to_string())
            }
        };
        if dataset.sources.len() < 2 {
            return Err(Error::Config("need at least two sentences for a train/test split".into()));
        }
        let alphabet = dataset.lexicon.source_tokens();
        let wants = |k| config.predictors.contains(&k);
        let in_domain = if wants(PredictorKind::InDomain) {
            Some(NgramModel::train(dataset.train(), &alphabet, config.ngram)?)
        } else {
            None
        };
        let out_of_domain = if wants(PredictorKind::OutOfDomain) {
            let lines = match (&config.ood_corpus, &config.corpus) {
                (Some(path), _) => read_lines(path)?,
                (None, None) => gen_out_of_domain(spec, dataset.train().len())?,
                (None, Some(_)) => {
                    return Err(Error::Config(
                        "out-of-domain predictor over a file corpus needs `ood_corpus`".into(),
                    ))
                }
            };
            let ood = dataset.encode(&lines)?;
            Some(NgramModel::train(&ood, &alphabet, config.ngram)?)
        } else {
            None
        };
        Ok(Workbench {
            config: config.clone(),
            dataset,
            corpus_id,
            data_label,
            alphabet,
            in_domain,
            out_of_domain,
        })
    }

    pub fn model(&self, policy: Policy) -> SimtModel {
        SimtModel::new(self.dataset.lexicon.clone(), policy)
    }

    pub fn ngram(&self, kind: PredictorKind) -> Option<&NgramModel> {
        match kind {
            PredictorKind::InDomain => self.in_domain.as_ref(),
            PredictorKind::OutOfDomain => self.out_of_domain.as_ref(),
            _ => None,
        }
    }

    pub fn predictor(&self, kind: PredictorKind, sentence: &Sentence) -> Result<Box<dyn BranchPredictor + '_>> {
        Ok(match kind {
            PredictorKind::Oracle => Box::new(OraclePredictor::new(sentence)),
            PredictorKind::AlwaysWrong => Box::new(AlwaysWrongPredictor::new(sentence, &self.alphabet)),
            _ => Box::new(
                self.ngram(kind)
                    .ok_or_else(|| Error::Config(format!("predictor `{kind}` was not prepared")))?,
            ),
        })
    }

    /// Per-sentence next-token accuracy of `kind` on the test split.
    pub fn accuracies(&self, kind: PredictorKind) -> Result<Vec<f64>> {
        self.dataset
            .test()
            .iter()
            .map(|s| Ok(sentence_accuracy(self.predictor(kind, s)?.as_ref(), s)))
            .collect()
    }

    fn tag(&self, runs: &mut [RunResult], predictor: &str) {
        let offset = self.dataset.split_point();
        for (n, run) in runs.iter_mut().enumerate() {
            let c = &mut run.trace.config;
            c.predictor = predictor.to_string();
            c.corpus = self.corpus_id.clone();
            c.seed = self.config.source.seed;
            c.sentence = offset + n;
        }
    }

    pub fn baseline(&self, policy: Policy) -> Result<Vec<RunResult>> {
        let mut runs = run_corpus_baseline(&self.model(policy), self.dataset.test())?;
        self.tag(&mut runs, "none");
        Ok(runs)
    }

    pub fn speculative(&self, policy: Policy, kind: PredictorKind, tau: f64) -> Result<Vec<RunResult>> {
        let config = EngineConfig {
            mode: self.config.mode,
            ..EngineConfig::with_threshold(tau)
        };
        if matches!(kind, PredictorKind::InDomain | PredictorKind::OutOfDomain) && self.ngram(kind).is_none() {
            return Err(Error::Config(format!("predictor `{kind}` was not prepared")));
        }
        let mut runs = run_corpus(
            &self.model(policy),
            |s: &Sentence| self.predictor(kind, s).expect("n-gram availability checked above"),
            self.dataset.test(),
            &config,
        )?;
        self.tag(&mut runs, kind.name());
        Ok(runs)
    }
}

/// Inline invariant checks; returns one message per violation.
pub fn check_runs(baseline: &[RunResult], speculative: &[RunResult], offset: usize) -> Vec<String> {
    let mut failures = Vec::new();
    if baseline.len() != speculative.len() {
        failures.push(format!(
            "{} baseline runs vs {} speculative runs",
            baseline.len(),
            speculative.len()
        ));
        return failures;
    }
    for (n, (b, s)) in baseline.iter().zip(speculative).enumerate() {
        let idx = offset + n;
        if b.final_output != s.final_output {
            failures.push(format!("sentence {idx}: speculative output differs from baseline"));
        }
        if s.speculations != s.hits + s.withdrawals {
            failures.push(format!(
                "sentence {idx}: S={} but H+W={}",
                s.speculations,
                s.hits + s.withdrawals
            ));
        }
        if s.withdrawals != s.trace.withdrawals() {
            failures.push(format!("sentence {idx}: W does not match trace"));
        }
        let (gb, gs) = (delay_vector(&b.snapshots), delay_vector(&s.snapshots));
        if gb.g.iter().zip(&gs.g).any(|(x, y)| y > x) {
            failures.push(format!("sentence {idx}: speculation delayed a write"));
        }
    }
    failures
}

/// Result of one grid point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub policy: Policy,
    pub predictor: PredictorKind,
    pub tau: f64,
    pub sentences: usize,
    /// Mean per-sentence prediction accuracy.
    pub accuracy: f64,
    pub baseline: MetricsReport,
    /// Carries `al_diff`.
    pub speculative: MetricsReport,
    pub per_sentence_accuracy: Vec<f64>,
    pub per_sentence_al_diff: Vec<f64>,
    pub failures: Vec<String>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

impl Workbench {
    /// Runs one grid point against precomputed baseline runs.
    pub fn evaluate(
        &self,
        policy: Policy,
        kind: PredictorKind,
        tau: f64,
        baseline: &[RunResult],
    ) -> Result<(PointResult, Vec<RunResult>)> {
        let runs = self.speculative(policy, kind, tau)?;
        let refs = self.dataset.test_references();
        let base = MetricsReport::from_runs(&self.corpus_id, baseline, Some(refs))?;
        let spec = MetricsReport::from_runs(&self.corpus_id, &runs, Some(refs))?.paired_with(&base)?;
        let per_sentence_al_diff = baseline
            .iter()
            .zip(&runs)
            .map(|(b, s)| {
                Ok(average_lagging(&delay_vector(&b.snapshots))? - average_lagging(&delay_vector(&s.snapshots))?)
            })
            .collect::<Result<Vec<_>>>()?;
        let per_sentence_accuracy = self.accuracies(kind)?;
        let failures = check_runs(baseline, &runs, self.dataset.split_point());
        Ok((
            PointResult {
                policy,
                predictor: kind,
                tau,
                sentences: runs.len(),
                accuracy: mean(&per_sentence_accuracy),
                baseline: base,
                speculative: spec,
                per_sentence_accuracy,
                per_sentence_al_diff,
                failures,
            },
            runs,
        ))
    }
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub param: f64,
    pub tau: f64,
    pub predictor: String,
    pub sentences: usize,
    pub accuracy: Option<f64>,
    pub al_baseline: Option<f64>,
    pub al: Option<f64>,
    pub al_diff: Option<f64>,
    pub awr: Option<f64>,
    pub bleu_baseline: Option<f64>,
    pub bleu: Option<f64>,
    pub w: usize,
    pub s: usize,
    pub h: usize,
    pub j: usize,
    pub status: String,
    pub data: String,
}

impl SummaryRow {
    fn record(&self) -> Vec<String> {
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.policy.clone(),
            self.param.to_string(),
            self.tau.to_string(),
            self.predictor.clone(),
            self.sentences.to_string(),
            o(self.accuracy),
            o(self.al_baseline),
            o(self.al),
            o(self.al_diff),
            o(self.awr),
            o(self.bleu_baseline),
            o(self.bleu),
            self.w.to_string(),
            self.s.to_string(),
            self.h.to_string(),
            self.j.to_string(),
            self.status.clone(),
            self.data.clone(),
        ]
    }

    fn failed(policy: Policy, kind: PredictorKind, tau: f64, status: String, data: &str) -> Self {
        SummaryRow {
            policy: policy.name().into(),
            param: policy.param(),
            tau,
            predictor: kind.name().into(),
            sentences: 0,
            accuracy: None,
            al_baseline: None,
            al: None,
            al_diff: None,
            awr: None,
            bleu_baseline: None,
            bleu: None,
            w: 0,
            s: 0,
            h: 0,
            j: 0,
            status,
            data: data.into(),
        }
    }

    fn from_point(p: &PointResult, data: &str) -> Self {
        let c = &p.speculative.counts;
        SummaryRow {
            policy: p.policy.name().into(),
            param: p.policy.param(),
            tau: p.tau,
            predictor: p.predictor.name().into(),
            sentences: p.sentences,
            accuracy: Some(p.accuracy),
            al_baseline: Some(p.baseline.al),
            al: Some(p.speculative.al),
            al_diff: p.speculative.al_diff,
            awr: Some(p.speculative.awr),
            bleu_baseline: p.baseline.bleu,
            bleu: p.speculative.bleu,
            w: c.withdrawals,
            s: c.speculations,
            h: c.hits,
            j: c.target_len,
            status: if p.failures.is_empty() {
                "ok".into()
            } else {
                format!("check failed: {}", p.failures.join("; "))
            },
            data: data.into(),
        }
    }
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_COLUMNS)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// What [`run_experiment`] produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub output: PathBuf,
    pub summary: Vec<SummaryRow>,
    /// Grid-point errors and failed invariant checks; empty on success.
    pub failures: Vec<String>,
}

impl ExperimentOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn run_label(policy: Policy, predictor: &str, tau: Option<f64>) -> String {
    match tau {
        Some(t) => format!("{policy}_{predictor}_tau{t}"),
        None => format!("{policy}_{predictor}"),
    }
}

fn run_rows(label: &str, runs: &[RunResult], refs: &[Sentence]) -> Result<Vec<RunRow>> {
    runs.iter()
        .zip(refs)
        .map(|(run, r)| {
            RunRow::from_run(
                format!("{label}/{}", run.trace.config.sentence),
                run,
                Some(r.ids()),
            )
        })
        .collect()
}

fn write_traces(dir: &Path, runs: &[RunResult], bench: &Workbench) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for run in runs {
        let path = dir.join(format!("{:05}.jsonl", run.trace.config.sentence));
        run.trace.write_file(&path, &bench.dataset.vocab)?;
    }
    Ok(())
}

/// Runs the whole grid and writes `config.txt`, `summary.csv`, `runs.csv`
/// and, if enabled, per-run traces under `traces/`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let bench = Workbench::prepare(config)?;
    let out = &config.output;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let config_path = out.join(CONFIG_FILE);
    std::fs::write(&config_path, config.to_text()).map_err(|e| Error::io(&config_path, e))?;

    let refs = bench.dataset.test_references();
    let mut failures = Vec::new();
    let baselines: Vec<Result<Vec<RunResult>>> =
        config.policies.par_iter().map(|p| bench.baseline(*p)).collect();

    let grid: Vec<(usize, Policy, PredictorKind, f64)> = config
        .policies
        .iter()
        .enumerate()
        .flat_map(|(n, p)| {
            config
                .predictors
                .iter()
                .flat_map(move |k| config.thresholds.iter().map(move |t| (n, *p, *k, *t)))
        })
        .collect();
    let points: Vec<Result<(PointResult, Vec<RunResult>)>> = grid
        .par_iter()
        .map(|&(n, policy, kind, tau)| match &baselines[n] {
            Ok(base) => bench.evaluate(policy, kind, tau, base),
            Err(e) => Err(Error::Config(format!("baseline {policy} failed: {e}"))),
        })
        .collect();

    let mut run_rows_all = Vec::new();
    for (policy, base) in config.policies.iter().zip(&baselines) {
        match base {
            Ok(runs) => {
                let label = run_label(*policy, "baseline", None);
                run_rows_all.extend(run_rows(&label, runs, refs)?);
                if config.traces {
                    write_traces(&out.join(TRACE_DIR).join(&label), runs, &bench)?;
                }
            }
            Err(e) => failures.push(format!("{policy} baseline: {e}")),
        }
    }
    let mut summary = Vec::with_capacity(grid.len());
    for (&(_, policy, kind, tau), point) in grid.iter().zip(&points) {
        let label = run_label(policy, kind.name(), Some(tau));
        match point {
            Ok((result, runs)) => {
                failures.extend(result.failures.iter().map(|f| format!("{label}: {f}")));
                summary.push(SummaryRow::from_point(result, &bench.data_label));
                run_rows_all.extend(run_rows(&label, runs, refs)?);
                if config.traces {
                    write_traces(&out.join(TRACE_DIR).join(&label), runs, &bench)?;
                }
            }
            Err(e) => {
                failures.push(format!("{label}: {e}"));
                summary.push(SummaryRow::failed(policy, kind, tau, format!("error: {e}"), &bench.data_label));
            }
        }
    }
    write_summary(&out.join(SUMMARY_FILE), &summary)?;
    write_runs(&out.join(RUNS_FILE), &run_rows_all)?;
    Ok(ExperimentOutcome {
        output: out.clone(),
        summary,
        failures,
    })
}
