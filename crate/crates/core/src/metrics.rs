//! Revision-aware latency, stability and quality metrics.
//!
//! Latency is measured from the snapshot matrix: `g_j` is the first read
//! after which the output prefix ending at `j` never changes again. Average
//! Lagging is computed from `g` with the sum over every target position
//! (no cutoff); [`average_lagging_cutoff`] provides the cutoff variant for
//! comparison only.

use std::collections::HashMap;
use std::hash::Hash;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::RunResult;
use crate::error::{Error, Result};
use crate::snapshot::SnapshotMatrix;

/// Delay vector over the final output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayVector {
    /// `g[j - 1]` is the number of reads after which the prefix ending at
    /// `j` reached its final value.
    pub g: Vec<usize>,
    /// I, the source length.
    pub source_len: usize,
}

impl DelayVector {
    pub fn target_len(&self) -> usize {
        self.g.len()
    }
}

/// Computes `g` from the snapshot matrix in O(I·J).
///
/// Row `i` keeps the prefix ending at `j` final iff its common prefix with the
/// last row has length >= `j`; a suffix minimum over rows gives, for each
/// read, the longest prefix that is already final from that read onwards.
pub fn delay_vector(snapshots: &SnapshotMatrix) -> DelayVector {
    let rows = snapshots.rows();
    let last = snapshots.final_row();
    let target_len = last.len();
    let agree: Vec<usize> = rows
        .iter()
        .map(|row| row.iter().zip(last).take_while(|(a, b)| a == b).count())
        .collect();
    let mut stable = vec![0; rows.len()];
    let mut running = target_len;
    for (i, &a) in agree.iter().enumerate().rev() {
        running = running.min(a);
        stable[i] = running;
    }
    // `stable` is non-decreasing in i and ends at J.
    let mut g = Vec::with_capacity(target_len);
    let mut i = 0;
    for j in 1..=target_len {
        while stable[i] < j {
            i += 1;
        }
        g.push(i + 1);
    }
    DelayVector {
        g,
        source_len: rows.len(),
    }
}

fn check_lengths(g: &DelayVector) -> Result<(f64, f64)> {
    if g.g.is_empty() {
        return Err(Error::EmptyOutput);
    }
    if g.source_len == 0 {
        return Err(Error::EmptySource);
    }
    Ok((g.g.len() as f64, g.source_len as f64))
}

/// `AL = 1/J * sum_{j=1..J} (g_j - (j-1) / (J/I))`.
pub fn average_lagging(g: &DelayVector) -> Result<f64> {
    let (target_len, source_len) = check_lengths(g)?;
    let rate = target_len / source_len;
    let sum: f64 = g
        .g
        .iter()
        .enumerate()
        .map(|(j, &gj)| gj as f64 - j as f64 / rate)
        .sum();
    Ok(sum / target_len)
}

/// Cutoff variant: sums only up to the first position with `g_j = I`.
/// Not used by any report; kept for cross-checking against other tooling.
pub fn average_lagging_cutoff(g: &DelayVector) -> Result<f64> {
    let (target_len, source_len) = check_lengths(g)?;
    let rate = target_len / source_len;
    let cutoff = g
        .g
        .iter()
        .position(|&gj| gj >= g.source_len)
        .map_or(g.g.len(), |p| p + 1);
    let sum: f64 = g.g[..cutoff]
        .iter()
        .enumerate()
        .map(|(j, &gj)| gj as f64 - j as f64 / rate)
        .sum();
    Ok(sum / cutoff as f64)
}

/// Average withdrawal rate `W / J`.
pub fn awr(withdrawals: usize, target_len: usize) -> Result<f64> {
    if target_len == 0 {
        return Err(Error::EmptyOutput);
    }
    Ok(withdrawals as f64 / target_len as f64)
}

/// Event counts behind a report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub withdrawals: usize,
    pub target_len: usize,
    pub source_len: usize,
    pub speculations: usize,
    pub hits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Identifies the corpus and model the report was computed on.
    pub corpus: String,
    pub al: f64,
    pub awr: f64,
    pub bleu: Option<f64>,
    pub al_diff: Option<f64>,
    pub counts: Counts,
}

impl MetricsReport {
    /// Report for a single run; BLEU is sentence-level when a reference is
    /// given.
    pub fn from_run<T: AsRef<[crate::vocab::TokenId]>>(run: &RunResult, reference: Option<T>) -> Result<Self> {
        let g = delay_vector(&run.snapshots);
        let counts = Counts {
            withdrawals: run.trace.withdrawals(),
            target_len: run.target_len(),
            source_len: run.source_len(),
            speculations: run.trace.speculations(),
            hits: run.trace.commits(),
        };
        let bleu = match reference {
            Some(r) => Some(corpus_bleu(&[run.final_output.ids()], &[r.as_ref()])?),
            None => None,
        };
        Ok(MetricsReport {
            corpus: run.trace.config.corpus.clone(),
            al: average_lagging(&g)?,
            awr: awr(counts.withdrawals, counts.target_len)?,
            bleu,
            al_diff: None,
            counts,
        })
    }

    /// Corpus-level report: AL is the mean sentence AL, AWR is total
    /// withdrawals over total target length, BLEU is corpus BLEU.
    pub fn from_runs<T: AsRef<[crate::vocab::TokenId]>>(
        corpus: &str,
        runs: &[RunResult],
        references: Option<&[T]>,
    ) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut counts = Counts::default();
        let mut al_sum = 0.0;
        for run in runs {
            al_sum += average_lagging(&delay_vector(&run.snapshots))?;
            counts.withdrawals += run.trace.withdrawals();
            counts.target_len += run.target_len();
            counts.source_len += run.source_len();
            counts.speculations += run.trace.speculations();
            counts.hits += run.trace.commits();
        }
        let bleu = match references {
            Some(refs) => {
                let hyps: Vec<_> = runs.iter().map(|r| r.final_output.ids()).collect();
                let refs: Vec<_> = refs.iter().map(|r| r.as_ref()).collect();
                Some(corpus_bleu(&hyps, &refs)?)
            }
            None => None,
        };
        Ok(MetricsReport {
            corpus: corpus.to_string(),
            al: al_sum / runs.len() as f64,
            awr: awr(counts.withdrawals, counts.target_len)?,
            bleu,
            al_diff: None,
            counts,
        })
    }

    /// Copy of `self` with `al_diff` filled in against `baseline`.
    pub fn paired_with(&self, baseline: &MetricsReport) -> Result<Self> {
        Ok(MetricsReport {
            al_diff: Some(al_diff(baseline, self)?),
            ..self.clone()
        })
    }
}

/// `AL(baseline) - AL(speculative)`; positive means speculation helped.
pub fn al_diff(baseline: &MetricsReport, speculative: &MetricsReport) -> Result<f64> {
    if baseline.corpus != speculative.corpus {
        return Err(Error::CorpusMismatch {
            baseline: baseline.corpus.clone(),
            speculative: speculative.corpus.clone(),
        });
    }
    Ok(baseline.al - speculative.al)
}

pub const BLEU_ORDER: usize = 4;

/// Clipped n-gram matches and hypothesis n-gram totals for n = 1..=4,
/// aggregated over the corpus.
pub fn modified_precisions<U: Hash + Eq>(
    hypotheses: &[&[U]],
    references: &[&[U]],
) -> Result<[(u64, u64); BLEU_ORDER]> {
    if hypotheses.len() != references.len() {
        return Err(Error::LengthMismatch {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    let mut stats = [(0u64, 0u64); BLEU_ORDER];
    for (hyp, reference) in hypotheses.iter().zip(references) {
        for (n, slot) in (1..=BLEU_ORDER).zip(stats.iter_mut()) {
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in ngram_counts(hyp, n) {
                let max_ref = ref_counts.get(gram).copied().unwrap_or(0);
                slot.0 += count.min(max_ref);
                slot.1 += count;
            }
        }
    }
    Ok(stats)
}

fn ngram_counts<U: Hash + Eq>(tokens: &[U], n: usize) -> HashMap<&[U], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_default() += 1;
        }
    }
    counts
}

/// Corpus BLEU-4 with uniform weights and brevity penalty
/// `exp(min(0, 1 - r/c))`, on a 0..1 scale.
///
/// Unsmoothed: any zero n-gram precision (including an order with no
/// hypothesis n-grams at all) makes the score 0.
pub fn corpus_bleu<U: Hash + Eq>(hypotheses: &[&[U]], references: &[&[U]]) -> Result<f64> {
    if hypotheses.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let stats = modified_precisions(hypotheses, references)?;
    if stats.iter().any(|&(m, t)| m == 0 || t == 0) {
        return Ok(0.0);
    }
    let log_precision: f64 = stats
        .iter()
        .map(|&(m, t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / BLEU_ORDER as f64;
    let hyp_len: usize = hypotheses.iter().map(|h| h.len()).sum();
    let ref_len: usize = references.iter().map(|r| r.len()).sum();
    let brevity = (1.0 - ref_len as f64 / hyp_len as f64).min(0.0);
    Ok((log_precision + brevity).exp())
}

/// One-sided paired bootstrap: the fraction of resamples in which the mean of
/// `a - b` is not positive. Small values support `mean(a) > mean(b)`.
pub fn paired_bootstrap(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            hypotheses: a.len(),
            references: b.len(),
        });
    }
    if a.is_empty() || resamples == 0 {
        return Err(Error::EmptyCorpus);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = diffs.len();
    let failures = (0..resamples)
        .filter(|_| {
            let total: f64 = (0..n).map(|_| diffs[rng.random_range(0..n)]).sum();
            total <= 0.0
        })
        .count();
    Ok(failures as f64 / resamples as f64)
}
