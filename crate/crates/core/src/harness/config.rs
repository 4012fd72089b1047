//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! seed = 7
//! kappa = 0.1
//! k = 1,3,5,7,9
//! L = 0.5,0.2,0.1,0.05,0.02
//! tau = 0,0.5,1
//! predictors = in-domain,out-of-domain,oracle
//! ```
//!
//! Every key can also be set from the command line with the same name.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::engine::ExecutionMode;
use crate::error::{Error, Result};
use crate::harness::corpus::MarkovSourceSpec;
use crate::model::Policy;
use crate::predictor::NgramConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PredictorKind {
    /// n-gram trained on the task corpus's training split.
    InDomain,
    /// n-gram trained on text from an unrelated chain over the same words.
    OutOfDomain,
    Oracle,
    AlwaysWrong,
}

impl PredictorKind {
    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::InDomain => "in-domain",
            PredictorKind::OutOfDomain => "out-of-domain",
            PredictorKind::Oracle => "oracle",
            PredictorKind::AlwaysWrong => "always-wrong",
        }
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "in-domain" | "bigram" | "ngram" => PredictorKind::InDomain,
            "out-of-domain" => PredictorKind::OutOfDomain,
            "oracle" => PredictorKind::Oracle,
            "always-wrong" => PredictorKind::AlwaysWrong,
            _ => return Err(Error::Config(format!("unknown predictor `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Master seed; also the seed of the generated corpus.
    pub source: MarkovSourceSpec,
    pub sentences: usize,
    pub corpus: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub ood_corpus: Option<PathBuf>,
    pub policies: Vec<Policy>,
    pub thresholds: Vec<f64>,
    pub predictors: Vec<PredictorKind>,
    pub ngram: NgramConfig,
    pub mode: ExecutionMode,
    pub traces: bool,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: MarkovSourceSpec::default(),
            sentences: 1000,
            corpus: None,
            lexicon: None,
            references: None,
            ood_corpus: None,
            policies: vec![Policy::WaitK { k: 1 }, Policy::WaitK { k: 3 }],
            thresholds: vec![0.0],
            predictors: vec![PredictorKind::InDomain],
            ngram: NgramConfig::default(),
            mode: ExecutionMode::Sequential,
            traces: false,
            output: PathBuf::from("results"),
        }
    }
}

fn list<T: FromStr>(value: &str, key: &str) -> Result<Vec<T>> {
    let items: Result<Vec<T>> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("bad value `{s}` for `{key}`")))
        })
        .collect();
    let items = items?;
    if items.is_empty() {
        return Err(Error::Config(format!("`{key}` needs at least one value")));
    }
    Ok(items)
}

fn scalar<T: FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "seed", "vocab_size", "kappa", "rho", "min_len", "max_len", "sentences", "corpus", "lexicon",
        "references", "ood_corpus", "policies", "k", "L", "tau", "predictors", "order", "alpha", "beta",
        "mode", "traces", "output",
    ];

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies one key. `k` and `L` replace the wait-k / adaptive entries of
    /// the policy grid; `policies` replaces the whole grid.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.source.seed = scalar(value, key)?,
            "vocab_size" => self.source.vocab_size = scalar(value, key)?,
            "kappa" => self.source.kappa = scalar(value, key)?,
            "rho" => self.source.ambiguity_rate = scalar(value, key)?,
            "min_len" => self.source.min_len = scalar(value, key)?,
            "max_len" => self.source.max_len = scalar(value, key)?,
            "sentences" => self.sentences = scalar(value, key)?,
            "corpus" => self.corpus = Some(value.into()),
            "lexicon" => self.lexicon = Some(value.into()),
            "references" => self.references = Some(value.into()),
            "ood_corpus" => self.ood_corpus = Some(value.into()),
            "policies" => self.policies = list(value, key)?,
            "k" => {
                let ks: Vec<usize> = list(value, key)?;
                self.policies.retain(|p| !matches!(p, Policy::WaitK { .. }));
                for k in ks {
                    self.policies.push(Policy::wait_k(k)?);
                }
            }
            "L" => {
                let ls: Vec<f64> = list(value, key)?;
                self.policies.retain(|p| !matches!(p, Policy::Adaptive { .. }));
                for l in ls {
                    self.policies.push(Policy::adaptive(l)?);
                }
            }
            "tau" => {
                self.thresholds = list(value, key)?;
                if let Some(t) = self.thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
                    return Err(Error::Config(format!("tau {t} outside [0, 1]")));
                }
            }
            "predictors" => self.predictors = list(value, key)?,
            "order" => self.ngram.order = scalar(value, key)?,
            "alpha" => self.ngram.alpha = scalar(value, key)?,
            "beta" => self.ngram.beta = scalar(value, key)?,
            "mode" => {
                self.mode = match value {
                    "sequential" => ExecutionMode::Sequential,
                    "concurrent" => ExecutionMode::Concurrent,
                    _ => return Err(Error::Config(format!("unknown mode `{value}`"))),
                }
            }
            "traces" => self.traces = scalar(value, key)?,
            "output" => self.output = value.into(),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Number of (policy, predictor, τ) grid points.
    pub fn grid_size(&self) -> usize {
        self.policies.len() * self.predictors.len() * self.thresholds.len()
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let s = &self.source;
        let mut lines = vec![
            format!("seed = {}", s.seed),
            format!("vocab_size = {}", s.vocab_size),
            format!("kappa = {}", s.kappa),
            format!("rho = {}", s.ambiguity_rate),
            format!("min_len = {}", s.min_len),
            format!("max_len = {}", s.max_len),
            format!("sentences = {}", self.sentences),
        ];
        for (key, path) in [
            ("corpus", &self.corpus),
            ("lexicon", &self.lexicon),
            ("references", &self.references),
            ("ood_corpus", &self.ood_corpus),
        ] {
            if let Some(p) = path {
                lines.push(format!("{key} = {}", p.display()));
            }
        }
        lines.push(format!(
            "policies = {}",
            join(self.policies.iter().map(Policy::to_string).collect())
        ));
        lines.push(format!(
            "tau = {}",
            join(self.thresholds.iter().map(f64::to_string).collect())
        ));
        lines.push(format!(
            "predictors = {}",
            join(self.predictors.iter().map(|p| p.name().to_string()).collect())
        ));
        lines.push(format!("order = {}", self.ngram.order));
        lines.push(format!("alpha = {}", self.ngram.alpha));
        lines.push(format!("beta = {}", self.ngram.beta));
        lines.push(format!(
            "mode = {}",
            match self.mode {
                ExecutionMode::Sequential => "sequential",
                ExecutionMode::Concurrent => "concurrent",
            }
        ));
        lines.push(format!("traces = {}", self.traces));
        lines.push(format!("output = {}", self.output.display()));
        let mut text = lines.join("\n");
        text.push('\n');
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_grid_keys() {
        let c = ExperimentConfig::parse(
            "# sweep\nk = 1,3\nL = 0.5, 0.1\ntau = 0,1 # both ends\npredictors = oracle,always-wrong\nkappa = 0.01\n",
        )
        .unwrap();
        assert_eq!(
            c.policies,
            vec![
                Policy::WaitK { k: 1 },
                Policy::WaitK { k: 3 },
                Policy::Adaptive { latency_weight: 0.5 },
                Policy::Adaptive { latency_weight: 0.1 },
            ]
        );
        assert_eq!(c.thresholds, vec![0.0, 1.0]);
        assert_eq!(c.predictors, vec![PredictorKind::Oracle, PredictorKind::AlwaysWrong]);
        assert_eq!(c.source.kappa, 0.01);
        assert_eq!(c.grid_size(), 16);
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        assert!(ExperimentConfig::parse("colour = red").is_err());
        assert!(ExperimentConfig::parse("tau = 2").is_err());
        assert!(ExperimentConfig::parse("k = 0").is_err());
        assert!(ExperimentConfig::parse("predictors = psychic").is_err());
        assert!(ExperimentConfig::parse("seed").is_err());
        assert!(ExperimentConfig::parse("tau = ").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::default();
        c.set("L", "0.5,0.02").unwrap();
        c.set("corpus", "data/c.txt").unwrap();
        c.set("mode", "concurrent").unwrap();
        let back = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }
}
