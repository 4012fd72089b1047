//! Branch predictors: guess the next source token from the true source prefix.
//!
//! [`NgramModel`] is an interpolated add-α n-gram model. [`OraclePredictor`]
//! and [`AlwaysWrongPredictor`] bound speculation from above and below and
//! only make sense in simulation, where the full source is known up front.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::vocab::{Sentence, TokenId, Vocabulary};

/// Predicted next source token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub token: TokenId,
    pub probability: f64,
}

/// Anything that can guess `x_{i+1}` from `x_{1..i}`.
pub trait BranchPredictor: Send + Sync {
    /// `context` is the real source prefix; an empty slice means only BOS.
    fn predict(&self, context: &[TokenId]) -> Prediction;
}

impl<P: BranchPredictor + ?Sized> BranchPredictor for &P {
    fn predict(&self, context: &[TokenId]) -> Prediction {
        (**self).predict(context)
    }
}

impl<P: BranchPredictor + ?Sized> BranchPredictor for Box<P> {
    fn predict(&self, context: &[TokenId]) -> Prediction {
        (**self).predict(context)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgramConfig {
    pub order: usize,
    /// Add-α pseudo-count.
    pub alpha: f64,
    /// Interpolation weight given to a seen higher-order context.
    pub beta: f64,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig {
            order: 2,
            alpha: 0.1,
            beta: 0.9,
        }
    }
}

impl NgramConfig {
    fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::InvalidOrder(self.order));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha {} must be > 0", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidParameter(format!("beta {} outside (0, 1)", self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<TokenId, u64>,
}

/// Interpolated add-α n-gram model over source tokens plus `</s>`.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    config: NgramConfig,
    /// Tokens the model distributes mass over, sorted by id.
    support: Vec<TokenId>,
    /// `tables[m]` maps an m-token context to its continuation counts.
    tables: Vec<HashMap<Vec<TokenId>, ContextCounts>>,
}

impl NgramModel {
    /// Counts every n-gram of every order up to `config.order`, with BOS
    /// padding on the left and `</s>` as the final target of each sentence.
    ///
    /// `alphabet` lists tokens that get smoothed mass even if unseen;
    /// `</s>` and every training token are always included.
    pub fn train(corpus: &[Sentence], alphabet: &[TokenId], config: NgramConfig) -> Result<Self> {
        config.validate()?;
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let n = config.order;
        let mut tables = vec![HashMap::<Vec<TokenId>, ContextCounts>::new(); n];
        let mut support: Vec<TokenId> = alphabet.to_vec();
        support.push(TokenId::EOS);
        for sentence in corpus {
            let mut padded = vec![TokenId::BOS; n - 1];
            padded.extend_from_slice(sentence.ids());
            padded.push(TokenId::EOS);
            for pos in n - 1..padded.len() {
                let target = padded[pos];
                support.push(target);
                for (m, table) in tables.iter_mut().enumerate() {
                    let counts = table.entry(padded[pos - m..pos].to_vec()).or_default();
                    counts.total += 1;
                    *counts.next.entry(target).or_default() += 1;
                }
            }
        }
        support.sort();
        support.dedup();
        Ok(NgramModel {
            config,
            support,
            tables,
        })
    }

    pub fn config(&self) -> NgramConfig {
        self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn support(&self) -> &[TokenId] {
        &self.support
    }

    /// Last `order - 1` tokens of the BOS-padded context.
    fn history(&self, context: &[TokenId]) -> Vec<TokenId> {
        let want = self.config.order - 1;
        let mut h = vec![TokenId::BOS; want.saturating_sub(context.len())];
        h.extend_from_slice(&context[context.len().saturating_sub(want)..]);
        h
    }

    /// Count of `(context, token)` at context length `context.len()`.
    pub fn count(&self, context: &[TokenId], token: TokenId) -> u64 {
        self.tables
            .get(context.len())
            .and_then(|t| t.get(context))
            .and_then(|c| c.next.get(&token))
            .copied()
            .unwrap_or(0)
    }

    fn prob_with_history(&self, history: &[TokenId], token: TokenId) -> f64 {
        let NgramConfig { alpha, beta, .. } = self.config;
        let v = self.support.len() as f64;
        let mut p = 0.0;
        for m in 0..self.config.order {
            let ctx = &history[history.len() - m..];
            let (total, count) = match self.tables[m].get(ctx) {
                Some(c) => (c.total, c.next.get(&token).copied().unwrap_or(0)),
                None => (0, 0),
            };
            let smoothed = (count as f64 + alpha) / (total as f64 + alpha * v);
            p = if m == 0 {
                smoothed
            } else if total > 0 {
                beta * smoothed + (1.0 - beta) * p
            } else {
                p
            };
        }
        p
    }

    /// Conditional probability of `token` after `context`.
    pub fn prob(&self, context: &[TokenId], token: TokenId) -> f64 {
        self.prob_with_history(&self.history(context), token)
    }

    /// Writes the text model format documented in the README.
    pub fn to_text(&self, vocab: &Vocabulary) -> String {
        let name = |id: TokenId| vocab.surface(id).unwrap_or("<unk>");
        let mut out = String::from("# simtbp n-gram model\n");
        let c = self.config;
        writeln!(out, "order\t{}\nalpha\t{}\nbeta\t{}", c.order, c.alpha, c.beta).unwrap();
        let support: Vec<_> = self.support.iter().map(|&t| name(t)).collect();
        writeln!(out, "support\t{}", support.join(" ")).unwrap();
        for (m, table) in self.tables.iter().enumerate() {
            let mut contexts: Vec<_> = table.iter().collect();
            contexts.sort_by(|a, b| a.0.cmp(b.0));
            for (ctx, counts) in contexts {
                let ctx: Vec<_> = ctx.iter().map(|&t| name(t)).collect();
                for (&tok, &count) in &counts.next {
                    writeln!(out, "{m}\t{count}\t{}\t{}", ctx.join(" "), name(tok)).unwrap();
                }
            }
        }
        out
    }

    pub fn from_text(text: &str, vocab: &mut Vocabulary) -> Result<Self> {
        let mut config = NgramConfig::default();
        let mut support = Vec::new();
        let mut tables: Vec<HashMap<Vec<TokenId>, ContextCounts>> = Vec::new();
        let mut header_done = false;
        for (n, line) in text.lines().enumerate() {
            let err = |msg: &str| Error::ModelFormat {
                line: n + 1,
                msg: msg.to_string(),
            };
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            match cols.as_slice() {
                ["order", v] => config.order = v.parse().map_err(|_| err("bad order"))?,
                ["alpha", v] => config.alpha = v.parse().map_err(|_| err("bad alpha"))?,
                ["beta", v] => config.beta = v.parse().map_err(|_| err("bad beta"))?,
                ["support", v] => {
                    support = v.split_whitespace().map(|s| vocab.intern(s)).collect();
                }
                [m, count, ctx, tok] => {
                    if !header_done {
                        config.validate()?;
                        tables = vec![HashMap::new(); config.order];
                        header_done = true;
                    }
                    let m: usize = m.parse().map_err(|_| err("bad context length"))?;
                    let count: u64 = count.parse().map_err(|_| err("bad count"))?;
                    let ctx: Vec<TokenId> = ctx.split_whitespace().map(|s| vocab.intern(s)).collect();
                    if m >= config.order || ctx.len() != m || count == 0 {
                        return Err(err("count line inconsistent with order"));
                    }
                    let entry = tables[m].entry(ctx).or_default();
                    entry.total += count;
                    entry.next.insert(vocab.intern(tok), count);
                }
                _ => return Err(err("unrecognised line")),
            }
        }
        config.validate()?;
        if !header_done {
            tables = vec![HashMap::new(); config.order];
        }
        support.sort();
        support.dedup();
        if support.is_empty() {
            return Err(Error::ModelFormat {
                line: 0,
                msg: "missing support".into(),
            });
        }
        Ok(NgramModel {
            config,
            support,
            tables,
        })
    }

    pub fn save(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        std::fs::write(path, self.to_text(vocab)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, vocab: &mut Vocabulary) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, vocab)
    }
}

impl BranchPredictor for NgramModel {
    /// Argmax over the support; ties go to the smallest id.
    fn predict(&self, context: &[TokenId]) -> Prediction {
        let history = self.history(context);
        let mut best = Prediction {
            token: TokenId::EOS,
            probability: f64::NEG_INFINITY,
        };
        for &token in &self.support {
            let p = self.prob_with_history(&history, token);
            if p > best.probability {
                best = Prediction { token, probability: p };
            }
        }
        best
    }
}

/// Held-out statistics of a predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmStats {
    pub predictions: usize,
    pub hits: usize,
    pub accuracy: f64,
    pub perplexity: f64,
}

/// Next-token accuracy and perplexity over every source position and the
/// sentence end.
pub fn evaluate(model: &NgramModel, corpus: &[Sentence]) -> LmStats {
    let mut predictions = 0;
    let mut hits = 0;
    let mut log_sum = 0.0;
    for sentence in corpus {
        for pos in 0..=sentence.len() {
            let truth = sentence.get(pos).copied().unwrap_or(TokenId::EOS);
            let ctx = &sentence[..pos];
            if model.predict(ctx).token == truth {
                hits += 1;
            }
            log_sum += model.prob(ctx, truth).ln();
            predictions += 1;
        }
    }
    let accuracy = if predictions == 0 { 0.0 } else { hits as f64 / predictions as f64 };
    let perplexity = if predictions == 0 {
        f64::NAN
    } else {
        (-log_sum / predictions as f64).exp()
    };
    LmStats {
        predictions,
        hits,
        accuracy,
        perplexity,
    }
}

/// Fraction of positions (including the end) a predictor gets right in one
/// sentence.
pub fn sentence_accuracy(predictor: &dyn BranchPredictor, sentence: &[TokenId]) -> f64 {
    let hits = (0..=sentence.len())
        .filter(|&pos| {
            let truth = sentence.get(pos).copied().unwrap_or(TokenId::EOS);
            predictor.predict(&sentence[..pos]).token == truth
        })
        .count();
    hits as f64 / (sentence.len() + 1) as f64
}

/// Knows the true source and always predicts it.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    source: Vec<TokenId>,
}

impl OraclePredictor {
    pub fn new(source: &[TokenId]) -> Self {
        OraclePredictor {
            source: source.to_vec(),
        }
    }
}

impl BranchPredictor for OraclePredictor {
    fn predict(&self, context: &[TokenId]) -> Prediction {
        Prediction {
            token: self.source.get(context.len()).copied().unwrap_or(TokenId::EOS),
            probability: 1.0,
        }
    }
}

/// Knows the true source and always predicts something else, with full
/// confidence.
#[derive(Debug, Clone)]
pub struct AlwaysWrongPredictor {
    source: Vec<TokenId>,
    alphabet: Vec<TokenId>,
}

impl AlwaysWrongPredictor {
    /// `alphabet` must hold at least two distinct tokens (`</s>` counts).
    pub fn new(source: &[TokenId], alphabet: &[TokenId]) -> Self {
        let mut alphabet = alphabet.to_vec();
        alphabet.push(TokenId::EOS);
        alphabet.sort();
        alphabet.dedup();
        AlwaysWrongPredictor {
            source: source.to_vec(),
            alphabet,
        }
    }
}

impl BranchPredictor for AlwaysWrongPredictor {
    fn predict(&self, context: &[TokenId]) -> Prediction {
        let truth = self.source.get(context.len()).copied().unwrap_or(TokenId::EOS);
        let token = self
            .alphabet
            .iter()
            .copied()
            .find(|&t| t != truth)
            .expect("alphabet has a second token");
        Prediction {
            token,
            probability: 1.0,
        }
    }
}
