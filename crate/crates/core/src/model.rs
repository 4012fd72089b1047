//! Deterministic incremental translator: a monotone, context-dependent
//! lexical transducer driven by a wait-k or adaptive READ/WRITE policy.
//!
//! Target token `j` always translates source token `j`. An *ambiguous* source
//! token has conditional entries keyed on its right neighbour, so a policy that
//! writes before the neighbour arrives may pick the wrong sense.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::vocab::{Sentence, TokenId, Vocabulary};

/// Source-to-target rules.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    defaults: HashMap<TokenId, TokenId>,
    conditional: HashMap<(TokenId, TokenId), TokenId>,
    ambiguous: HashSet<TokenId>,
    /// Insertion order, kept for serialization.
    entries: Vec<(TokenId, Option<TokenId>, TokenId)>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a rule. `condition = None` is the default rule. Duplicate keys
    /// are rejected rather than overwritten.
    pub fn insert(
        &mut self,
        source: TokenId,
        condition: Option<TokenId>,
        target: TokenId,
    ) -> std::result::Result<(), String> {
        if source.is_reserved() || target.is_reserved() || condition.is_some_and(TokenId::is_reserved) {
            return Err("reserved token in lexicon entry".into());
        }
        let fresh = match condition {
            None => self.defaults.insert(source, target).is_none(),
            Some(c) => {
                self.ambiguous.insert(source);
                self.conditional.insert((source, c), target).is_none()
            }
        };
        if !fresh {
            return Err("duplicate lexicon key".into());
        }
        self.entries.push((source, condition, target));
        Ok(())
    }

    /// Checks that every ambiguous token and every condition token has a
    /// default rule.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let mut keys: Vec<_> = self.conditional.keys().collect();
        keys.sort();
        for &(src, cond) in keys {
            if !self.defaults.contains_key(&src) {
                return Err(format!("ambiguous token {src} has no default rule"));
            }
            if !self.defaults.contains_key(&cond) {
                return Err(format!("condition token {cond} is not a source token"));
            }
        }
        Ok(())
    }

    /// Parses the three-column TSV format (`source`, condition or `*`,
    /// `target`). Surfaces are interned into `vocab`.
    pub fn parse_tsv(text: &str, vocab: &mut Vocabulary) -> Result<Self> {
        let mut lex = Lexicon::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let err = |msg: String| Error::Lexicon { line: n + 1, msg };
            if cols.len() != 3 || cols.iter().any(|c| c.is_empty() || c.contains(' ')) {
                return Err(err(format!("expected 3 tab-separated columns, got `{line}`")));
            }
            let source = vocab.intern(cols[0]);
            let condition = (cols[1] != "*").then(|| vocab.intern(cols[1]));
            let target = vocab.intern(cols[2]);
            lex.insert(source, condition, target).map_err(err)?;
        }
        lex.validate().map_err(Error::InvalidLexicon)?;
        Ok(lex)
    }

    pub fn to_tsv(&self, vocab: &Vocabulary) -> String {
        let name = |id: TokenId| vocab.surface(id).unwrap_or("<unk>");
        let mut out = String::new();
        for &(src, cond, tgt) in &self.entries {
            out.push_str(name(src));
            out.push('\t');
            out.push_str(cond.map_or("*", name));
            out.push('\t');
            out.push_str(name(tgt));
            out.push('\n');
        }
        out
    }

    /// True if `token` has a default rule, i.e. belongs to the source alphabet.
    pub fn is_source(&self, token: TokenId) -> bool {
        self.defaults.contains_key(&token)
    }

    pub fn is_ambiguous(&self, token: TokenId) -> bool {
        self.ambiguous.contains(&token)
    }

    /// Source alphabet in id order.
    pub fn source_tokens(&self) -> Vec<TokenId> {
        let mut v: Vec<_> = self.defaults.keys().copied().collect();
        v.sort();
        v
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Translates `token` given its right neighbour, if visible.
    pub fn translate(&self, token: TokenId, next: Option<TokenId>) -> Result<TokenId> {
        if let Some(next) = next {
            if let Some(&t) = self.conditional.get(&(token, next)) {
                return Ok(t);
            }
        }
        self.defaults
            .get(&token)
            .copied()
            .ok_or_else(|| Error::UnknownSourceToken(token.to_string()))
    }
}

/// READ/WRITE policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    /// Read `k` tokens, then alternate write-one / read-one.
    WaitK { k: usize },
    /// Write as soon as the confidence for the next token reaches
    /// `1 - latency_weight`.
    Adaptive { latency_weight: f64 },
}

impl Policy {
    pub fn wait_k(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("wait-k lag must be >= 1".into()));
        }
        Ok(Policy::WaitK { k })
    }

    pub fn adaptive(latency_weight: f64) -> Result<Self> {
        if !(latency_weight > 0.0 && latency_weight <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "latency weight {latency_weight} outside (0, 1]"
            )));
        }
        Ok(Policy::Adaptive { latency_weight })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::WaitK { .. } => "wait-k",
            Policy::Adaptive { .. } => "adaptive",
        }
    }

    pub fn param(&self) -> f64 {
        match *self {
            Policy::WaitK { k } => k as f64,
            Policy::Adaptive { latency_weight } => latency_weight,
        }
    }

    /// Confidence an adaptive policy needs before writing. Larger latency
    /// weights lower the bar.
    pub fn threshold(latency_weight: f64) -> f64 {
        (1.0 - latency_weight).clamp(0.0, 1.0)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::WaitK { k } => write!(f, "wait-{k}"),
            Policy::Adaptive { latency_weight } => write!(f, "adaptive-{latency_weight}"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    /// Accepts `wait-<k>` or `adaptive-<L>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unrecognised policy `{s}`"));
        if let Some(k) = s.strip_prefix("wait-") {
            Policy::wait_k(k.parse().map_err(|_| bad())?)
        } else if let Some(l) = s.strip_prefix("adaptive-") {
            Policy::adaptive(l.parse().map_err(|_| bad())?)
        } else {
            Err(bad())
        }
    }
}

/// Incremental translator `f(source prefix, target prefix) -> token | <phi>`.
///
/// Stateless: every decision depends only on the arguments of [`step`].
///
/// [`step`]: SimtModel::step
#[derive(Debug, Clone)]
pub struct SimtModel {
    lexicon: Lexicon,
    policy: Policy,
}

impl SimtModel {
    pub fn new(lexicon: Lexicon, policy: Policy) -> Self {
        SimtModel { lexicon, policy }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn with_policy(&self, policy: Policy) -> Self {
        SimtModel {
            lexicon: self.lexicon.clone(),
            policy,
        }
    }

    /// One decoding step.
    ///
    /// `source` is the visible source prefix; `source_complete` says whether
    /// the end marker has been read. `target` is the committed, `<phi>`-free
    /// target prefix. Returns `<phi>` to READ, `</s>` once every source token
    /// has been translated, or the next target token.
    pub fn step(&self, source: &[TokenId], source_complete: bool, target: &[TokenId]) -> Result<TokenId> {
        debug_assert!(!target.contains(&TokenId::PHI));
        let pos = target.len();
        if pos >= source.len() {
            return Ok(if source_complete { TokenId::EOS } else { TokenId::PHI });
        }
        let token = source[pos];
        let next = source.get(pos + 1).copied();
        let write = match self.policy {
            Policy::WaitK { k } => source_complete || source.len() >= pos + k,
            Policy::Adaptive { latency_weight } => {
                let confident = !self.lexicon.is_ambiguous(token) || next.is_some() || source_complete;
                let confidence = if confident { 1.0 } else { 0.5 };
                confidence >= Policy::threshold(latency_weight)
            }
        };
        if write {
            self.lexicon.translate(token, next)
        } else {
            Ok(TokenId::PHI)
        }
    }

    /// Translates with the whole source visible; the quality ceiling.
    pub fn full_sentence_translate(&self, source: &Sentence) -> Result<Sentence> {
        if source.is_empty() {
            return Err(Error::EmptySource);
        }
        source
            .iter()
            .enumerate()
            .map(|(p, &tok)| self.lexicon.translate(tok, source.get(p + 1).copied()))
            .collect::<Result<Vec<_>>>()
            .map(Sentence)
    }
}
