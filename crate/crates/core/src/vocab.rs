//! Vocabulary and token sequences.
//!
//! Token ids are dense and in-memory only; every file format in this crate
//! stores surface strings. The first four ids are reserved.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Dense token identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenId(pub u32);

impl TokenId {
    pub const BOS: TokenId = TokenId(0);
    pub const EOS: TokenId = TokenId(1);
    /// The READ marker: the model chose to wait for more source.
    pub const PHI: TokenId = TokenId(2);
    pub const UNK: TokenId = TokenId(3);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_reserved(self) -> bool {
        self.0 < RESERVED.len() as u32
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

const RESERVED: [&str; 4] = ["<s>", "</s>", "<phi>", "<unk>"];

/// Bidirectional mapping between surface strings and [`TokenId`]s.
///
/// Reserved ids come first (`<s>`=0, `</s>`=1, `<phi>`=2, `<unk>`=3), then
/// ordinary tokens in first-insertion order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    /// A vocabulary holding only the reserved tokens.
    pub fn new() -> Self {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for s in RESERVED {
            vocab.intern(s);
        }
        vocab
    }

    /// Builds a vocabulary from whitespace-tokenized lines.
    pub fn from_corpus<S: AsRef<str>>(lines: &[S]) -> Result<Self> {
        if lines.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut vocab = Vocabulary::new();
        for line in lines {
            for tok in line.as_ref().split_whitespace() {
                vocab.intern(tok);
            }
        }
        Ok(vocab)
    }

    /// Returns the id of `surface`, adding it if absent.
    pub fn intern(&mut self, surface: &str) -> TokenId {
        if let Some(&id) = self.index.get(surface) {
            return id;
        }
        let id = TokenId(self.tokens.len() as u32);
        self.tokens.push(surface.to_string());
        self.index.insert(surface.to_string(), id);
        id
    }

    pub fn lookup(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    pub fn surface(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id.index()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, id: TokenId) -> bool {
        id.index() < self.tokens.len()
    }

    /// Ids of all non-reserved tokens, in id order.
    pub fn ordinary_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (RESERVED.len()..self.tokens.len()).map(|i| TokenId(i as u32))
    }

    /// Encodes a whitespace-tokenized source line. Unknown tokens and
    /// reserved surfaces are rejected.
    pub fn encode_source(&self, line: &str) -> Result<Sentence> {
        let mut ids = Vec::new();
        for tok in line.split_whitespace() {
            match self.lookup(tok) {
                Some(id) if !id.is_reserved() => ids.push(id),
                Some(_) => return Err(Error::ReservedInSentence(tok.to_string())),
                None => return Err(Error::UnknownToken(tok.to_string())),
            }
        }
        Ok(Sentence(ids))
    }

    /// Encodes a line, mapping unseen tokens to `<unk>`.
    pub fn encode_lossy(&self, line: &str) -> Sentence {
        Sentence(
            line.split_whitespace()
                .map(|t| self.lookup(t).unwrap_or(TokenId::UNK))
                .collect(),
        )
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| self.surface(id).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A token sequence without BOS/EOS markers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Sentence(pub Vec<TokenId>);

impl Sentence {
    pub fn new(ids: Vec<TokenId>) -> Self {
        Sentence(ids)
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// A valid source sentence carries no reserved ids at all.
    pub fn is_valid_source(&self) -> bool {
        self.0.iter().all(|id| !id.is_reserved())
    }
}

impl AsRef<[TokenId]> for Sentence {
    fn as_ref(&self) -> &[TokenId] {
        &self.0
    }
}

impl From<Vec<TokenId>> for Sentence {
    fn from(ids: Vec<TokenId>) -> Self {
        Sentence(ids)
    }
}

impl std::ops::Deref for Sentence {
    type Target = [TokenId];

    fn deref(&self) -> &[TokenId] {
        &self.0
    }
}
