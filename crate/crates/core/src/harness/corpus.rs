//! Synthetic parallel data from a first-order Markov source.
//!
//! Lower transition concentration κ gives peakier rows and therefore more
//! predictable text. A ρ-fraction of source words is made ambiguous: their
//! translation depends on the following word.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::model::{Lexicon, Policy, SimtModel};
use crate::vocab::{Sentence, Vocabulary};

/// Parameters of the synthetic source language.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSourceSpec {
    /// Number of distinct source words (reserved tokens not included).
    pub vocab_size: usize,
    /// Dirichlet concentration of each transition row.
    pub kappa: f64,
    /// Fraction of source words with context-dependent translations.
    pub ambiguity_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for MarkovSourceSpec {
    fn default() -> Self {
        MarkovSourceSpec {
            vocab_size: 20,
            kappa: 0.1,
            ambiguity_rate: 0.3,
            min_len: 8,
            max_len: 16,
            seed: 7,
        }
    }
}

impl MarkovSourceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 4 {
            return Err(Error::InvalidParameter(format!(
                "vocab_size {} < 4",
                self.vocab_size
            )));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa {} must be > 0", self.kappa)));
        }
        if !(0.0..=1.0).contains(&self.ambiguity_rate) {
            return Err(Error::InvalidParameter(format!(
                "ambiguity rate {} outside [0, 1]",
                self.ambiguity_rate
            )));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::InvalidParameter(format!(
                "sentence length range {}..={} is empty",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }

    pub fn word(k: usize) -> String {
        format!("w{k}")
    }
}

/// Derives an independent seed for a named component.
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, mixed with the master seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn rng_for(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, name))
}

/// Draws from Dirichlet(κ, …, κ) in log space so that tiny κ does not
/// underflow every component to zero.
fn dirichlet(rng: &mut impl Rng, kappa: f64, dim: usize) -> Vec<f64> {
    let gamma = Gamma::new(kappa + 1.0, 1.0).expect("valid gamma");
    let logs: Vec<f64> = (0..dim)
        .map(|_| {
            // Gamma(κ) = Gamma(κ + 1) · U^(1/κ)
            let g: f64 = gamma.sample(rng);
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            g.ln() + u.ln() / kappa
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// First-order chain over word indices.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    pub initial: Vec<f64>,
    pub transitions: Vec<Vec<f64>>,
}

impl MarkovChain {
    pub fn sample(vocab_size: usize, kappa: f64, rng: &mut impl Rng) -> Self {
        MarkovChain {
            initial: dirichlet(rng, kappa, vocab_size),
            transitions: (0..vocab_size).map(|_| dirichlet(rng, kappa, vocab_size)).collect(),
        }
    }

    fn draw(weights: &[f64], rng: &mut impl Rng) -> usize {
        let mut u: f64 = rng.random();
        for (k, &w) in weights.iter().enumerate() {
            if u < w {
                return k;
            }
            u -= w;
        }
        weights.len() - 1
    }

    pub fn sentence(&self, len: usize, rng: &mut impl Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(len);
        let mut cur = Self::draw(&self.initial, rng);
        out.push(cur);
        while out.len() < len {
            cur = Self::draw(&self.transitions[cur], rng);
            out.push(cur);
        }
        out
    }
}

fn sample_lines(chain: &MarkovChain, spec: &MarkovSourceSpec, n: usize, rng: &mut impl Rng) -> Vec<String> {
    (0..n)
        .map(|_| {
            let len = rng.random_range(spec.min_len..=spec.max_len);
            chain
                .sentence(len, rng)
                .into_iter()
                .map(MarkovSourceSpec::word)
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Builds the lexicon TSV: `w<k> -> T<k>` by default; each ambiguous word
/// gets the alternative sense `T<k>x` after a random half of possible
/// successors (at least one).
fn lexicon_tsv(spec: &MarkovSourceSpec, rng: &mut impl Rng) -> String {
    let v = spec.vocab_size;
    let n_ambiguous = (spec.ambiguity_rate * v as f64).round() as usize;
    let mut order: Vec<usize> = (0..v).collect();
    order.shuffle(rng);
    let mut ambiguous = order[..n_ambiguous].to_vec();
    ambiguous.sort_unstable();
    let mut out = String::new();
    for k in 0..v {
        out.push_str(&format!("w{k}\t*\tT{k}\n"));
    }
    for a in ambiguous {
        let mut successors: Vec<usize> = (0..v).filter(|_| rng.random_bool(0.5)).collect();
        if successors.is_empty() {
            successors.push(rng.random_range(0..v));
        }
        for c in successors {
            out.push_str(&format!("w{a}\tw{c}\tT{a}x\n"));
        }
    }
    out
}

/// Text form of a generated corpus, exactly what lands on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub corpus: Vec<String>,
    pub lexicon: String,
    pub references: Vec<String>,
}

impl GeneratedCorpus {
    pub const CORPUS_FILE: &'static str = "corpus.txt";
    pub const LEXICON_FILE: &'static str = "lexicon.tsv";
    pub const REFERENCE_FILE: &'static str = "reference.txt";

    /// Writes the three files into `dir`, returning their paths.
    pub fn write(&self, dir: &Path) -> Result<[PathBuf; 3]> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = [
            dir.join(Self::CORPUS_FILE),
            dir.join(Self::LEXICON_FILE),
            dir.join(Self::REFERENCE_FILE),
        ];
        write_lines(&paths[0], &self.corpus)?;
        std::fs::write(&paths[1], &self.lexicon).map_err(|e| Error::io(&paths[1], e))?;
        write_lines(&paths[2], &self.references)?;
        Ok(paths)
    }
}

pub(crate) fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = lines.join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect())
}

/// Samples `n_sentences` source sentences, the lexicon and the
/// full-sentence references. Bit-for-bit reproducible from `spec`.
pub fn gen_corpus(spec: &MarkovSourceSpec, n_sentences: usize) -> Result<GeneratedCorpus> {
    spec.validate()?;
    if n_sentences == 0 {
        return Err(Error::EmptyCorpus);
    }
    let chain = MarkovChain::sample(spec.vocab_size, spec.kappa, &mut rng_for(spec.seed, "transition"));
    let corpus = sample_lines(&chain, spec, n_sentences, &mut rng_for(spec.seed, "corpus"));
    let lexicon = lexicon_tsv(spec, &mut rng_for(spec.seed, "lexicon"));
    let dataset = Dataset::from_text(&corpus, &lexicon, None)?;
    let references = dataset
        .references
        .iter()
        .map(|r| dataset.vocab.decode(r))
        .collect();
    Ok(GeneratedCorpus {
        corpus,
        lexicon,
        references,
    })
}

/// Sentences from an independently seeded chain over the same words: the
/// training data of an out-of-domain predictor.
pub fn gen_out_of_domain(spec: &MarkovSourceSpec, n_sentences: usize) -> Result<Vec<String>> {
    spec.validate()?;
    let chain = MarkovChain::sample(spec.vocab_size, spec.kappa, &mut rng_for(spec.seed, "ood-transition"));
    Ok(sample_lines(&chain, spec, n_sentences, &mut rng_for(spec.seed, "ood-corpus")))
}

/// Encoded corpus, lexicon and references sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub lexicon: Lexicon,
    pub sources: Vec<Sentence>,
    pub references: Vec<Sentence>,
}

impl Dataset {
    /// Interns the lexicon first, then the corpus, so token ids do not depend
    /// on whether data came from memory or disk. Missing references are
    /// produced by full-sentence translation.
    pub fn from_text(corpus: &[String], lexicon: &str, references: Option<&[String]>) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut vocab = Vocabulary::new();
        let lexicon = Lexicon::parse_tsv(lexicon, &mut vocab)?;
        let sources = corpus
            .iter()
            .enumerate()
            .map(|(n, line)| {
                let s = vocab.encode_source(line).map_err(|e| Error::Sentence {
                    index: n,
                    source: Box::new(e),
                })?;
                if s.is_empty() {
                    return Err(Error::Sentence {
                        index: n,
                        source: Box::new(Error::EmptySource),
                    });
                }
                if let Some(bad) = s.iter().find(|t| !lexicon.is_source(**t)) {
                    return Err(Error::UnknownSourceToken(vocab.decode(&[*bad])));
                }
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        let references = match references {
            Some(lines) => {
                if lines.len() != sources.len() {
                    return Err(Error::LengthMismatch {
                        hypotheses: sources.len(),
                        references: lines.len(),
                    });
                }
                lines.iter().map(|l| vocab.encode_lossy(l)).collect()
            }
            None => {
                // the policy is irrelevant to full-sentence translation
                let model = SimtModel::new(lexicon.clone(), Policy::WaitK { k: 1 });
                sources
                    .iter()
                    .map(|s| model.full_sentence_translate(s))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(Dataset {
            vocab,
            lexicon,
            sources,
            references,
        })
    }

    pub fn load(corpus: &Path, lexicon: &Path, references: Option<&Path>) -> Result<Self> {
        let lines = read_lines(corpus)?;
        let lex = std::fs::read_to_string(lexicon).map_err(|e| Error::io(lexicon, e))?;
        let refs = references.map(read_lines).transpose()?;
        Self::from_text(&lines, &lex, refs.as_deref())
    }

    /// Index of the first test sentence: the first 90% is training data.
    pub fn split_point(&self) -> usize {
        split_point(self.sources.len())
    }

    pub fn train(&self) -> &[Sentence] {
        &self.sources[..self.split_point()]
    }

    pub fn test(&self) -> &[Sentence] {
        &self.sources[self.split_point()..]
    }

    pub fn test_references(&self) -> &[Sentence] {
        &self.references[self.split_point()..]
    }

    /// Encodes extra source lines (e.g. out-of-domain data) with this vocabulary.
    pub fn encode(&self, lines: &[String]) -> Result<Vec<Sentence>> {
        lines.iter().map(|l| self.vocab.encode_source(l)).collect()
    }
}

/// 90/10 split by sentence index; at least one test sentence when n > 0.
pub fn split_point(n: usize) -> usize {
    (n * 9 / 10).min(n.saturating_sub(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_reproducible() {
        let spec = MarkovSourceSpec::default();
        assert_eq!(gen_corpus(&spec, 50).unwrap(), gen_corpus(&spec, 50).unwrap());
        let other = MarkovSourceSpec { seed: 8, ..spec.clone() };
        assert_ne!(gen_corpus(&spec, 50).unwrap().corpus, gen_corpus(&other, 50).unwrap().corpus);
    }

    #[test]
    fn small_vocab_rejected() {
        let spec = MarkovSourceSpec {
            vocab_size: 3,
            ..MarkovSourceSpec::default()
        };
        assert!(gen_corpus(&spec, 10).is_err());
    }

    #[test]
    fn dirichlet_rows_are_distributions_even_for_tiny_kappa() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kappa in [0.001, 0.01, 1.0, 10.0] {
            let row = dirichlet(&mut rng, kappa, 30);
            assert!(row.iter().all(|p| p.is_finite() && *p >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn references_are_full_sentence_translations() {
        let g = gen_corpus(&MarkovSourceSpec::default(), 20).unwrap();
        let d = Dataset::from_text(&g.corpus, &g.lexicon, Some(&g.references)).unwrap();
        let fresh = Dataset::from_text(&g.corpus, &g.lexicon, None).unwrap();
        assert_eq!(d.references, fresh.references);
        assert_eq!(d.sources.len(), 20);
        assert_eq!(d.train().len(), 18);
        assert_eq!(d.test().len(), 2);
    }

    #[test]
    fn ambiguity_rate_controls_ambiguous_words() {
        let spec = MarkovSourceSpec {
            ambiguity_rate: 0.0,
            ..MarkovSourceSpec::default()
        };
        let g = gen_corpus(&spec, 5).unwrap();
        assert!(g.lexicon.lines().all(|l| l.split('\t').nth(1) == Some("*")));
        let spec = MarkovSourceSpec {
            ambiguity_rate: 0.3,
            ..MarkovSourceSpec::default()
        };
        let g = gen_corpus(&spec, 5).unwrap();
        let d = Dataset::from_text(&g.corpus, &g.lexicon, None).unwrap();
        let n_amb = d.lexicon.source_tokens().iter().filter(|t| d.lexicon.is_ambiguous(**t)).count();
        assert_eq!(n_amb, 6);
    }

    #[test]
    fn split_keeps_a_test_sentence() {
        assert_eq!(split_point(1000), 900);
        assert_eq!(split_point(5), 4);
        assert_eq!(split_point(1), 0);
    }
}
