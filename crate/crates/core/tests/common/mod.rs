//! Helpers shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::hash::{Hash, Hasher};

use simtbp_core::harness::{gen_corpus, Dataset, MarkovSourceSpec};
use simtbp_core::{BranchPredictor, Prediction, TokenId};

pub fn spec(seed: u64, vocab_size: usize, kappa: f64, rho: f64) -> MarkovSourceSpec {
    MarkovSourceSpec {
        vocab_size,
        kappa,
        ambiguity_rate: rho,
        seed,
        ..MarkovSourceSpec::default()
    }
}

pub fn dataset(spec: &MarkovSourceSpec, n: usize) -> Dataset {
    let g = gen_corpus(spec, n).unwrap();
    Dataset::from_text(&g.corpus, &g.lexicon, None).unwrap()
}

/// Deterministic pseudo-random guesses over the alphabet and `</s>`, with a
/// pseudo-random confidence.
pub struct RandomPredictor {
    pub choices: Vec<TokenId>,
    pub salt: u64,
}

impl RandomPredictor {
    pub fn new(alphabet: &[TokenId], salt: u64) -> Self {
        let mut choices = alphabet.to_vec();
        choices.push(TokenId::EOS);
        RandomPredictor { choices, salt }
    }
}

impl BranchPredictor for RandomPredictor {
    fn predict(&self, context: &[TokenId]) -> Prediction {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        (self.salt, context).hash(&mut h);
        let x = h.finish();
        Prediction {
            token: self.choices[(x % self.choices.len() as u64) as usize],
            probability: ((x >> 32) % 1001) as f64 / 1000.0,
        }
    }
}

/// Delay vector straight from the definition: the first read after which
/// the prefix ending at `j` equals the final prefix in every later row.
pub fn brute_delay(rows: &[Vec<TokenId>]) -> Vec<usize> {
    let last = rows.last().unwrap();
    (1..=last.len())
        .map(|j| {
            (1..=rows.len())
                .find(|&i| rows[i - 1..].iter().all(|r| r.len() >= j && r[..j] == last[..j]))
                .unwrap()
        })
        .collect()
}

/// BLEU-4 from the textbook definition, sharing no code with the library:
/// n-grams are counted by sorting, clipping by linear scan.
pub fn brute_bleu(hyps: &[Vec<u32>], refs: &[Vec<u32>]) -> f64 {
    let mut log_p = 0.0;
    for n in 1..=4 {
        let (mut matched, mut total) = (0usize, 0usize);
        for (h, r) in hyps.iter().zip(refs) {
            let grams = |s: &[u32]| -> Vec<Vec<u32>> {
                let mut g: Vec<Vec<u32>> = if s.len() >= n { s.windows(n).map(<[u32]>::to_vec).collect() } else { vec![] };
                g.sort();
                g
            };
            let hg = grams(h);
            let rg = grams(r);
            total += hg.len();
            let mut distinct = hg.clone();
            distinct.dedup();
            for g in distinct {
                let ch = hg.iter().filter(|x| **x == g).count();
                let cr = rg.iter().filter(|x| **x == g).count();
                matched += ch.min(cr);
            }
        }
        if total == 0 || matched == 0 {
            return 0.0;
        }
        log_p += (matched as f64 / total as f64).ln() / 4.0;
    }
    let c: usize = hyps.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * log_p.exp()
}

pub mod golden {
    use std::path::PathBuf;

    use simtbp_core::harness::Dataset;
    use simtbp_core::{
        run_baseline, run_speculative, AlwaysWrongPredictor, EngineConfig, NgramConfig, NgramModel,
        OraclePredictor, Policy, RunResult, SimtModel,
    };

    /// Set to regenerate the files under `tests/golden`.
    pub const UPDATE_VAR: &str = "SIMTBP_UPDATE_GOLDEN";

    pub struct Case {
        pub name: &'static str,
        pub policy: Policy,
        /// `none` runs the baseline.
        pub predictor: &'static str,
        pub tau: f64,
        pub sentence: usize,
    }

    pub fn cases() -> Vec<Case> {
        let w = |k| Policy::WaitK { k };
        let a = |l| Policy::Adaptive { latency_weight: l };
        vec![
            Case { name: "wait1_baseline", policy: w(1), predictor: "none", tau: 0.0, sentence: 0 },
            Case { name: "wait1_oracle", policy: w(1), predictor: "oracle", tau: 0.0, sentence: 0 },
            Case { name: "wait1_always_wrong", policy: w(1), predictor: "always-wrong", tau: 0.0, sentence: 0 },
            Case { name: "wait1_bigram", policy: w(1), predictor: "in-domain", tau: 0.0, sentence: 1 },
            Case { name: "wait2_bigram_tau05", policy: w(2), predictor: "in-domain", tau: 0.5, sentence: 2 },
            Case { name: "wait3_bigram", policy: w(3), predictor: "in-domain", tau: 0.0, sentence: 3 },
            Case { name: "adaptive05_bigram", policy: a(0.5), predictor: "in-domain", tau: 0.0, sentence: 4 },
            Case { name: "adaptive01_always_wrong", policy: a(0.1), predictor: "always-wrong", tau: 0.0, sentence: 5 },
        ]
    }

    pub fn dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
    }

    pub fn dataset() -> Dataset {
        super::dataset(&super::spec(11, 8, 0.3, 0.5), 60)
    }

    pub fn run(d: &Dataset, case: &Case) -> RunResult {
        let model = SimtModel::new(d.lexicon.clone(), case.policy);
        let index = d.split_point() + case.sentence;
        let s = &d.sources[index];
        let alphabet = d.lexicon.source_tokens();
        let lm = NgramModel::train(d.train(), &alphabet, NgramConfig::default()).unwrap();
        let config = EngineConfig::with_threshold(case.tau);
        let mut run = match case.predictor {
            "none" => run_baseline(&model, s),
            "oracle" => run_speculative(&model, &OraclePredictor::new(s), s, &config),
            "always-wrong" => run_speculative(&model, &AlwaysWrongPredictor::new(s, &alphabet), s, &config),
            _ => run_speculative(&model, &lm, s, &config),
        }
        .unwrap();
        let c = &mut run.trace.config;
        c.predictor = case.predictor.into();
        c.corpus = "golden".into();
        c.seed = 11;
        c.sentence = index;
        run
    }
}
