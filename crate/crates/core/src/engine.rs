//! The simultaneous decoding loop, with and without branch prediction.
//!
//! After each source read the speculative engine asks the predictor for the
//! next source token and decodes one step against `[prefix; prediction]`.
//! When the real token arrives the speculative output is committed on a hit,
//! or withdrawn and re-decoded with the real token on a miss. Because
//! [`SimtModel::step`] is a pure function, the final output always equals the
//! baseline output; only the timing of writes changes.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::SimtModel;
use crate::predictor::{BranchPredictor, Prediction};
use crate::snapshot::SnapshotMatrix;
use crate::trace::{Event, EventTrace, RunConfig};
use crate::vocab::{Sentence, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    /// Predictor and translator calls strictly alternate.
    #[default]
    Sequential,
    /// The prediction for read `i+1` overlaps the decode of read `i`.
    Concurrent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    /// Speculate only when the prediction probability is at least this.
    pub threshold: f64,
    pub mode: ExecutionMode,
    /// Cap on target tokens; `None` means `2 * I + 8`.
    pub max_len: Option<usize>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            threshold: 0.0,
            mode: ExecutionMode::Sequential,
            max_len: None,
        }
    }
}

impl EngineConfig {
    pub fn with_threshold(threshold: f64) -> Self {
        EngineConfig {
            threshold,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidParameter(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Wall-clock time spent in model and predictor calls. Never affects output.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timing {
    pub decode: Duration,
    pub predict: Duration,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// Target tokens without `<phi>` or `</s>`.
    pub final_output: Sentence,
    pub trace: EventTrace,
    pub snapshots: SnapshotMatrix,
    pub withdrawals: usize,
    pub speculations: usize,
    pub hits: usize,
    pub timing: Timing,
}

impl RunResult {
    pub fn source_len(&self) -> usize {
        self.snapshots.source_len()
    }

    pub fn target_len(&self) -> usize {
        self.final_output.len()
    }
}

struct Speculation {
    j: usize,
    output: TokenId,
    predicted: TokenId,
}

/// What happened to the decode of one read.
enum Flow {
    /// The model can keep writing.
    Continue,
    /// The policy asked for the next source token.
    Read,
    /// `</s>` was produced.
    Finished,
}

/// Single-sentence decoding state. Only this struct mutates the trace.
struct Decoder<'a> {
    model: &'a SimtModel,
    source: &'a [TokenId],
    target: Vec<TokenId>,
    trace: EventTrace,
    next_j: usize,
    max_len: usize,
    withdrawals: usize,
    speculations: usize,
    hits: usize,
    decode_time: Duration,
}

impl<'a> Decoder<'a> {
    fn new(model: &'a SimtModel, source: &'a Sentence, max_len: Option<usize>, config: RunConfig) -> Result<Self> {
        if source.is_empty() {
            return Err(Error::EmptySource);
        }
        Ok(Decoder {
            model,
            source: source.ids(),
            target: Vec::new(),
            trace: EventTrace::new(config),
            next_j: 1,
            max_len: max_len.unwrap_or(2 * source.len() + 8),
            withdrawals: 0,
            speculations: 0,
            hits: 0,
            decode_time: Duration::ZERO,
        })
    }

    fn step(&mut self, source: &[TokenId], complete: bool) -> Result<TokenId> {
        let start = Instant::now();
        let out = self.model.step(source, complete, &self.target);
        self.decode_time += start.elapsed();
        out
    }

    /// Extends the committed target with a fresh model output.
    fn accept(&mut self, token: TokenId, complete: bool) -> Result<Flow> {
        match token {
            TokenId::PHI if complete => Err(Error::ReadPastEnd),
            TokenId::PHI => Ok(Flow::Read),
            TokenId::EOS => Ok(Flow::Finished),
            t => {
                self.target.push(t);
                if self.target.len() > self.max_len {
                    return Err(Error::RunawayDecode { limit: self.max_len });
                }
                Ok(Flow::Continue)
            }
        }
    }

    /// Reads source position `i` (`i = I + 1` reads the end marker).
    fn read(&mut self, i: usize) -> (usize, bool) {
        let complete = i > self.source.len();
        let token = if complete { TokenId::EOS } else { self.source[i - 1] };
        self.trace.push(Event::Read { i, token });
        (i.min(self.source.len()), complete)
    }

    /// Steps the model until it asks for more input or finishes.
    fn decode(&mut self, visible: usize, complete: bool, basis: usize) -> Result<Flow> {
        loop {
            let y = self.step(&self.source[..visible], complete)?;
            self.trace.push(Event::Write {
                j: self.next_j,
                token: y,
                basis,
            });
            self.next_j += 1;
            match self.accept(y, complete)? {
                Flow::Continue => continue,
                flow => return Ok(flow),
            }
        }
    }

    /// Settles the open speculation against the token actually read, then
    /// decodes as the baseline would.
    fn resolve_and_decode(
        &mut self,
        pending: Option<Speculation>,
        visible: usize,
        complete: bool,
        basis: usize,
    ) -> Result<Flow> {
        let actual = if complete { TokenId::EOS } else { self.source[visible - 1] };
        if let Some(spec) = pending {
            let flow = if spec.predicted == actual {
                self.trace.push(Event::Commit { j: spec.j });
                self.hits += 1;
                match spec.output {
                    // the speculative token is already part of the target
                    TokenId::PHI if complete => return Err(Error::ReadPastEnd),
                    TokenId::PHI => Flow::Read,
                    TokenId::EOS => Flow::Finished,
                    _ => Flow::Continue,
                }
            } else {
                if spec.output != TokenId::PHI && spec.output != TokenId::EOS {
                    self.target.pop();
                }
                let new = self.step(&self.source[..visible], complete)?;
                self.trace.push(Event::Withdraw {
                    j: spec.j,
                    old: spec.output,
                    new,
                });
                self.withdrawals += 1;
                self.accept(new, complete)?
            };
            if !matches!(flow, Flow::Continue) {
                return Ok(flow);
            }
        }
        self.decode(visible, complete, basis)
    }

    /// Issues one speculative step against the predicted next token.
    fn speculate(&mut self, i: usize, prediction: Prediction, threshold: f64) -> Result<Option<Speculation>> {
        let Prediction { token, probability } = prediction;
        self.trace.push(Event::Predict {
            i: i + 1,
            token,
            probability,
        });
        if token != TokenId::EOS && !self.model.lexicon().is_source(token) {
            return Err(Error::PredictorMismatch(token.0));
        }
        if probability < threshold {
            return Ok(None);
        }
        let output = if token == TokenId::EOS {
            self.step(&self.source[..i], true)?
        } else {
            let mut extended = self.source[..i].to_vec();
            extended.push(token);
            self.step(&extended, false)?
        };
        let j = self.next_j;
        self.trace.push(Event::Speculate { j, token: output, basis: i });
        self.next_j += 1;
        self.speculations += 1;
        if output != TokenId::PHI && output != TokenId::EOS {
            self.target.push(output);
            if self.target.len() > self.max_len {
                return Err(Error::RunawayDecode { limit: self.max_len });
            }
        }
        Ok(Some(Speculation {
            j,
            output,
            predicted: token,
        }))
    }

    fn finish(mut self, predict_time: Duration) -> Result<RunResult> {
        self.trace.push(Event::End);
        let snapshots = SnapshotMatrix::from_trace(&self.trace)?;
        Ok(RunResult {
            final_output: Sentence(self.target),
            trace: self.trace,
            snapshots,
            withdrawals: self.withdrawals,
            speculations: self.speculations,
            hits: self.hits,
            timing: Timing {
                decode: self.decode_time,
                predict: predict_time,
            },
        })
    }
}

fn base_config(model: &SimtModel, mode: &str) -> RunConfig {
    RunConfig {
        mode: mode.into(),
        policy: model.policy().name().into(),
        param: model.policy().param(),
        ..RunConfig::default()
    }
}

/// The conventional loop: after each read, step until the policy reads again;
/// after the end marker, step until `</s>`.
pub fn run_baseline(model: &SimtModel, source: &Sentence) -> Result<RunResult> {
    let mut dec = Decoder::new(model, source, None, base_config(model, "baseline"))?;
    for i in 1..=source.len() + 1 {
        let (visible, complete) = dec.read(i);
        if let Flow::Finished = dec.decode(visible, complete, i)? {
            break;
        }
    }
    dec.finish(Duration::ZERO)
}

/// Branch-predicted decoding. The final output equals [`run_baseline`]'s.
pub fn run_speculative(
    model: &SimtModel,
    predictor: &dyn BranchPredictor,
    source: &Sentence,
    config: &EngineConfig,
) -> Result<RunResult> {
    config.validate()?;
    let mut run_config = base_config(model, "speculative");
    run_config.tau = Some(config.threshold);
    run_config.predictor = "custom".into();
    let mut dec = Decoder::new(model, source, config.max_len, run_config)?;
    let src = source.ids();
    let mut pending = None;
    let mut predict_time = Duration::ZERO;
    let timed_predict = |ctx: &[TokenId]| {
        let start = Instant::now();
        let p = predictor.predict(ctx);
        (p, start.elapsed())
    };
    for i in 1..=src.len() + 1 {
        let (visible, complete) = dec.read(i);
        let open = pending.take();
        // No speculation once the end marker has been read.
        let (flow, prediction) = match (config.mode, complete) {
            (_, true) => (dec.resolve_and_decode(open, visible, complete, i)?, None),
            (ExecutionMode::Sequential, false) => {
                let flow = dec.resolve_and_decode(open, visible, complete, i)?;
                let prediction = match flow {
                    Flow::Finished => None,
                    _ => Some(timed_predict(&src[..i])),
                };
                (flow, prediction)
            }
            (ExecutionMode::Concurrent, false) => {
                let (flow, prediction) = rayon::join(
                    || dec.resolve_and_decode(open, visible, complete, i),
                    || timed_predict(&src[..i]),
                );
                (flow?, Some(prediction))
            }
        };
        if let Flow::Finished = flow {
            break;
        }
        if let Some((prediction, elapsed)) = prediction {
            predict_time += elapsed;
            pending = dec.speculate(i, prediction, config.threshold)?;
        }
    }
    dec.finish(predict_time)
}

fn tag(index: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Sentence {
        index,
        source: Box::new(e),
    }
}

/// Baseline over a corpus; results keep input order.
pub fn run_corpus_baseline(model: &SimtModel, corpus: &[Sentence]) -> Result<Vec<RunResult>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    corpus
        .par_iter()
        .enumerate()
        .map(|(n, s)| run_baseline(model, s).map_err(tag(n)))
        .collect()
}

/// Speculative decoding over a corpus. `make_predictor` builds the predictor
/// for each sentence (oracles need to see the sentence). Sentences run in
/// parallel; results keep input order.
pub fn run_corpus<'p, F>(
    model: &SimtModel,
    make_predictor: F,
    corpus: &[Sentence],
    config: &EngineConfig,
) -> Result<Vec<RunResult>>
where
    F: Fn(&Sentence) -> Box<dyn BranchPredictor + 'p> + Sync,
{
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    corpus
        .par_iter()
        .enumerate()
        .map(|(n, s)| {
            let predictor = make_predictor(s);
            run_speculative(model, predictor.as_ref(), s, config).map_err(tag(n))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::delay_vector;
    use crate::model::Lexicon;
    use crate::predictor::{AlwaysWrongPredictor, OraclePredictor};
    use crate::vocab::Vocabulary;

    struct Fixture {
        vocab: Vocabulary,
        lexicon: Lexicon,
    }

    impl Fixture {
        fn new() -> Self {
            let mut vocab = Vocabulary::new();
            let tsv = "a\t*\tA\nb\t*\tB\nc\t*\tC\nd\t*\tD\ne\t*\tE\n";
            let lexicon = Lexicon::parse_tsv(tsv, &mut vocab).unwrap();
            Fixture { vocab, lexicon }
        }

        fn model(&self, policy: &str) -> SimtModel {
            SimtModel::new(self.lexicon.clone(), policy.parse().unwrap())
        }

        fn sentence(&self, line: &str) -> Sentence {
            self.vocab.encode_source(line).unwrap()
        }

        fn id(&self, s: &str) -> TokenId {
            self.vocab.lookup(s).unwrap()
        }
    }

    struct Fixed(Prediction);

    impl BranchPredictor for Fixed {
        fn predict(&self, _: &[TokenId]) -> Prediction {
            self.0
        }
    }

    #[test]
    fn baseline_wait_1() {
        let f = Fixture::new();
        let r = run_baseline(&f.model("wait-1"), &f.sentence("a b")).unwrap();
        assert_eq!(r.final_output.ids(), &[f.id("A"), f.id("B")]);
        assert_eq!(delay_vector(&r.snapshots).g, vec![1, 2]);
        assert_eq!((r.speculations, r.withdrawals, r.hits), (0, 0, 0));
    }

    #[test]
    fn baseline_lag_longer_than_source() {
        let f = Fixture::new();
        let r = run_baseline(&f.model("wait-3"), &f.sentence("a b")).unwrap();
        assert_eq!(r.final_output.len(), 2);
        assert_eq!(delay_vector(&r.snapshots).g, vec![2, 2]);
    }

    #[test]
    fn empty_source_rejected() {
        let f = Fixture::new();
        assert!(matches!(
            run_baseline(&f.model("wait-1"), &Sentence::default()),
            Err(Error::EmptySource)
        ));
        let oracle = OraclePredictor::new(&[]);
        assert!(run_speculative(&f.model("wait-1"), &oracle, &Sentence::default(), &EngineConfig::default()).is_err());
    }

    #[test]
    fn oracle_speculation_hand_trace() {
        let f = Fixture::new();
        let src = f.sentence("a b");
        let oracle = OraclePredictor::new(&src);
        let r = run_speculative(&f.model("wait-1"), &oracle, &src, &EngineConfig::default()).unwrap();
        let (a, b, ua, ub) = (f.id("a"), f.id("b"), f.id("A"), f.id("B"));
        let (phi, eos) = (TokenId::PHI, TokenId::EOS);
        assert_eq!(
            r.trace.events,
            vec![
                Event::Read { i: 1, token: a },
                Event::Write { j: 1, token: ua, basis: 1 },
                Event::Write { j: 2, token: phi, basis: 1 },
                Event::Predict { i: 2, token: b, probability: 1.0 },
                Event::Speculate { j: 3, token: ub, basis: 1 },
                Event::Read { i: 2, token: b },
                Event::Commit { j: 3 },
                Event::Write { j: 4, token: phi, basis: 2 },
                Event::Predict { i: 3, token: eos, probability: 1.0 },
                Event::Speculate { j: 5, token: eos, basis: 2 },
                Event::Read { i: 3, token: eos },
                Event::Commit { j: 5 },
                Event::End,
            ]
        );
        assert_eq!(r.final_output.ids(), &[ua, ub]);
        assert_eq!(delay_vector(&r.snapshots).g, vec![1, 1]);
        assert_eq!((r.speculations, r.hits, r.withdrawals), (2, 2, 0));
    }

    #[test]
    fn always_wrong_withdraws_every_speculation() {
        let f = Fixture::new();
        let src = f.sentence("a b");
        let model = f.model("wait-1");
        let wrong = AlwaysWrongPredictor::new(&src, &f.lexicon.source_tokens());
        let r = run_speculative(&model, &wrong, &src, &EngineConfig::default()).unwrap();
        let base = run_baseline(&model, &src).unwrap();
        assert_eq!(r.final_output, base.final_output);
        assert_eq!(r.withdrawals, r.speculations);
        assert_eq!(r.hits, 0);
        assert_eq!(delay_vector(&r.snapshots), delay_vector(&base.snapshots));
    }

    #[test]
    fn closed_gate_reproduces_baseline_trace() {
        let f = Fixture::new();
        let src = f.sentence("a b c d");
        let unsure = Fixed(Prediction { token: f.id("a"), probability: 0.99 });
        for policy in ["wait-1", "wait-2", "adaptive-0.1"] {
            let model = f.model(policy);
            let r = run_speculative(&model, &unsure, &src, &EngineConfig::with_threshold(1.0)).unwrap();
            assert_eq!(r.speculations, 0);
            let without_predict: Vec<_> = r
                .trace
                .events
                .iter()
                .filter(|e| !matches!(e, Event::Predict { .. }))
                .cloned()
                .collect();
            assert_eq!(without_predict, run_baseline(&model, &src).unwrap().trace.events);
        }
    }

    #[test]
    fn rejects_predictions_outside_source_alphabet() {
        let f = Fixture::new();
        let src = f.sentence("a b");
        let bad = Fixed(Prediction { token: TokenId::PHI, probability: 1.0 });
        let err = run_speculative(&f.model("wait-1"), &bad, &src, &EngineConfig::default()).unwrap_err();
        assert!(matches!(err, Error::PredictorMismatch(2)));
        let target_word = Fixed(Prediction { token: f.id("A"), probability: 1.0 });
        assert!(run_speculative(&f.model("wait-1"), &target_word, &src, &EngineConfig::default()).is_err());
    }

    #[test]
    fn runaway_cap_enforced() {
        let f = Fixture::new();
        let src = f.sentence("a b c");
        let oracle = OraclePredictor::new(&src);
        let config = EngineConfig {
            max_len: Some(2),
            ..EngineConfig::default()
        };
        let err = run_speculative(&f.model("wait-1"), &oracle, &src, &config).unwrap_err();
        assert!(matches!(err, Error::RunawayDecode { limit: 2 }));
    }

    #[test]
    fn threshold_out_of_range() {
        let f = Fixture::new();
        let src = f.sentence("a");
        let oracle = OraclePredictor::new(&src);
        assert!(run_speculative(&f.model("wait-1"), &oracle, &src, &EngineConfig::with_threshold(1.5)).is_err());
    }

    #[test]
    fn concurrent_mode_matches_sequential() {
        let f = Fixture::new();
        let src = f.sentence("a b c d e a b");
        let wrong = AlwaysWrongPredictor::new(&src, &f.lexicon.source_tokens());
        for policy in ["wait-1", "wait-3", "adaptive-0.5"] {
            let model = f.model(policy);
            let seq = run_speculative(&model, &wrong, &src, &EngineConfig::default()).unwrap();
            let conc = EngineConfig {
                mode: ExecutionMode::Concurrent,
                ..EngineConfig::default()
            };
            let par = run_speculative(&model, &wrong, &src, &conc).unwrap();
            assert_eq!(seq.trace.to_jsonl(&f.vocab), par.trace.to_jsonl(&f.vocab));
        }
    }

    #[test]
    fn corpus_runs_match_single_runs() {
        let f = Fixture::new();
        let corpus = vec![f.sentence("a b c"), f.sentence("e d")];
        let model = f.model("wait-2");
        let make = |s: &Sentence| Box::new(OraclePredictor::new(s)) as Box<dyn BranchPredictor>;
        let runs = run_corpus(&model, make, &corpus, &EngineConfig::default()).unwrap();
        assert_eq!(runs.len(), 2);
        for (run, s) in runs.iter().zip(&corpus) {
            let single = run_speculative(&model, &OraclePredictor::new(s), s, &EngineConfig::default()).unwrap();
            assert_eq!(run.trace, single.trace);
        }
        assert!(matches!(
            run_corpus(&model, make, &[], &EngineConfig::default()),
            Err(Error::EmptyCorpus)
        ));
        let bad = vec![f.sentence("a"), Sentence::default()];
        match run_corpus_baseline(&model, &bad) {
            Err(Error::Sentence { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
