mod common;

use common::{brute_delay, dataset, spec, RandomPredictor};
use proptest::prelude::*;
use simtbp_core::metrics::average_lagging;
use simtbp_core::{
    corpus_bleu, delay_vector, run_baseline, run_speculative, EngineConfig, EventTrace, NgramConfig, NgramModel,
    OraclePredictor, Policy, SimtModel, SnapshotMatrix, TokenId,
};

fn cfg() -> ProptestConfig {
    ProptestConfig::with_cases(48)
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn final_output_never_depends_on_the_predictor(
        seed in 0u64..1000, salt in any::<u64>(), k in 1usize..5, rho in 0.0f64..1.0, tau in 0.0f64..=1.0,
    ) {
        let d = dataset(&spec(seed, 10, 0.3, rho), 10);
        let model = SimtModel::new(d.lexicon.clone(), Policy::wait_k(k).unwrap());
        let predictor = RandomPredictor::new(&d.lexicon.source_tokens(), salt);
        for s in &d.sources {
            let base = run_baseline(&model, s).unwrap();
            let spec_run = run_speculative(&model, &predictor, s, &EngineConfig::with_threshold(tau)).unwrap();
            prop_assert_eq!(&base.final_output, &spec_run.final_output);
            prop_assert_eq!(spec_run.speculations, spec_run.hits + spec_run.withdrawals);
        }
    }

    #[test]
    fn snapshots_are_a_pure_function_of_the_trace(seed in 0u64..1000, salt in any::<u64>(), l in 0.0f64..1.0) {
        let d = dataset(&spec(seed, 8, 0.5, 0.5), 5);
        let model = SimtModel::new(d.lexicon.clone(), Policy::adaptive(l).unwrap());
        let predictor = RandomPredictor::new(&d.lexicon.source_tokens(), salt);
        for s in &d.sources {
            let run = run_speculative(&model, &predictor, s, &EngineConfig::default()).unwrap();
            prop_assert_eq!(&SnapshotMatrix::from_trace(&run.trace).unwrap(), &run.snapshots);
            let mut vocab = d.vocab.clone();
            let back = EventTrace::from_jsonl(&run.trace.to_jsonl(&d.vocab), &mut vocab).unwrap();
            prop_assert_eq!(&SnapshotMatrix::from_trace(&back).unwrap(), &run.snapshots);
        }
    }

    #[test]
    fn rows_only_grow_without_withdrawals(seed in 0u64..1000, k in 1usize..4) {
        let d = dataset(&spec(seed, 10, 0.3, 0.4), 8);
        let model = SimtModel::new(d.lexicon.clone(), Policy::wait_k(k).unwrap());
        for s in &d.sources {
            let run = run_speculative(&model, &OraclePredictor::new(s), s, &EngineConfig::default()).unwrap();
            prop_assert_eq!(run.withdrawals, 0);
            for pair in run.snapshots.rows().windows(2) {
                prop_assert!(pair[1].starts_with(&pair[0]));
            }
        }
    }

    #[test]
    fn wait_k_schedule(seed in 0u64..1000, k in 1usize..10) {
        let d = dataset(&spec(seed, 10, 0.3, 0.3), 8);
        let model = SimtModel::new(d.lexicon.clone(), Policy::wait_k(k).unwrap());
        for s in &d.sources {
            let g = delay_vector(&run_baseline(&model, s).unwrap().snapshots);
            let i = s.len();
            let expected: Vec<usize> = (1..=i).map(|j| (j + k - 1).min(i)).collect();
            prop_assert_eq!(g.g, expected);
        }
    }

    #[test]
    fn adaptive_latency_monotone_in_weight(seed in 0u64..1000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let d = dataset(&spec(seed, 10, 0.3, 0.5), 8);
        let slow = SimtModel::new(d.lexicon.clone(), Policy::adaptive(lo).unwrap());
        let fast = SimtModel::new(d.lexicon.clone(), Policy::adaptive(hi).unwrap());
        for s in &d.sources {
            let gs = delay_vector(&run_baseline(&slow, s).unwrap().snapshots);
            let gf = delay_vector(&run_baseline(&fast, s).unwrap().snapshots);
            prop_assert!(gf.g.iter().zip(&gs.g).all(|(f, s)| f <= s));
        }
    }

    #[test]
    fn waiting_longer_never_hurts_quality(seed in 0u64..1000, rho in 0.0f64..1.0) {
        let d = dataset(&spec(seed, 12, 0.3, rho), 20);
        let refs: Vec<&[TokenId]> = d.references.iter().map(|r| r.ids()).collect();
        let bleu = |k| {
            let model = SimtModel::new(d.lexicon.clone(), Policy::wait_k(k).unwrap());
            let outs: Vec<_> = d.sources.iter().map(|s| run_baseline(&model, s).unwrap().final_output).collect();
            let hyps: Vec<&[TokenId]> = outs.iter().map(|o| o.ids()).collect();
            corpus_bleu(&hyps, &refs).unwrap()
        };
        let (b1, b2, b3) = (bleu(1), bleu(2), bleu(3));
        prop_assert!(b1 <= b2);
        prop_assert_eq!(b2, 1.0);
        prop_assert_eq!(b3, 1.0);
    }

    #[test]
    fn speculation_subset_grows_as_threshold_drops(seed in 0u64..1000, t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let d = dataset(&spec(seed, 10, 0.3, 0.3), 40);
        let lm = NgramModel::train(d.train(), &d.lexicon.source_tokens(), NgramConfig::default()).unwrap();
        let model = SimtModel::new(d.lexicon.clone(), Policy::wait_k(1).unwrap());
        for s in d.test() {
            let a = run_speculative(&model, &lm, s, &EngineConfig::with_threshold(lo)).unwrap();
            let b = run_speculative(&model, &lm, s, &EngineConfig::with_threshold(hi)).unwrap();
            prop_assert!(a.speculations >= b.speculations);
            prop_assert!(a.withdrawals >= b.withdrawals);
            let (ga, gb) = (delay_vector(&a.snapshots), delay_vector(&b.snapshots));
            prop_assert!(average_lagging(&ga).unwrap() <= average_lagging(&gb).unwrap() + 1e-12);
        }
    }

    #[test]
    fn delay_vector_matches_definition(
        rows in prop::collection::vec(prop::collection::vec(0u32..3, 0..8), 1..12),
        tail in prop::collection::vec(0u32..3, 1..8),
    ) {
        let mut rows: Vec<Vec<TokenId>> = rows.into_iter().map(|r| r.into_iter().map(TokenId).collect()).collect();
        rows.push(tail.into_iter().map(TokenId).collect());
        let m = SnapshotMatrix::new(rows.clone()).unwrap();
        prop_assert_eq!(delay_vector(&m).g, brute_delay(&rows));
    }

    #[test]
    fn corpus_bleu_ignores_order_and_duplication(
        pairs in prop::collection::vec(
            (prop::collection::vec(0u32..4, 0..10), prop::collection::vec(0u32..4, 1..10)), 1..6),
        rot in 0usize..6,
    ) {
        let hyps: Vec<&[u32]> = pairs.iter().map(|p| p.0.as_slice()).collect();
        let refs: Vec<&[u32]> = pairs.iter().map(|p| p.1.as_slice()).collect();
        let base = corpus_bleu(&hyps, &refs).unwrap();
        let r = rot % hyps.len();
        let (mut h2, mut r2) = (hyps.clone(), refs.clone());
        h2.rotate_left(r);
        r2.rotate_left(r);
        prop_assert!((corpus_bleu(&h2, &r2).unwrap() - base).abs() < 1e-12);
        let h3: Vec<&[u32]> = hyps.iter().chain(&hyps).copied().collect();
        let r3: Vec<&[u32]> = refs.iter().chain(&refs).copied().collect();
        prop_assert!((corpus_bleu(&h3, &r3).unwrap() - base).abs() < 1e-12);
    }
}
