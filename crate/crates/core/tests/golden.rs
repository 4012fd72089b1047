mod common;

use common::golden;
use simtbp_core::{EventTrace, SimtModel, SnapshotMatrix, Vocabulary};

#[test]
fn traces_match_golden_files() {
    let d = golden::dataset();
    let update = std::env::var_os(golden::UPDATE_VAR).is_some();
    let dir = golden::dir();
    if update {
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("lexicon.tsv"), d.lexicon.to_tsv(&d.vocab)).unwrap();
    }
    for case in golden::cases() {
        let run = golden::run(&d, &case);
        let text = run.trace.to_jsonl(&d.vocab);
        let path = dir.join(format!("{}.jsonl", case.name));
        if update {
            std::fs::write(&path, &text).unwrap();
        }
        let expected = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("{}: {e}; set {} to create it", path.display(), golden::UPDATE_VAR));
        assert_eq!(text, expected, "{} drifted", case.name);
    }
}

#[test]
fn golden_files_replay_on_their_own() {
    let dir = golden::dir();
    let mut vocab = Vocabulary::new();
    let lexicon_text = std::fs::read_to_string(dir.join("lexicon.tsv")).unwrap();
    let lexicon = simtbp_core::Lexicon::parse_tsv(&lexicon_text, &mut vocab).unwrap();
    let mut withdrawing = 0;
    for case in golden::cases() {
        let text = std::fs::read_to_string(dir.join(format!("{}.jsonl", case.name))).unwrap();
        let trace = EventTrace::from_jsonl(&text, &mut vocab).unwrap();
        let raw_withdrawals = text.lines().filter(|l| l.contains("\"ev\":\"WITHDRAW\"")).count();
        assert_eq!(trace.withdrawals(), raw_withdrawals);
        assert_eq!(trace.speculations(), trace.commits() + trace.withdrawals());
        let snapshots = SnapshotMatrix::from_trace(&trace).unwrap();
        let model = SimtModel::new(lexicon.clone(), case.policy);
        let source = simtbp_core::Sentence::new(trace.source());
        let expected = model.full_sentence_translate(&source).unwrap();
        // one token of lookahead resolves every ambiguity
        if matches!(case.policy, simtbp_core::Policy::WaitK { k } if k >= 2) {
            assert_eq!(snapshots.final_row(), expected.ids(), "{}", case.name);
        }
        withdrawing += usize::from(raw_withdrawals > 0);
    }
    assert!(withdrawing >= 2);
}
