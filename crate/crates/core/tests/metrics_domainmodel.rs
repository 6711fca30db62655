use coevo_core::grammar::{parse_grammar, Grammar};
use coevo_core::llm::{LlmRunRecord, RunFailure};
use coevo_core::metrics::{align_lines, evaluate, summarize_batch, Evaluator, MetricsReport};

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/fixtures/domainmodel/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn grammars() -> (Grammar, Grammar) {
    (parse_grammar(&fixture("grammar-v1.xtext")).unwrap(), parse_grammar(&fixture("grammar-v2.xtext")).unwrap())
}

#[test]
fn perfect_migration() {
    let (old, new) = grammars();
    let r = evaluate(&fixture("instance-v1.dmodel"), &fixture("migrated-expected.dmodel"), &old, &new).unwrap();
    let got = (r.line_err, r.line_evl, r.line_evl_wrg, r.line_cmt_lost, r.line_cmt_save, r.line_fmt_lost, r.line_fmt_save);
    assert_eq!(got, (0, 4, 0, 0, 7, 0, 21));
    assert_eq!(r.total_lines_orig, 21);
    assert!(!r.oracle_unavailable);
}

#[test]
fn alignment_with_expected_has_no_gaps() {
    let al = align_lines(&fixture("instance-v1.dmodel"), &fixture("migrated-expected.dmodel"));
    assert_eq!(al.pairs.len(), 21);
    assert_eq!(al.gaps(), 0);
}

#[test]
fn tool_output_without_layout() {
    let (old, new) = grammars();
    let original = fixture("instance-v1.dmodel");
    let r = evaluate(&original, &fixture("instance-v2-mde.dmodel"), &old, &new).unwrap();
    assert_eq!(r.line_err, 0);
    assert_eq!((r.line_cmt_lost, r.line_cmt_save), (7, 0));
    assert!(r.line_fmt_lost >= 3);
    let al = align_lines(&original, &fixture("instance-v2-mde.dmodel"));
    let forward = al.forward(21);
    for line in [1, 2, 3, 4, 6, 16, 20] {
        assert_eq!(forward[line - 1], None, "line {line}");
    }
}

#[test]
fn unevolved_copy() {
    let (old, new) = grammars();
    let original = fixture("instance-v1.dmodel");
    let r = evaluate(&original, &original, &old, &new).unwrap();
    assert_eq!(r.line_err, 3);
    assert_eq!((r.line_evl, r.line_evl_wrg), (0, 4));
    assert_eq!((r.line_cmt_lost, r.line_fmt_lost), (0, 0));
}

#[test]
fn truncated_output() {
    let (old, new) = grammars();
    let original = fixture("instance-v1.dmodel");
    let partial: String = fixture("migrated-expected.dmodel").split_inclusive('\n').take(17).collect();
    let r = evaluate(&original, &partial, &old, &new).unwrap();
    assert_eq!(r.line_evl_wrg, 4);
    assert_eq!((r.line_cmt_lost, r.line_cmt_save), (1, 6));
    assert_eq!(r.line_fmt_lost, 4);
    assert_eq!(r.line_err, 1);
}

#[test]
fn partitions_hold() {
    let (old, new) = grammars();
    let original = fixture("instance-v1.dmodel");
    let evaluator = Evaluator::new(&original, &old, &new).unwrap();
    for evolved in [fixture("instance-v2-mde.dmodel"), fixture("migrated-expected.dmodel"), original.clone(), String::new()] {
        let r = evaluator.evaluate(&evolved);
        assert_eq!(r.line_fmt_lost + r.line_fmt_save, r.total_lines_orig);
        assert_eq!(r.line_cmt_lost + r.line_cmt_save, 7);
    }
}

#[test]
fn failed_runs_score_total_loss() {
    let original = fixture("instance-v1.dmodel");
    let r = MetricsReport::total_loss(&original);
    assert_eq!((r.line_evl_wrg, r.line_cmt_lost, r.line_fmt_lost, r.line_fmt_save), (21, 7, 21, 0));
}

fn record(index: usize, ok: bool) -> LlmRunRecord {
    LlmRunRecord {
        run_index: index,
        raw_response: String::new(),
        extracted: ok.then(String::new),
        failure: (!ok).then_some(RunFailure::NoInstanceFound),
    }
}

#[test]
fn batch_threshold() {
    let good = MetricsReport { total_lines_orig: 3, line_fmt_save: 3, ..Default::default() };
    let bad = MetricsReport { line_err: 1, ..good.clone() };
    let runs = |n_good: usize| {
        (0..10)
            .map(|i| (record(i + 1, true), if i < n_good { good.clone() } else { bad.clone() }))
            .collect::<Vec<_>>()
    };
    let six = summarize_batch(runs(6), MetricsReport::is_good, 6);
    assert!(six.accepted);
    assert_eq!(six.good_runs, 6);
    assert!((six.averages.line_err - 0.4).abs() < 1e-9);
    assert!(!summarize_batch(runs(5), MetricsReport::is_good, 6).accepted);
    let zeros = summarize_batch(vec![(record(1, false), MetricsReport::default())], |_| true, 1);
    assert_eq!(zeros.averages.line_evl_wrg, 0.0);
    assert_eq!(zeros.good_runs, 0);
}
