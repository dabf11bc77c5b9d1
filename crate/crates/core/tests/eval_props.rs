mod common;

use taskroute::controller::ControllerError;
use taskroute::dataset::{Complexity, InstructionRecord, RecordKind, Source};
use taskroute::eval::{eval_chain, eval_single, levenshtein, EvalError};
use taskroute::grammar::{render_response, RoutedResponse, RoutingStep};
use taskroute::task::TaskKind;
use proptest::prelude::*;

type Pred = Result<RoutedResponse, ControllerError>;

fn tasks() -> Vec<TaskKind> {
    TaskKind::all().collect()
}

fn response(seq: &[TaskKind]) -> RoutedResponse {
    RoutedResponse::from_steps(seq.iter().enumerate().map(|(i, t)| RoutingStep::new(*t, format!("p{i}"))))
}

fn record(i: usize, seq: &[TaskKind]) -> InstructionRecord {
    let kind = if seq.len() == 1 { RecordKind::Single } else { RecordKind::Chain };
    let gold = render_response(&response(seq)).unwrap();
    InstructionRecord::new(format!("r{i}"), format!("instruction {i}"), gold, Complexity::Short, kind, Source::Synthetic)
        .unwrap()
}

fn seq(alphabet: usize, len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<TaskKind>> {
    prop::collection::vec(0..alphabet, len).prop_map(|v| v.into_iter().map(|i| tasks()[i]).collect())
}

/// A prediction: `None` is a failed route.
fn prediction(alphabet: usize) -> impl Strategy<Value = Option<Vec<TaskKind>>> {
    prop::option::weighted(0.9, seq(alphabet, 0..=6))
}

fn to_pred(p: &Option<Vec<TaskKind>>) -> Pred {
    match p {
        Some(s) => Ok(response(s)),
        None => Err(ControllerError::NoRoute),
    }
}

fn chain_case() -> impl Strategy<Value = Vec<(Vec<TaskKind>, Option<Vec<TaskKind>>)>> {
    prop::collection::vec((seq(5, 2..=5), prediction(5)), 1..40)
}

fn single_case() -> impl Strategy<Value = Vec<(TaskKind, Option<Vec<TaskKind>>)>> {
    prop::collection::vec((proptest::sample::select(tasks()), prediction(30)), 1..80)
}

/// Per-record precision/recall/F1 from multiset counts, averaged in f64.
fn chain_oracle(cases: &[(Vec<TaskKind>, Option<Vec<TaskKind>>)]) -> [f64; 4] {
    let mut sums = [0.0; 4];
    for (gold, pred) in cases {
        let pred = pred.clone().unwrap_or_default();
        let mut pool = gold.clone();
        let mut shared = 0.0;
        for t in &pred {
            if let Some(i) = pool.iter().position(|g| g == t) {
                pool.remove(i);
                shared += 1.0;
            }
        }
        let p = if pred.is_empty() { 0.0 } else { shared / pred.len() as f64 };
        let r = shared / gold.len() as f64;
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        let ed = common::levenshtein_oracle(&pred, gold) as f64 / pred.len().max(gold.len()) as f64;
        for (s, v) in sums.iter_mut().zip([ed, p, r, f]) {
            *s += v;
        }
    }
    sums.map(|s| s / cases.len() as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn levenshtein_matches_oracle_and_is_a_metric(a in seq(4, 0..=7), b in seq(4, 0..=7), c in seq(4, 0..=7)) {
        let d = levenshtein(&a, &b);
        prop_assert_eq!(d, common::levenshtein_oracle(&a, &b));
        prop_assert_eq!(d, levenshtein(&b, &a));
        prop_assert_eq!(d == 0, a == b);
        prop_assert!(d <= a.len().max(b.len()));
        prop_assert!(d >= a.len().abs_diff(b.len()));
        prop_assert!(levenshtein(&a, &c) <= d + levenshtein(&b, &c));
    }

    #[test]
    fn single_metrics_match_oracle(cases in single_case()) {
        let golds: Vec<_> = cases.iter().enumerate().map(|(i, (g, _))| record(i, &[*g])).collect();
        let preds: Vec<Pred> = cases.iter().map(|(_, p)| to_pred(p)).collect();
        let report = eval_single(&preds, &golds).unwrap();
        let pairs: Vec<_> = cases
            .iter()
            .map(|(g, p)| (*g, p.as_ref().and_then(|s| s.first().copied())))
            .collect();
        let oracle = common::weighted_oracle(&pairs);
        prop_assert!((report.accuracy - oracle.accuracy).abs() < 1e-9);
        prop_assert!((report.precision - oracle.precision).abs() < 1e-9);
        prop_assert!((report.f1 - oracle.f1).abs() < 1e-9);
        prop_assert_eq!(report.recall, report.accuracy);
        for v in [report.accuracy, report.precision, report.recall, report.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn chain_metrics_match_oracle(cases in chain_case()) {
        let golds: Vec<_> = cases.iter().enumerate().map(|(i, (g, _))| record(i, g)).collect();
        let preds: Vec<Pred> = cases.iter().map(|(_, p)| to_pred(p)).collect();
        let report = eval_chain(&preds, &golds).unwrap();
        let [ed, p, r, f] = chain_oracle(&cases);
        for (got, want) in [(report.edit_distance, ed), (report.precision, p), (report.recall, r), (report.f1, f)] {
            prop_assert!((got - want).abs() < 1e-9, "{got} vs {want}");
            prop_assert!((0.0..=1.0).contains(&got));
        }
        let exact = cases.iter().all(|(g, p)| p.as_ref() == Some(g));
        prop_assert_eq!(report.edit_distance == 0.0, exact);
        prop_assert_eq!(report.n_malformed as usize, cases.iter().filter(|(_, p)| p.is_none()).count());
    }

    #[test]
    fn reports_are_permutation_stable(cases in chain_case(), singles in single_case(), rot in 0usize..100) {
        let golds: Vec<_> = cases.iter().enumerate().map(|(i, (g, _))| record(i, g)).collect();
        let preds: Vec<Pred> = cases.iter().map(|(_, p)| to_pred(p)).collect();
        let k = rot % golds.len();
        let (mut g2, mut p2) = (golds.clone(), preds.clone());
        g2.rotate_left(k);
        p2.rotate_left(k);
        g2.reverse();
        p2.reverse();
        prop_assert_eq!(eval_chain(&preds, &golds).unwrap(), eval_chain(&p2, &g2).unwrap());

        let golds: Vec<_> = singles.iter().enumerate().map(|(i, (g, _))| record(i, &[*g])).collect();
        let preds: Vec<Pred> = singles.iter().map(|(_, p)| to_pred(p)).collect();
        let k = rot % golds.len();
        let (mut g2, mut p2) = (golds.clone(), preds.clone());
        g2.rotate_left(k);
        p2.rotate_left(k);
        prop_assert_eq!(eval_single(&preds, &golds).unwrap(), eval_single(&p2, &g2).unwrap());
    }
}

#[test]
fn perfect_predictions_score_one() {
    let golds: Vec<_> = tasks().iter().enumerate().map(|(i, t)| record(i, &[*t])).collect();
    let preds: Vec<Pred> = golds.iter().map(|g| Ok(g.gold().clone())).collect();
    let r = eval_single(&preds, &golds).unwrap();
    assert_eq!([r.accuracy, r.precision, r.recall, r.f1], [1.0; 4]);
}

#[test]
fn mismatched_inputs_are_errors() {
    let single = record(0, &[tasks()[0]]);
    let chain = record(1, &[tasks()[0], tasks()[1]]);
    let ok: Pred = Ok(response(&[tasks()[0]]));
    assert!(matches!(eval_single(&[ok.clone()], &[]), Err(EvalError::LengthMismatch { .. })));
    assert!(matches!(eval_single(&[ok.clone()], &[chain]), Err(EvalError::WrongKind { .. })));
    assert!(matches!(eval_chain(&[ok], &[single]), Err(EvalError::WrongKind { .. })));
}
