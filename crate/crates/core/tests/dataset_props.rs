use std::collections::HashSet;

use taskroute::dataset::{
    clean, load_jsonl, normalize_instruction, parse_jsonl, save_jsonl, stats, synth_chain, synth_corpus, synth_single,
    to_jsonl, Complexity, DatasetError, Distribution, RecordKind, Split, TemplateBank,
};
use taskroute::grammar::{parse_response, render_response};
use taskroute::task::TaskKind;
use proptest::prelude::*;

fn any_task() -> impl Strategy<Value = TaskKind> {
    proptest::sample::select(TaskKind::all().collect::<Vec<_>>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn singles_are_valid_and_deterministic(task in any_task(), seed in any::<u64>()) {
        let bank = TemplateBank::shipped();
        let a = synth_single(task, 20, seed, &bank).unwrap();
        prop_assert_eq!(&a, &synth_single(task, 20, seed, &bank).unwrap());
        let mut seen = HashSet::new();
        for r in &a {
            prop_assert_eq!(r.gold_tasks(), &[task][..]);
            prop_assert!(r.complexity.admits(r.instruction_words()), "{} words labelled {:?}", r.instruction_words(), r.complexity);
            prop_assert_eq!(Complexity::classify(r.instruction_words()), r.complexity);
            prop_assert!(seen.insert(r.instruction.clone()));
            let reparsed = parse_response(r.gold_response()).unwrap();
            prop_assert_eq!(render_response(&reparsed).unwrap(), r.gold_response());
        }
    }

    #[test]
    fn chains_use_distinct_tasks_from_scope(seed in any::<u64>(), k in 2usize..8) {
        let bank = TemplateBank::shipped();
        let scope: Vec<TaskKind> = TaskKind::all().skip(seed as usize % 20).take(k).collect();
        let chains = synth_chain(15, seed, &bank, &scope, 2..=5).unwrap();
        for c in &chains {
            let tasks = c.gold_tasks();
            prop_assert!((2..=k.min(5)).contains(&tasks.len()));
            prop_assert!(tasks.iter().all(|t| scope.contains(t)));
            prop_assert_eq!(tasks.iter().collect::<HashSet<_>>().len(), tasks.len());
            prop_assert_eq!(c.kind, RecordKind::Chain);
        }
    }

    #[test]
    fn normalization_is_idempotent(text in "\\PC{0,80}") {
        let once = normalize_instruction(&text);
        prop_assert_eq!(normalize_instruction(&once), once);
    }
}

#[test]
fn clean_is_idempotent_with_duplicates() {
    let bank = TemplateBank::shipped();
    let mut records = synth_corpus(&Distribution::scaled(Split::Bench, 0.02), 3, &bank).unwrap();
    let n = records.len();
    // Exact and near duplicates under fresh ids.
    let mut extra = Vec::new();
    for (i, r) in records.iter().take(30).enumerate() {
        let mut copy = r.clone();
        copy.id = format!("dup-{i}");
        if i % 2 == 0 {
            copy.instruction = format!("  {}  ", r.instruction.to_uppercase());
        }
        extra.push(copy);
    }
    records.extend(extra);
    let (once, report) = clean(records);
    assert_eq!(once.len(), n);
    assert_eq!(report.removed.len(), 30);
    assert!(report.removed_ids().iter().all(|id| id.starts_with("dup-")));
    let (twice, again) = clean(once.clone());
    assert_eq!(once, twice);
    assert!(again.removed.is_empty());
}

#[test]
fn thousand_records_save_and_load_byte_stable() {
    let bank = TemplateBank::shipped();
    let mut records = synth_corpus(&Distribution::scaled(Split::Bench, 0.03), 9, &bank).unwrap();
    records.truncate(1000);
    assert_eq!(records.len(), 1000);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    save_jsonl(&records, &a).unwrap();
    let loaded = load_jsonl(&a).unwrap();
    assert_eq!(loaded, records);
    save_jsonl(&loaded, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(to_jsonl(&loaded), std::fs::read_to_string(&b).unwrap());
}

#[test]
fn schema_violations_name_line_and_field() {
    let good = to_jsonl(&synth_single(TaskKind::all().next().unwrap(), 2, 1, &TemplateBank::shipped()).unwrap());
    let mut lines: Vec<String> = good.lines().map(str::to_string).collect();
    lines.push(lines[0].clone());
    lines.push(r#"{"id":"x","instruction":"hi","gold_response":"<image_gen>cat","complexity":"S","kind":"single","source":"synthetic"}"#.into());
    lines.push(r#"{"id":"y","instruction":"hi"}"#.into());
    lines.push("not json".into());
    match parse_jsonl(&lines.join("\n")) {
        Err(DatasetError::Schema(v)) => {
            let at: Vec<(usize, &str)> = v.iter().map(|e| (e.line, e.field.as_str())).collect();
            assert!(at.contains(&(3, "id")), "{v:?}");
            assert!(at.contains(&(4, "gold_response")), "{v:?}");
            assert!(at.iter().any(|(l, _)| *l == 5), "{v:?}");
            assert!(at.iter().any(|(l, _)| *l == 6), "{v:?}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn stats_match_distribution() {
    let dist = Distribution::scaled(Split::Bench, 0.05);
    let corpus = synth_corpus(&dist, 7, &TemplateBank::shipped()).unwrap();
    let st = stats(&corpus);
    assert_eq!(st.total, dist.total());
    for &(bucket, n) in &dist.entries {
        assert_eq!(st.count(bucket.key()), n, "{}", bucket.key());
    }
    let lengths: usize = st.chain_length_histogram.values().sum::<usize>();
    assert_eq!(lengths, st.count("chain_of_action"));
}

#[test]
fn full_tables_sum_to_published_totals() {
    assert_eq!(Distribution::table(Split::Instruct).total(), 446_344);
    assert_eq!(Distribution::table(Split::Bench).total(), 49_585);
}
