use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::record::word_count;
use super::synth::Bucket;
use super::{InstructionRecord, RecordKind};
use crate::grammar::Segment;
use crate::task::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    ExactDuplicate,
    NormalizedDuplicate,
    Filtered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removed {
    pub id: String,
    pub reason: RemovalReason,
    /// The kept record this one duplicates.
    pub duplicate_of: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub removed: Vec<Removed>,
}

impl CleanReport {
    pub fn removed_ids(&self) -> Vec<&str> {
        self.removed.iter().map(|r| r.id.as_str()).collect()
    }
}

/// Lowercase, drop punctuation, collapse whitespace.
pub fn normalize_instruction(text: &str) -> String {
    let stripped: String =
        text.chars().filter(|c| c.is_alphanumeric() || c.is_whitespace()).flat_map(char::to_lowercase).collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Remove exact and normalized duplicate instructions, keeping the first.
pub fn clean(records: Vec<InstructionRecord>) -> (Vec<InstructionRecord>, CleanReport) {
    clean_with_filter(records, |_| true)
}

/// As [`clean`], additionally dropping records the external `keep` predicate
/// rejects (for example a grammaticality check run elsewhere).
pub fn clean_with_filter(
    records: Vec<InstructionRecord>,
    keep: impl Fn(&InstructionRecord) -> bool,
) -> (Vec<InstructionRecord>, CleanReport) {
    let mut exact: HashMap<String, String> = HashMap::new();
    let mut normalized: HashMap<String, String> = HashMap::new();
    let mut kept = Vec::with_capacity(records.len());
    let mut report = CleanReport::default();
    for r in records {
        if let Some(first) = exact.get(&r.instruction) {
            report.removed.push(Removed {
                id: r.id,
                reason: RemovalReason::ExactDuplicate,
                duplicate_of: Some(first.clone()),
            });
            continue;
        }
        let norm = normalize_instruction(&r.instruction);
        if let Some(first) = normalized.get(&norm) {
            report.removed.push(Removed {
                id: r.id,
                reason: RemovalReason::NormalizedDuplicate,
                duplicate_of: Some(first.clone()),
            });
            continue;
        }
        if !keep(&r) {
            report.removed.push(Removed { id: r.id, reason: RemovalReason::Filtered, duplicate_of: None });
            continue;
        }
        exact.insert(r.instruction.clone(), r.id.clone());
        normalized.insert(norm, r.id.clone());
        kept.push(r);
    }
    (kept, report)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// Single-task records per token, then chains, in table order; only
    /// non-zero buckets are listed.
    pub per_task: Vec<(String, usize)>,
    pub per_complexity: BTreeMap<String, usize>,
    pub total: usize,
    pub max_instruction_words: usize,
    pub mean_instruction_words: f64,
    /// Words of the refined prompts and any direct-answer text, tags excluded.
    pub mean_response_words: f64,
    /// Gold chain length to record count, chain records only.
    pub chain_length_histogram: BTreeMap<usize, usize>,
}

impl DatasetStats {
    pub fn count(&self, key: &str) -> usize {
        self.per_task.iter().find(|(k, _)| k == key).map_or(0, |(_, n)| *n)
    }
}

fn response_words(r: &InstructionRecord) -> usize {
    r.gold()
        .segments()
        .iter()
        .map(|s| match s {
            Segment::Text { text } => word_count(text),
            Segment::Step(step) => word_count(&step.refined_prompt),
        })
        .sum()
}

pub fn stats(records: &[InstructionRecord]) -> DatasetStats {
    let mut counts: HashMap<Bucket, usize> = HashMap::new();
    let mut s = DatasetStats { total: records.len(), ..Default::default() };
    let (mut instr_words, mut resp_words) = (0usize, 0usize);
    for r in records {
        let bucket = match r.kind {
            RecordKind::Single => Bucket::Task(r.gold_tasks()[0]),
            RecordKind::Chain => {
                *s.chain_length_histogram.entry(r.gold_tasks().len()).or_default() += 1;
                Bucket::Chain
            }
        };
        *counts.entry(bucket).or_default() += 1;
        *s.per_complexity.entry(r.complexity.code().to_string()).or_default() += 1;
        let w = r.instruction_words();
        instr_words += w;
        s.max_instruction_words = s.max_instruction_words.max(w);
        resp_words += response_words(r);
    }
    if !records.is_empty() {
        s.mean_instruction_words = instr_words as f64 / records.len() as f64;
        s.mean_response_words = resp_words as f64 / records.len() as f64;
    }
    s.per_task = TaskKind::all()
        .map(Bucket::Task)
        .chain([Bucket::Chain])
        .filter_map(|b| counts.get(&b).map(|&n| (b.key().to_string(), n)))
        .collect();
    s
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20} {:>8}", "task", "records")?;
        for (k, n) in &self.per_task {
            writeln!(f, "{k:<20} {n:>8}")?;
        }
        writeln!(f, "{:<20} {:>8}", "total", self.total)?;
        writeln!(f)?;
        let levels: Vec<String> = self.per_complexity.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(f, "complexity: {}", levels.join(" "))?;
        writeln!(f, "max instruction words: {}", self.max_instruction_words)?;
        writeln!(f, "mean instruction words: {:.2}", self.mean_instruction_words)?;
        writeln!(f, "mean response words: {:.2}", self.mean_response_words)?;
        let hist: Vec<String> = self.chain_length_histogram.iter().map(|(k, v)| format!("{k}:{v}")).collect();
        write!(f, "chain lengths: {}", if hist.is_empty() { "-".to_string() } else { hist.join(" ") })
    }
}
