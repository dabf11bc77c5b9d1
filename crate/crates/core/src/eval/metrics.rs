use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataset::{InstructionRecord, RecordKind};
use crate::grammar::RoutedResponse;
use crate::task::TaskKind;

/// Unit-cost edit distance between two sequences.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Per-class values weighted by gold support.
    #[default]
    Weighted,
    /// Unweighted mean over classes with gold support.
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditNormalization {
    /// Divide by the longer sequence length.
    #[default]
    MaxLength,
    /// Raw edit count.
    None,
}

/// Every metric choice that is a matter of convention lives here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricsPolicy {
    pub averaging: Averaging,
    pub edit_normalization: EditNormalization,
}

fn class_index(task: TaskKind) -> usize {
    TaskKind::all().position(|t| t == task).expect("task is in the table")
}

/// Gold rows by predicted columns, with one extra reject column for
/// predictions that failed or carried no step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        let n = TaskKind::all().count();
        ConfusionMatrix { counts: vec![vec![0; n + 1]; n] }
    }
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    fn reject_col(&self) -> usize {
        self.counts.len()
    }

    pub fn add(&mut self, gold: TaskKind, predicted: Option<TaskKind>) {
        let col = predicted.map_or(self.reject_col(), class_index);
        self.counts[class_index(gold)][col] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
    }

    pub fn get(&self, gold: TaskKind, predicted: TaskKind) -> u64 {
        self.counts[class_index(gold)][class_index(predicted)]
    }

    pub fn rejects(&self, gold: TaskKind) -> u64 {
        self.counts[class_index(gold)][self.reject_col()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn total_rejects(&self) -> u64 {
        self.counts.iter().map(|r| r[self.reject_col()]).sum()
    }

    pub fn support(&self, task: TaskKind) -> u64 {
        self.counts[class_index(task)].iter().sum()
    }

    pub fn true_positives(&self, task: TaskKind) -> u64 {
        self.get(task, task)
    }

    pub fn predicted(&self, task: TaskKind) -> u64 {
        let col = class_index(task);
        self.counts.iter().map(|r| r[col]).sum()
    }

    pub fn correct(&self) -> u64 {
        TaskKind::all().map(|t| self.true_positives(t)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub task: TaskKind,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Single-task routing scores. Values are fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub n_records: u64,
    pub n_malformed: u64,
}

impl EvalReport {
    pub fn from_confusion(cm: &ConfusionMatrix, policy: &MetricsPolicy) -> EvalReport {
        let n = cm.total();
        let per_class: Vec<ClassMetrics> = TaskKind::all()
            .filter(|&t| cm.support(t) > 0 || cm.predicted(t) > 0)
            .map(|t| {
                let tp = cm.true_positives(t);
                let precision = ratio(tp, cm.predicted(t));
                let recall = ratio(tp, cm.support(t));
                ClassMetrics { task: t, precision, recall, f1: harmonic(precision, recall), support: cm.support(t) }
            })
            .collect();
        let supported: Vec<&ClassMetrics> = per_class.iter().filter(|c| c.support > 0).collect();
        let avg = |f: fn(&ClassMetrics) -> f64| -> f64 {
            match policy.averaging {
                Averaging::Weighted => supported.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / n.max(1) as f64,
                Averaging::Macro => supported.iter().map(|c| f(c)).sum::<f64>() / supported.len().max(1) as f64,
            }
        };
        let recall = match policy.averaging {
            // Support-weighted recall reduces to correct / total; compute it
            // that way so it equals accuracy bit for bit.
            Averaging::Weighted => ratio(cm.correct(), n),
            Averaging::Macro => avg(|c| c.recall),
        };
        EvalReport {
            accuracy: ratio(cm.correct(), n),
            precision: avg(|c| c.precision),
            recall,
            f1: avg(|c| c.f1),
            per_class,
            n_records: n,
            n_malformed: cm.total_rejects(),
        }
    }
}

/// Task of the first step, or `None` for failed and step-less predictions.
fn first_task<E>(pred: &Result<RoutedResponse, E>) -> Option<TaskKind> {
    pred.as_ref().ok().and_then(|r| r.steps().next().map(|s| s.task))
}

pub fn confusion<E>(preds: &[Result<RoutedResponse, E>], golds: &[InstructionRecord]) -> Result<ConfusionMatrix, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch { predictions: preds.len(), golds: golds.len() });
    }
    let mut cm = ConfusionMatrix::new();
    for (p, g) in preds.iter().zip(golds) {
        if g.kind != RecordKind::Single {
            return Err(EvalError::WrongKind { id: g.id.clone(), expected: RecordKind::Single });
        }
        cm.add(g.gold_tasks()[0], first_task(p));
    }
    Ok(cm)
}

pub fn eval_single<E>(preds: &[Result<RoutedResponse, E>], golds: &[InstructionRecord]) -> Result<EvalReport, EvalError> {
    eval_single_with(preds, golds, &MetricsPolicy::default())
}

pub fn eval_single_with<E>(
    preds: &[Result<RoutedResponse, E>],
    golds: &[InstructionRecord],
    policy: &MetricsPolicy,
) -> Result<EvalReport, EvalError> {
    Ok(EvalReport::from_confusion(&confusion(preds, golds)?, policy))
}

/// Mean of exact fractions, independent of the order values are added in.
#[derive(Debug, Clone, Default)]
struct FractionMean {
    counts: BTreeMap<(u64, u64), u64>,
    n: u64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl FractionMean {
    fn add(&mut self, num: u64, den: u64) {
        let key = if num == 0 || den == 0 {
            (0, 1)
        } else {
            let g = gcd(num, den);
            (num / g, den / g)
        };
        *self.counts.entry(key).or_default() += 1;
        self.n += 1;
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.counts.iter().map(|(&(num, den), &c)| c as f64 * num as f64 / den as f64).sum::<f64>() / self.n as f64
    }
}

/// Chain-of-action scores; every value is a mean over records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainEvalReport {
    pub edit_distance: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_records: u64,
    pub n_malformed: u64,
    /// Gold chain length to record count.
    pub length_histogram: BTreeMap<usize, u64>,
}

/// Size of the multiset intersection.
fn overlap(a: &[TaskKind], b: &[TaskKind]) -> u64 {
    let mut counts: HashMap<TaskKind, i64> = HashMap::new();
    for t in a {
        *counts.entry(*t).or_default() += 1;
    }
    let mut shared = 0;
    for t in b {
        let c = counts.entry(*t).or_default();
        if *c > 0 {
            *c -= 1;
            shared += 1;
        }
    }
    shared
}

/// Per-record chain scores as exact fractions: (edit, precision, recall, f1).
fn chain_fractions(pred: &[TaskKind], gold: &[TaskKind], policy: &MetricsPolicy) -> [(u64, u64); 4] {
    let dist = levenshtein(pred, gold) as u64;
    let longest = pred.len().max(gold.len()) as u64;
    let ed = match policy.edit_normalization {
        EditNormalization::MaxLength if longest == 0 => (0, 1),
        EditNormalization::MaxLength => (dist, longest),
        EditNormalization::None => (dist, 1),
    };
    let shared = overlap(pred, gold);
    let (p, g) = (pred.len() as u64, gold.len() as u64);
    // With P = s/p and R = s/g the harmonic mean simplifies to 2s/(p+g).
    [ed, (shared, p), (shared, g), (2 * shared, p + g)]
}

pub fn eval_chain<E>(preds: &[Result<RoutedResponse, E>], golds: &[InstructionRecord]) -> Result<ChainEvalReport, EvalError> {
    eval_chain_with(preds, golds, &MetricsPolicy::default())
}

pub fn eval_chain_with<E>(
    preds: &[Result<RoutedResponse, E>],
    golds: &[InstructionRecord],
    policy: &MetricsPolicy,
) -> Result<ChainEvalReport, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch { predictions: preds.len(), golds: golds.len() });
    }
    let mut means: [FractionMean; 4] = Default::default();
    let mut histogram = BTreeMap::new();
    let mut malformed = 0;
    for (p, g) in preds.iter().zip(golds) {
        if g.kind != RecordKind::Chain {
            return Err(EvalError::WrongKind { id: g.id.clone(), expected: RecordKind::Chain });
        }
        let predicted = match p {
            Ok(r) => r.tasks(),
            Err(_) => {
                malformed += 1;
                Vec::new()
            }
        };
        for (mean, (num, den)) in means.iter_mut().zip(chain_fractions(&predicted, g.gold_tasks(), policy)) {
            mean.add(num, den);
        }
        *histogram.entry(g.gold_tasks().len()).or_default() += 1;
    }
    Ok(ChainEvalReport {
        edit_distance: means[0].mean(),
        precision: means[1].mean(),
        recall: means[2].mean(),
        f1: means[3].mean(),
        n_records: preds.len() as u64,
        n_malformed: malformed,
        length_histogram: histogram,
    })
}

/// Fraction of positive labels from an external success judgement.
pub fn success_rate(labels: &[bool]) -> f64 {
    ratio(labels.iter().filter(|&&b| b).count() as u64, labels.len() as u64)
}

/// Fixed-width single-task table: Acc | Pre | Recall | F1, as percentages.
pub fn single_table(rows: &[(&str, &EvalReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{:<width$} | {:>7} | {:>7} | {:>7} | {:>7}\n", "Method", "Acc", "Pre", "Recall", "F1");
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<width$} | {:>7.2} | {:>7.2} | {:>7.2} | {:>7.2}\n",
            name,
            r.accuracy * 100.0,
            r.precision * 100.0,
            r.recall * 100.0,
            r.f1 * 100.0
        ));
    }
    out
}

/// Fixed-width chain table: ED | Pre | Recall | F1. Edit distance stays a
/// fraction; the rest are percentages.
pub fn chain_table(rows: &[(&str, &ChainEvalReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{:<width$} | {:>7} | {:>7} | {:>7} | {:>7}\n", "Method", "ED", "Pre", "Recall", "F1");
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<width$} | {:>7.2} | {:>7.2} | {:>7.2} | {:>7.2}\n",
            name,
            r.edit_distance,
            r.precision * 100.0,
            r.recall * 100.0,
            r.f1 * 100.0
        ));
    }
    out
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", single_table(&[("single", self)]))?;
        write!(f, "records: {}  malformed: {}", self.n_records, self.n_malformed)
    }
}

impl fmt::Display for ChainEvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", chain_table(&[("chain", self)]))?;
        let hist: Vec<String> = self.length_histogram.iter().map(|(k, v)| format!("{k}:{v}")).collect();
        write!(f, "records: {}  malformed: {}  lengths: {}", self.n_records, self.n_malformed, hist.join(" "))
    }
}
