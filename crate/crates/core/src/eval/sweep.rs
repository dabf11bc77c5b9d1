use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{run_controller, ChainEvalReport, EvalReport};
use crate::controller::Controller;
use crate::dataset::{synth_corpus, Distribution, InstructionRecord, RecordKind, Split, TemplateBank};
use crate::eval::{eval_chain, eval_single};
use crate::task::{Family, TaskKind};

/// Corpus synthesized for each sweep row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub split: Split,
    pub scale: f64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { split: Split::Instruct, scale: 0.01, seed: 7, workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Number of task families in the subset.
    pub subset_size: usize,
    pub tasks: Vec<TaskKind>,
    pub single: Result<EvalReport, String>,
    pub chain: Result<ChainEvalReport, String>,
}

/// Nested subsets made of the first `n` families in table order, with
/// controllable families expanded to all their conditions.
pub fn family_prefix_subsets(sizes: &[usize]) -> Vec<BTreeSet<TaskKind>> {
    sizes
        .iter()
        .map(|&n| Family::ALL.iter().take(n).flat_map(|f| f.tasks()).collect())
        .collect()
}

fn run_row(
    subset: &BTreeSet<TaskKind>,
    make_router: &dyn Fn(&[InstructionRecord]) -> Box<dyn Controller>,
    config: &CorpusConfig,
    bank: &TemplateBank,
) -> (Result<EvalReport, String>, Result<ChainEvalReport, String>) {
    if subset.is_empty() {
        let e = "task subset is empty".to_string();
        return (Err(e.clone()), Err(e));
    }
    let distribution = Distribution::scaled(config.split, config.scale).restricted(subset);
    let corpus = match synth_corpus(&distribution, config.seed, bank) {
        Ok(c) => c,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let router = make_router(&corpus);
    let (singles, chains): (Vec<_>, Vec<_>) = corpus.into_iter().partition(|r| r.kind == RecordKind::Single);
    let single = run_controller(router.as_ref(), &singles, config.workers)
        .and_then(|p| eval_single(&p, &singles))
        .map_err(|e| e.to_string());
    let chain = run_controller(router.as_ref(), &chains, config.workers)
        .and_then(|p| eval_chain(&p, &chains))
        .map_err(|e| e.to_string());
    (single, chain)
}

/// Evaluate a router on a corpus restricted to each subset in turn. A failing
/// row records its error and the remaining rows still run.
pub fn sweep(
    subsets: &[BTreeSet<TaskKind>],
    make_router: &dyn Fn(&[InstructionRecord]) -> Box<dyn Controller>,
    config: &CorpusConfig,
    bank: &TemplateBank,
) -> Vec<SweepRow> {
    subsets
        .iter()
        .map(|subset| {
            let (single, chain) = run_row(subset, make_router, config, bank);
            SweepRow {
                subset_size: subset.iter().map(|t| t.family()).collect::<BTreeSet<_>>().len(),
                tasks: subset.iter().copied().collect(),
                single,
                chain,
            }
        })
        .collect()
}

/// One row per subset: task count, four single-task columns, four chain columns.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = format!(
        "{:>5} | {:>7} | {:>7} | {:>7} | {:>7} | {:>7} | {:>7} | {:>7} | {:>7}\n",
        "Tasks", "Acc", "Pre", "Recall", "F1", "ED", "Pre", "Recall", "F1"
    );
    for row in rows {
        let single = match &row.single {
            Ok(r) => [r.accuracy, r.precision, r.recall, r.f1].map(|v| format!("{:>7.2}", v * 100.0)),
            Err(_) => std::array::from_fn(|_| format!("{:>7}", "error")),
        };
        let chain = match &row.chain {
            Ok(r) => [
                format!("{:>7.2}", r.edit_distance),
                format!("{:>7.2}", r.precision * 100.0),
                format!("{:>7.2}", r.recall * 100.0),
                format!("{:>7.2}", r.f1 * 100.0),
            ],
            Err(_) => std::array::from_fn(|_| format!("{:>7}", "error")),
        };
        out.push_str(&format!("{:>5} | {} | {}\n", row.subset_size, single.join(" | "), chain.join(" | ")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_are_nested_family_prefixes() {
        let s = family_prefix_subsets(&[5, 10, 15, 20]);
        assert_eq!(s[0].len(), 5);
        assert_eq!(s[3].len(), 30);
        assert!(s.windows(2).all(|w| w[0].is_subset(&w[1])));
    }
}
