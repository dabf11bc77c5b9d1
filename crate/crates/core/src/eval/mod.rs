//! Routing evaluation: single-task classification scores, chain-of-action
//! sequence scores, a parallel harness, and a task-count sweep.

mod metrics;
mod sweep;

pub use metrics::{
    chain_table, confusion, eval_chain, eval_chain_with, eval_single, eval_single_with, levenshtein, single_table,
    success_rate, Averaging, ChainEvalReport, ClassMetrics, ConfusionMatrix, EditNormalization, EvalReport,
    MetricsPolicy,
};
pub use sweep::{family_prefix_subsets, sweep, sweep_table, CorpusConfig, SweepRow};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{Controller, ControllerError, ControllerRequest};
use crate::dataset::{InstructionRecord, RecordKind};
use crate::grammar::RoutedResponse;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {golds} gold records")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("record {id} is not a {expected:?} record")]
    WrongKind { id: String, expected: RecordKind },
    #[error("cannot start worker pool: {0}")]
    Workers(String),
}

pub type Prediction = Result<RoutedResponse, ControllerError>;

/// Route every record, in input order, using up to `workers` threads.
pub fn run_controller(
    controller: &dyn Controller,
    records: &[InstructionRecord],
    workers: usize,
) -> Result<Vec<Prediction>, EvalError> {
    let route = |r: &InstructionRecord| {
        controller.route(&ControllerRequest::new(r.instruction.clone()).with_record_id(r.id.clone()))
    };
    if workers <= 1 {
        return Ok(records.iter().map(route).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| EvalError::Workers(e.to_string()))?;
    Ok(pool.install(|| records.par_iter().map(route).collect()))
}

/// Scores for a mixed corpus; either half is absent when the corpus has no
/// records of that kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub controller: String,
    pub single: Option<EvalReport>,
    pub chain: Option<ChainEvalReport>,
}

impl std::fmt::Display for Evaluation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(s) = &self.single {
            writeln!(f, "Single-task ({} records, {} malformed)", s.n_records, s.n_malformed)?;
            write!(f, "{}", single_table(&[(&self.controller, s)]))?;
        }
        if let Some(c) = &self.chain {
            if self.single.is_some() {
                writeln!(f)?;
            }
            writeln!(f, "Chain-of-action ({} records, {} malformed)", c.n_records, c.n_malformed)?;
            write!(f, "{}", chain_table(&[(&self.controller, c)]))?;
        }
        Ok(())
    }
}

/// Route a corpus and score its single-task and chain halves.
pub fn evaluate(
    controller: &dyn Controller,
    records: &[InstructionRecord],
    workers: usize,
) -> Result<Evaluation, EvalError> {
    let (singles, chains): (Vec<InstructionRecord>, Vec<InstructionRecord>) =
        records.iter().cloned().partition(|r| r.kind == RecordKind::Single);
    let single = if singles.is_empty() {
        None
    } else {
        Some(eval_single(&run_controller(controller, &singles, workers)?, &singles)?)
    };
    let chain = if chains.is_empty() {
        None
    } else {
        Some(eval_chain(&run_controller(controller, &chains, workers)?, &chains)?)
    };
    Ok(Evaluation { controller: controller.name().to_string(), single, chain })
}
