//! Instruction corpora: records, the template bank, seeded synthesis,
//! cleaning, and statistics.

mod bank;
mod profile;
mod record;
mod synth;

pub use bank::{
    build_llm_prompt, ContentPool, ExamplePair, PromptOptions, TaskTemplates, TemplateBank, DEFAULT_EXAMPLES_PER_LEVEL,
    DEFAULT_PHRASES, DEFAULT_PREFIXES, EXAMPLE_SEED,
};
pub use profile::{clean, clean_with_filter, normalize_instruction, stats, CleanReport, DatasetStats, RemovalReason, Removed};
pub use record::{
    load_jsonl, parse_jsonl, save_jsonl, to_jsonl, Complexity, InstructionRecord, RecordError, RecordKind,
    SchemaViolation, Source,
};
pub use synth::{
    synth_chain, synth_chain_sequence, synth_corpus, synth_single, Bucket, Distribution, Split, DEFAULT_CHAIN_RANGE,
};

use std::path::Path;

use crate::task::TaskKind;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
    #[error("{} schema violation(s):\n{}", .0.len(), render_violations(.0))]
    Schema(Vec<SchemaViolation>),
    #[error("the template bank does not cover `{0}`")]
    UnknownTask(TaskKind),
    #[error("grammar exhausted for {what}: produced {produced} of {requested} distinct records")]
    ExhaustedGrammar { what: String, requested: usize, produced: usize },
    #[error("invalid template bank: {0}")]
    Bank(String),
}

fn render_violations(v: &[SchemaViolation]) -> String {
    const SHOWN: usize = 20;
    let mut lines: Vec<String> = v.iter().take(SHOWN).map(|v| format!("  {v}")).collect();
    if v.len() > SHOWN {
        lines.push(format!("  ... and {} more", v.len() - SHOWN));
    }
    lines.join("\n")
}

impl DatasetError {
    pub(crate) fn io(path: &Path, err: std::io::Error) -> DatasetError {
        DatasetError::Io { path: path.display().to_string(), detail: err.to_string() }
    }
}
