use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::DatasetError;
use crate::grammar::{parse_response, RoutedResponse};
use crate::task::TaskKind;

/// Instruction length class, by whitespace word count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Complexity {
    #[serde(rename = "S")]
    Short,
    #[serde(rename = "M")]
    Moderate,
    #[serde(rename = "E")]
    Extended,
}

impl Complexity {
    pub const ALL: [Complexity; 3] = [Complexity::Short, Complexity::Moderate, Complexity::Extended];

    /// Short is at most 12 words, moderate 13 to 30, extended anything longer.
    pub fn classify(words: usize) -> Complexity {
        match words {
            0..=12 => Complexity::Short,
            13..=30 => Complexity::Moderate,
            _ => Complexity::Extended,
        }
    }

    pub fn admits(self, words: usize) -> bool {
        Complexity::classify(words) == self && words > 0
    }

    pub fn code(self) -> &'static str {
        match self {
            Complexity::Short => "S",
            Complexity::Moderate => "M",
            Complexity::Extended => "E",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Complexity::Short => "short",
            Complexity::Moderate => "moderate",
            Complexity::Extended => "extended",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Single,
    Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Synthetic,
    External,
}

pub(crate) fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("does not parse: {0}")]
    Unparseable(String),
    #[error("contains no routing step")]
    NoSteps,
    #[error("{kind:?} record has {steps} steps")]
    KindMismatch { kind: RecordKind, steps: usize },
}

impl RecordError {
    fn field(&self) -> &'static str {
        match self {
            RecordError::Empty(f) => f,
            RecordError::Unparseable(_) | RecordError::NoSteps => "gold_response",
            RecordError::KindMismatch { .. } => "kind",
        }
    }
}

/// One instruction with its gold routed response.
///
/// The gold response is validated on construction, so the cached parse and
/// task list are always consistent with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "RecordLine", try_from = "RecordLine")]
pub struct InstructionRecord {
    pub id: String,
    pub instruction: String,
    gold_response: String,
    gold: RoutedResponse,
    gold_tasks: Vec<TaskKind>,
    pub complexity: Complexity,
    pub kind: RecordKind,
    pub source: Source,
}

impl InstructionRecord {
    pub fn new(
        id: impl Into<String>,
        instruction: impl Into<String>,
        gold_response: impl Into<String>,
        complexity: Complexity,
        kind: RecordKind,
        source: Source,
    ) -> Result<Self, RecordError> {
        let (id, instruction, gold_response) = (id.into(), instruction.into(), gold_response.into());
        if id.trim().is_empty() {
            return Err(RecordError::Empty("id"));
        }
        if instruction.trim().is_empty() {
            return Err(RecordError::Empty("instruction"));
        }
        let gold = parse_response(&gold_response).map_err(|e| RecordError::Unparseable(e.to_string()))?;
        let gold_tasks = gold.tasks();
        let steps = gold_tasks.len();
        let consistent = match kind {
            _ if steps == 0 => return Err(RecordError::NoSteps),
            RecordKind::Single => steps == 1,
            RecordKind::Chain => (2..=5).contains(&steps),
        };
        if !consistent {
            return Err(RecordError::KindMismatch { kind, steps });
        }
        Ok(InstructionRecord { id, instruction, gold_response, gold, gold_tasks, complexity, kind, source })
    }

    pub fn gold_response(&self) -> &str {
        &self.gold_response
    }

    pub fn gold(&self) -> &RoutedResponse {
        &self.gold
    }

    pub fn gold_tasks(&self) -> &[TaskKind] {
        &self.gold_tasks
    }

    pub fn instruction_words(&self) -> usize {
        word_count(&self.instruction)
    }
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    instruction: String,
    gold_response: String,
    complexity: Complexity,
    kind: RecordKind,
    source: Source,
}

impl From<InstructionRecord> for RecordLine {
    fn from(r: InstructionRecord) -> Self {
        RecordLine {
            id: r.id,
            instruction: r.instruction,
            gold_response: r.gold_response,
            complexity: r.complexity,
            kind: r.kind,
            source: r.source,
        }
    }
}

impl TryFrom<RecordLine> for InstructionRecord {
    type Error = RecordError;

    fn try_from(l: RecordLine) -> Result<Self, Self::Error> {
        InstructionRecord::new(l.id, l.instruction, l.gold_response, l.complexity, l.kind, l.source)
    }
}

const FIELDS: [&str; 6] = ["id", "instruction", "gold_response", "complexity", "kind", "source"];

/// A record-level problem found while loading a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaViolation {
    /// 1-based line number.
    pub line: usize,
    pub field: String,
    pub detail: String,
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}: {}", self.line, self.field, self.detail)
    }
}

fn violation(line: usize, field: &str, detail: impl Into<String>) -> SchemaViolation {
    SchemaViolation { line, field: field.to_string(), detail: detail.into() }
}

fn parse_line(line_no: usize, line: &str) -> Result<InstructionRecord, Vec<SchemaViolation>> {
    let obj: Map<String, Value> = match serde_json::from_str(line) {
        Ok(Value::Object(obj)) => obj,
        Ok(_) => return Err(vec![violation(line_no, "record", "expected a JSON object")]),
        Err(e) => return Err(vec![violation(line_no, "record", e.to_string())]),
    };
    let mut errs: Vec<SchemaViolation> = obj
        .keys()
        .filter(|k| !FIELDS.contains(&k.as_str()))
        .map(|k| violation(line_no, k, "unknown field"))
        .collect();

    fn field<T: serde::de::DeserializeOwned>(
        obj: &Map<String, Value>,
        name: &str,
        line: usize,
        errs: &mut Vec<SchemaViolation>,
    ) -> Option<T> {
        let Some(v) = obj.get(name) else {
            errs.push(violation(line, name, "missing"));
            return None;
        };
        serde_json::from_value(v.clone()).map_err(|e| errs.push(violation(line, name, e.to_string()))).ok()
    }

    let id: Option<String> = field(&obj, "id", line_no, &mut errs);
    let instruction: Option<String> = field(&obj, "instruction", line_no, &mut errs);
    let gold: Option<String> = field(&obj, "gold_response", line_no, &mut errs);
    let complexity: Option<Complexity> = field(&obj, "complexity", line_no, &mut errs);
    let kind: Option<RecordKind> = field(&obj, "kind", line_no, &mut errs);
    let source: Option<Source> = field(&obj, "source", line_no, &mut errs);
    if !errs.is_empty() {
        return Err(errs);
    }
    let (Some(id), Some(instruction), Some(gold), Some(complexity), Some(kind), Some(source)) =
        (id, instruction, gold, complexity, kind, source)
    else {
        unreachable!("every missing field was reported");
    };
    InstructionRecord::new(id, instruction, gold, complexity, kind, source)
        .map_err(|e| vec![violation(line_no, e.field(), e.to_string())])
}

/// Parse a JSONL corpus, collecting every violation before failing.
pub fn parse_jsonl(text: &str) -> Result<Vec<InstructionRecord>, DatasetError> {
    let mut records = Vec::new();
    let mut errs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line_no, line) {
            Ok(rec) => {
                if !seen.insert(rec.id.clone()) {
                    errs.push(violation(line_no, "id", format!("duplicate id {:?}", rec.id)));
                }
                records.push(rec);
            }
            Err(mut e) => errs.append(&mut e),
        }
    }
    if errs.is_empty() {
        Ok(records)
    } else {
        Err(DatasetError::Schema(errs))
    }
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<InstructionRecord>, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    parse_jsonl(&text)
}

/// One JSON object per line, LF-terminated.
pub fn to_jsonl(records: &[InstructionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn save_jsonl(records: &[InstructionRecord], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    std::fs::write(path, to_jsonl(records)).map_err(|e| DatasetError::io(path, e))
}
