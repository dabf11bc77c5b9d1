use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::synth::example_pairs;
use super::{Complexity, DatasetError};
use crate::task::TaskKind;

const SHIPPED_TEMPLATES: &str = include_str!("../../assets/templates.toml");
/// Seed for the shipped example pairs.
pub const EXAMPLE_SEED: u64 = 2024;
pub const DEFAULT_PREFIXES: usize = 7;
pub const DEFAULT_PHRASES: usize = 12;
pub const DEFAULT_EXAMPLES_PER_LEVEL: usize = 3;

/// Subject-matter grammar: an adjective phrase and noun form the head, and
/// details lengthen it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentPool {
    pub adjectives: Vec<String>,
    pub nouns: Vec<String>,
    pub details: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePair {
    pub instruction: String,
    pub response: String,
    pub complexity: Complexity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskTemplates {
    pub description: String,
    /// Name of the content pool this task draws from.
    pub content: String,
    pub prefixes: Vec<String>,
    /// Verb phrases; `{}` marks where content goes, otherwise it is appended.
    pub phrases: Vec<String>,
    pub example_pairs: Vec<ExamplePair>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BankDoc {
    prefixes: Vec<String>,
    #[serde(default)]
    question_prefixes: Vec<String>,
    connectives: Vec<String>,
    elaborations: Vec<String>,
    pool: BTreeMap<String, ContentPool>,
    task: Vec<TaskDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskDoc {
    token: TaskKind,
    description: String,
    content: String,
    phrases: Vec<String>,
    prefixes: Option<Vec<String>>,
}

/// Prompt components for every task the bank covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateBank {
    pub tasks: BTreeMap<TaskKind, TaskTemplates>,
    pub pools: BTreeMap<String, ContentPool>,
    /// Prefixes that turn the instruction into a question.
    pub question_prefixes: Vec<String>,
    /// Joiners placed before each later part of a chain instruction.
    pub connectives: Vec<String>,
    /// Standalone sentences appended to extended instructions.
    pub elaborations: Vec<String>,
}

impl TemplateBank {
    /// The shipped bank with generated example pairs (three per level).
    pub fn shipped() -> TemplateBank {
        static BANK: OnceLock<TemplateBank> = OnceLock::new();
        BANK.get_or_init(|| {
            TemplateBank::from_toml(SHIPPED_TEMPLATES)
                .and_then(|b| b.with_generated_examples(EXAMPLE_SEED, DEFAULT_EXAMPLES_PER_LEVEL))
                .expect("shipped template bank is valid")
        })
        .clone()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<TemplateBank, DatasetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        TemplateBank::from_toml(&text)
    }

    /// Parse a bank without example pairs.
    pub fn from_toml(text: &str) -> Result<TemplateBank, DatasetError> {
        let doc: BankDoc = toml::from_str(text).map_err(|e| DatasetError::Bank(e.to_string()))?;
        let mut problems = Vec::new();
        for (name, pool) in &doc.pool {
            if pool.adjectives.is_empty() || pool.nouns.is_empty() || pool.details.is_empty() {
                problems.push(format!("pool `{name}` has an empty list"));
            }
        }
        if doc.connectives.is_empty() {
            problems.push("no connectives".into());
        }
        if doc.elaborations.is_empty() {
            problems.push("no elaborations".into());
        }
        let mut tasks = BTreeMap::new();
        for t in doc.task {
            if !doc.pool.contains_key(&t.content) {
                problems.push(format!("`{}` uses unknown pool `{}`", t.token, t.content));
            }
            let prefixes = t.prefixes.unwrap_or_else(|| doc.prefixes.clone());
            if prefixes.is_empty() || t.phrases.is_empty() {
                problems.push(format!("`{}` needs at least one prefix and phrase", t.token));
            }
            if t.phrases.iter().any(|p| p.matches("{}").count() > 1) {
                problems.push(format!("`{}` has a phrase with more than one slot", t.token));
            }
            let entry = TaskTemplates {
                description: t.description,
                content: t.content,
                prefixes,
                phrases: t.phrases,
                example_pairs: Vec::new(),
            };
            if tasks.insert(t.token, entry).is_some() {
                problems.push(format!("`{}` listed twice", t.token));
            }
        }
        if !problems.is_empty() {
            return Err(DatasetError::Bank(problems.join("; ")));
        }
        Ok(TemplateBank {
            tasks,
            pools: doc.pool,
            question_prefixes: doc.question_prefixes,
            connectives: doc.connectives,
            elaborations: doc.elaborations,
        })
    }

    /// Fill every task's example pairs with `per_level` synthesized pairs per
    /// complexity level.
    pub fn with_generated_examples(mut self, seed: u64, per_level: usize) -> Result<TemplateBank, DatasetError> {
        let tasks: Vec<TaskKind> = self.tasks.keys().copied().collect();
        for task in tasks {
            let pairs = example_pairs(&self, task, seed, per_level)?;
            self.tasks.get_mut(&task).expect("task present").example_pairs = pairs;
        }
        Ok(self)
    }

    pub fn covers(&self, task: TaskKind) -> bool {
        self.tasks.contains_key(&task)
    }

    pub fn task(&self, task: TaskKind) -> Result<&TaskTemplates, DatasetError> {
        self.tasks.get(&task).ok_or(DatasetError::UnknownTask(task))
    }

    pub(crate) fn pool(&self, task: TaskKind) -> Result<(&TaskTemplates, &ContentPool), DatasetError> {
        let t = self.task(task)?;
        let pool = self.pools.get(&t.content).ok_or_else(|| DatasetError::Bank(format!("unknown pool `{}`", t.content)))?;
        Ok((t, pool))
    }

    /// Copy that only covers `keep`.
    pub fn restricted(&self, keep: &BTreeSet<TaskKind>) -> TemplateBank {
        let mut copy = self.clone();
        copy.tasks.retain(|t, _| keep.contains(t));
        copy
    }

    /// Copy with each task's prefix and phrase lists cut to the given sizes.
    pub fn truncated(&self, prefixes: usize, phrases: usize) -> TemplateBank {
        let mut copy = self.clone();
        for t in copy.tasks.values_mut() {
            t.prefixes.truncate(prefixes.max(1));
            t.phrases.truncate(phrases.max(1));
        }
        copy
    }
}

/// Which sections the generator prompt includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptOptions {
    pub prefixes: bool,
    pub phrases: bool,
    pub complexities: bool,
    pub examples: bool,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions { prefixes: true, phrases: true, complexities: true, examples: true }
    }
}

/// Render the prompt that asks an external language model to write
/// instruction-response pairs for `task`.
pub fn build_llm_prompt(task: TaskKind, bank: &TemplateBank, options: &PromptOptions) -> Result<String, DatasetError> {
    let t = bank.task(task)?;
    let spec = task.spec();
    let mut out = format!(
        "Write pairs of a user instruction and a model response for the task: {}.\n\
         Each instruction asks an assistant to perform this task in natural, varied wording. \
         Each response is a refined prompt for a specialist model, wrapped as {}...{}.\n",
        t.description,
        spec.open_tag(),
        spec.close_tag()
    );
    if options.prefixes {
        out.push_str("\n## Instruction prefixes\nStart instructions with one of:\n");
        for (i, p) in t.prefixes.iter().enumerate() {
            out.push_str(&format!("{}. {p}\n", i + 1));
        }
    }
    if options.phrases {
        out.push_str("\n## Task phrases\nUse phrasing similar to:\n");
        for (i, p) in t.phrases.iter().enumerate() {
            out.push_str(&format!("{}. {}\n", i + 1, p.replace("{}", "...")));
        }
    }
    if options.complexities {
        out.push_str(
            "\n## Complexity levels\n\
             Produce an equal mix of the following levels:\n\
             - Short (S): at most 12 words, a direct request.\n\
             - Moderate (M): 13 to 30 words, adds descriptive detail.\n\
             - Extended (E): more than 30 words, adds context, purpose, or constraints across several sentences.\n",
        );
    }
    if options.examples {
        out.push_str("\n## Examples\n");
        for (i, ex) in t.example_pairs.iter().enumerate() {
            out.push_str(&format!(
                "Example {} ({}):\nInstruction: {}\nResponse: {}\n",
                i + 1,
                ex.complexity.code(),
                ex.instruction,
                ex.response
            ));
        }
    }
    out.push_str(
        "\n## Output\nReturn one JSON object per line with keys \"instruction\" and \"response\". \
         Do not repeat instructions.\n",
    );
    Ok(out)
}
