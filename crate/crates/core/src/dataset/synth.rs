use std::collections::{BTreeSet, HashSet};
use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bank::{ExamplePair, TemplateBank};
use super::record::word_count;
use super::{Complexity, DatasetError, InstructionRecord, RecordKind, Source};
use crate::grammar::{render_response, RoutedResponse, RoutingStep};
use crate::task::TaskKind;

/// Attempts per record before the grammar is declared exhausted.
const MAX_ATTEMPTS: u64 = 512;
const CHAIN_STREAM: u64 = 1_000;
const EXAMPLE_STREAM: u64 = 2_000;
pub const DEFAULT_CHAIN_RANGE: RangeInclusive<usize> = 2..=5;

fn task_stream(task: TaskKind) -> u64 {
    TaskKind::all().position(|t| t == task).expect("task is in the table") as u64 + 1
}

/// Independent generator for one (seed, stream, record, attempt) tuple, so
/// every record can be produced without generating the ones before it.
fn record_rng(seed: u64, stream: u64, index: u64, attempt: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (i, part) in [seed, stream, index, attempt].into_iter().enumerate() {
        key[i * 8..(i + 1) * 8].copy_from_slice(&part.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

struct Draft {
    instruction: String,
    core: String,
}

fn pick<'a, R: Rng>(rng: &mut R, items: &'a [String]) -> &'a str {
    items.choose(rng).map(String::as_str).unwrap_or("")
}

fn join_words(parts: &[&str]) -> String {
    parts.iter().filter(|p| !p.trim().is_empty()).map(|p| p.trim()).collect::<Vec<_>>().join(" ")
}

/// One candidate single-task instruction at the requested level. The caller
/// checks the length and retries on a miss.
fn draft<R: Rng>(bank: &TemplateBank, task: TaskKind, level: Complexity, rng: &mut R) -> Result<Draft, DatasetError> {
    let (t, pool) = bank.pool(task)?;
    let head = join_words(&[pick(rng, &pool.adjectives), pick(rng, &pool.nouns)]);
    let n_details = match level {
        Complexity::Short => 0,
        Complexity::Moderate => rng.gen_range(1..=2),
        Complexity::Extended => 2,
    };
    let mut details: Vec<&str> = Vec::new();
    while details.len() < n_details.min(pool.details.len()) {
        let d = pick(rng, &pool.details);
        if !details.contains(&d) {
            details.push(d);
        }
    }
    let mut parts = vec![head.as_str()];
    parts.extend(details);
    let core = join_words(&parts);

    let prefix = pick(rng, &t.prefixes);
    let phrase = pick(rng, &t.phrases);
    let body = if phrase.contains("{}") { phrase.replacen("{}", &core, 1) } else { format!("{phrase} {core}") };
    let question = bank.question_prefixes.iter().any(|q| q == prefix);
    let mut instruction = format!("{} {}{}", prefix, body, if question { "?" } else { "." });
    if level == Complexity::Extended {
        let n = rng.gen_range(1..=3).min(bank.elaborations.len());
        for e in bank.elaborations.choose_multiple(rng, n) {
            instruction.push(' ');
            instruction.push_str(e);
        }
    }
    Ok(Draft { instruction, core })
}

fn gold_for(steps: Vec<RoutingStep>) -> String {
    render_response(&RoutedResponse::from_steps(steps)).expect("synthesized content renders")
}

fn exhausted(what: String, requested: usize, produced: usize) -> DatasetError {
    DatasetError::ExhaustedGrammar { what, requested, produced }
}

/// Draw a distinct instruction for `task` at a uniformly chosen level.
fn fresh_single(
    bank: &TemplateBank,
    task: TaskKind,
    level: Option<Complexity>,
    stream: u64,
    seed: u64,
    index: u64,
    seen: &HashSet<String>,
) -> Result<Option<(Draft, Complexity)>, DatasetError> {
    // The level is fixed per record so length retries do not bias the mix.
    let level = level.unwrap_or_else(|| {
        *Complexity::ALL.choose(&mut record_rng(seed, stream, index, u64::MAX)).expect("non-empty")
    });
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = record_rng(seed, stream, index, attempt);
        let d = draft(bank, task, level, &mut rng)?;
        if level.admits(word_count(&d.instruction)) && !seen.contains(&d.instruction) {
            return Ok(Some((d, level)));
        }
    }
    Ok(None)
}

/// `count` distinct single-task records for `task`.
///
/// Output depends only on (task, count, seed, bank).
pub fn synth_single(
    task: TaskKind,
    count: usize,
    seed: u64,
    bank: &TemplateBank,
) -> Result<Vec<InstructionRecord>, DatasetError> {
    bank.pool(task)?;
    let stream = task_stream(task);
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let Some((d, level)) = fresh_single(bank, task, None, stream, seed, i as u64, &seen)? else {
            return Err(exhausted(task.token_name().to_string(), count, out.len()));
        };
        seen.insert(d.instruction.clone());
        let gold = gold_for(vec![RoutingStep::new(task, d.core)]);
        let id = format!("{}-{seed}-{i:05}", task.token_name());
        out.push(
            InstructionRecord::new(id, d.instruction, gold, level, RecordKind::Single, Source::Synthetic)
                .expect("synthesized record is valid"),
        );
    }
    Ok(out)
}

pub(crate) fn example_pairs(
    bank: &TemplateBank,
    task: TaskKind,
    seed: u64,
    per_level: usize,
) -> Result<Vec<ExamplePair>, DatasetError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (li, level) in Complexity::ALL.into_iter().enumerate() {
        for k in 0..per_level {
            let index = (li * per_level + k) as u64;
            let stream = EXAMPLE_STREAM + task_stream(task);
            let Some((d, _)) = fresh_single(bank, task, Some(level), stream, seed, index, &seen)? else {
                return Err(exhausted(format!("{} examples", task.token_name()), per_level * 3, out.len()));
            };
            seen.insert(d.instruction.clone());
            out.push(ExamplePair {
                instruction: d.instruction,
                response: gold_for(vec![RoutingStep::new(task, d.core)]),
                complexity: level,
            });
        }
    }
    Ok(out)
}

fn lower_first(text: &str) -> String {
    if text.starts_with("I ") || text.starts_with("I'") {
        return text.to_string();
    }
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn chain_draft(
    bank: &TemplateBank,
    tasks: &[TaskKind],
    rng: &mut ChaCha8Rng,
) -> Result<(String, Vec<RoutingStep>), DatasetError> {
    let mut instruction = String::new();
    let mut steps = Vec::with_capacity(tasks.len());
    let finale = bank.connectives.iter().position(|c| c.eq_ignore_ascii_case("Finally,"));
    let middle: Vec<&String> =
        bank.connectives.iter().enumerate().filter(|(i, _)| Some(*i) != finale).map(|(_, c)| c).collect();
    for (k, &task) in tasks.iter().enumerate() {
        let level = *Complexity::ALL.choose(rng).expect("non-empty");
        let d = draft(bank, task, level, rng)?;
        if k == 0 {
            instruction.push_str(&d.instruction);
        } else {
            let last = k + 1 == tasks.len() && tasks.len() > 2;
            let connective = match (last, finale) {
                (true, Some(f)) => &bank.connectives[f],
                _ => middle.choose(rng).copied().unwrap_or(&bank.connectives[0]),
            };
            instruction.push(' ');
            instruction.push_str(connective);
            instruction.push(' ');
            instruction.push_str(&lower_first(&d.instruction));
        }
        steps.push(RoutingStep::new(task, d.core));
    }
    Ok((instruction, steps))
}

fn chain_record(id: String, instruction: String, steps: Vec<RoutingStep>) -> InstructionRecord {
    let level = Complexity::classify(word_count(&instruction));
    InstructionRecord::new(id, instruction, gold_for(steps), level, RecordKind::Chain, Source::Synthetic)
        .expect("synthesized chain is valid")
}

/// `count` distinct chain records over tasks drawn from `scope`.
///
/// Each record picks its length uniformly from `n_range` (clamped to the
/// scope size), then that many distinct tasks in random order, and joins one
/// single-task instruction per task with connectives.
pub fn synth_chain(
    count: usize,
    seed: u64,
    bank: &TemplateBank,
    scope: &[TaskKind],
    n_range: RangeInclusive<usize>,
) -> Result<Vec<InstructionRecord>, DatasetError> {
    let scope: Vec<TaskKind> = scope.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    for &t in &scope {
        bank.pool(t)?;
    }
    let lo = (*n_range.start()).max(2);
    let hi = (*n_range.end()).min(5).min(scope.len());
    if count > 0 && lo > hi {
        return Err(DatasetError::Bank(format!(
            "chains of {lo}..={} steps need at least {lo} tasks, scope has {}",
            n_range.end(),
            scope.len()
        )));
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    'records: for i in 0..count {
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = record_rng(seed, CHAIN_STREAM, i as u64, attempt);
            let n = rng.gen_range(lo..=hi);
            let mut tasks = scope.clone();
            tasks.shuffle(&mut rng);
            tasks.truncate(n);
            let (instruction, steps) = chain_draft(bank, &tasks, &mut rng)?;
            if seen.insert(instruction.clone()) {
                out.push(chain_record(format!("chain-{seed}-{i:05}"), instruction, steps));
                continue 'records;
            }
        }
        return Err(exhausted("chain".into(), count, out.len()));
    }
    Ok(out)
}

/// A single chain over a fixed task sequence.
pub fn synth_chain_sequence(
    tasks: &[TaskKind],
    seed: u64,
    index: usize,
    bank: &TemplateBank,
) -> Result<InstructionRecord, DatasetError> {
    if !(2..=5).contains(&tasks.len()) {
        return Err(DatasetError::Bank(format!("chain length {} is outside 2..=5", tasks.len())));
    }
    let mut rng = record_rng(seed, CHAIN_STREAM, index as u64, 0);
    let (instruction, steps) = chain_draft(bank, tasks, &mut rng)?;
    Ok(chain_record(format!("chain-{seed}-{index:05}"), instruction, steps))
}

/// Which published corpus a distribution mirrors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Instruct,
    Bench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Task(TaskKind),
    Chain,
}

impl Bucket {
    /// Key used in stats tables.
    pub fn key(self) -> &'static str {
        match self {
            Bucket::Task(t) => t.token_name(),
            Bucket::Chain => "chain_of_action",
        }
    }
}

/// Per-task sample counts (training split, evaluation split), in table order.
const TABLE: [(&str, usize, usize); 30] = [
    ("image_gen", 45000, 5000),
    ("video_gen", 35786, 3976),
    ("image_edit", 34927, 3880),
    ("video_edit", 32227, 3580),
    ("3D_gen_text", 29250, 3250),
    ("3D_gen_image", 10800, 1200),
    ("image_deblur", 6300, 700),
    ("image_derain", 7650, 850),
    ("image_denoise", 7574, 841),
    ("image_sr", 6300, 700),
    ("pose_est", 6300, 700),
    ("normal_est", 6300, 700),
    ("canny_est", 6300, 700),
    ("depth_est", 6300, 700),
    ("obj_det", 7200, 800),
    ("obj_seg", 7200, 800),
    ("visual_ground", 23040, 2560),
    ("video_ref_seg", 21600, 2400),
    ("pose_to_image", 5946, 658),
    ("canny_to_image", 5950, 658),
    ("normal_to_image", 5896, 658),
    ("scribble_to_image", 5949, 658),
    ("seg_to_image", 5926, 658),
    ("depth_to_image", 5923, 658),
    ("pose_to_video", 7650, 850),
    ("canny_to_video", 7650, 850),
    ("normal_to_video", 7650, 850),
    ("scribble_to_video", 7650, 850),
    ("seg_to_video", 7650, 850),
    ("depth_to_video", 7650, 850),
];
const CHAIN_COUNTS: (usize, usize) = (64800, 7200);

/// How many records of each kind a corpus holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Distribution {
    pub entries: Vec<(Bucket, usize)>,
}

impl Distribution {
    /// Full-size published counts.
    pub fn table(split: Split) -> Distribution {
        let pick = |(a, b): (usize, usize)| if split == Split::Instruct { a } else { b };
        let mut entries: Vec<(Bucket, usize)> = TABLE
            .iter()
            .map(|&(name, a, b)| {
                (Bucket::Task(TaskKind::from_token_name(name).expect("table names are tokens")), pick((a, b)))
            })
            .collect();
        entries.push((Bucket::Chain, pick(CHAIN_COUNTS)));
        Distribution { entries }
    }

    /// Published counts multiplied by `factor`, each rounded to nearest.
    pub fn scaled(split: Split, factor: f64) -> Distribution {
        Distribution::table(split).scale(factor)
    }

    pub fn scale(&self, factor: f64) -> Distribution {
        let entries = self.entries.iter().map(|&(b, n)| (b, (n as f64 * factor).round() as usize)).collect();
        Distribution { entries }
    }

    /// Keep only single-task buckets in `tasks` (chains stay).
    pub fn restricted(&self, tasks: &BTreeSet<TaskKind>) -> Distribution {
        let entries = self
            .entries
            .iter()
            .filter(|(b, _)| match b {
                Bucket::Task(t) => tasks.contains(t),
                Bucket::Chain => true,
            })
            .copied()
            .collect();
        Distribution { entries }
    }

    pub fn count(&self, bucket: Bucket) -> usize {
        self.entries.iter().filter(|(b, _)| *b == bucket).map(|(_, n)| n).sum()
    }

    pub fn total(&self) -> usize {
        self.entries.iter().map(|(_, n)| n).sum()
    }

    pub fn tasks(&self) -> Vec<TaskKind> {
        self.entries
            .iter()
            .filter_map(|(b, _)| match b {
                Bucket::Task(t) => Some(*t),
                Bucket::Chain => None,
            })
            .collect()
    }
}

/// Synthesize a whole corpus: each task's singles in table order, then the
/// chains drawn from the same task scope.
pub fn synth_corpus(
    distribution: &Distribution,
    seed: u64,
    bank: &TemplateBank,
) -> Result<Vec<InstructionRecord>, DatasetError> {
    let mut out = Vec::with_capacity(distribution.total());
    for &(bucket, n) in &distribution.entries {
        if let Bucket::Task(task) = bucket {
            out.extend(synth_single(task, n, seed, bank)?);
        }
    }
    let chains = distribution.count(Bucket::Chain);
    out.extend(synth_chain(chains, seed, bank, &distribution.tasks(), DEFAULT_CHAIN_RANGE)?);
    Ok(out)
}
