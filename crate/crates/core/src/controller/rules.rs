use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::Deserialize;

use super::{check_chain, Controller, ControllerError, ControllerRequest};
use crate::executor::DEFAULT_MAX_CHAIN_LENGTH;
use crate::grammar::{find_known_tag, RoutedResponse, RoutingStep};
use crate::task::TaskKind;

const SHIPPED_RULES: &str = include_str!("../../assets/rules.toml");

/// Determiners left dangling at the end of a span once a keyword is cut away.
const DANGLING: [&str; 6] = ["the", "a", "an", "this", "that", "its"];

/// How a rule pulls the refined prompt out of its clause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extractor {
    /// A quoted span if the clause has one, otherwise the longest free span.
    #[default]
    QuotedOrFreeText,
    /// The longest run of text between or after the matched keywords, with
    /// filler words trimmed from both ends.
    FreeText,
    WholeClause,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Keyword {
    text: String,
    words: Vec<String>,
}

impl Keyword {
    fn new(text: &str) -> Option<Keyword> {
        let words: Vec<String> = words(text).into_iter().map(|w| w.text).collect();
        (!words.is_empty()).then(|| Keyword { text: words.join(" "), words })
    }

    fn len(&self) -> usize {
        self.text.chars().count()
    }

    /// Byte range of the first occurrence in `clause`.
    fn find(&self, clause: &Clause) -> Option<(usize, usize)> {
        let n = self.words.len();
        clause.starts.get(self.words[0].as_str())?.iter().find_map(|&i| {
            let window = clause.words.get(i..i + n)?;
            window.iter().zip(&self.words).all(|(a, b)| a.text == *b).then(|| (window[0].start, window[n - 1].end))
        })
    }
}

/// A keyword matcher bound to a task.
///
/// Every group must contribute at least one keyword for the rule to fire.
/// The score is the summed length of the longest keyword found in each group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub task: TaskKind,
    groups: Vec<Vec<Keyword>>,
    pub extract: Extractor,
}

struct RuleMatch {
    score: usize,
    /// Byte range of the keyword chosen from each group.
    spans: Vec<(usize, usize)>,
}

impl Rule {
    pub fn new(task: TaskKind, groups: &[&[&str]], extract: Extractor) -> Result<Rule, RuleError> {
        let groups = groups.iter().map(|g| g.iter().map(|s| s.to_string()).collect()).collect();
        Rule::from_strings(task, groups, extract)
    }

    fn from_strings(task: TaskKind, groups: Vec<Vec<String>>, extract: Extractor) -> Result<Rule, RuleError> {
        if groups.is_empty() {
            return Err(RuleError::Empty(format!("rule for `{task}` has no keyword groups")));
        }
        let mut parsed = Vec::with_capacity(groups.len());
        for group in groups {
            let keywords: Vec<Keyword> = group.iter().filter_map(|k| Keyword::new(k)).collect();
            if keywords.is_empty() || keywords.len() != group.len() {
                return Err(RuleError::Empty(format!("rule for `{task}` has an empty keyword")));
            }
            parsed.push(keywords);
        }
        Ok(Rule { task, groups: parsed, extract })
    }

    fn matches(&self, clause: &Clause) -> Option<RuleMatch> {
        let mut score = 0;
        let mut spans = Vec::with_capacity(self.groups.len());
        for group in &self.groups {
            let (len, span) = group
                .iter()
                .filter_map(|k| k.find(clause).map(|span| (k.len(), span)))
                .fold(None, |best: Option<(usize, (usize, usize))>, cur| match best {
                    Some(b) if b.0 >= cur.0 => Some(b),
                    _ => Some(cur),
                })?;
            score += len;
            spans.push(span);
        }
        Some(RuleMatch { score, spans })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("cannot read rule set: {0}")]
    Parse(String),
    #[error("{0}")]
    Empty(String),
    #[error("no rule covers: {}", .0.iter().map(|t| t.token_name()).collect::<Vec<_>>().join(", "))]
    Uncovered(Vec<TaskKind>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesDoc {
    #[serde(default)]
    separators: Vec<String>,
    #[serde(default)]
    fillers: Vec<String>,
    rule: Vec<RawRule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    task: TaskKind,
    all: Vec<Vec<String>>,
    #[serde(default)]
    extract: Extractor,
}

/// Ordered rules plus the clause separators and filler words used for
/// prompt extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    /// Sentence-initial connectives that start a new chain step.
    pub separators: Vec<String>,
    /// Words stripped from the front of an extracted prompt, longest first.
    pub fillers: Vec<String>,
}

impl RuleSet {
    /// The shipped rule set; covers every routable task.
    pub fn shipped() -> RuleSet {
        RuleSet::from_toml(SHIPPED_RULES).expect("shipped rule set is valid")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<RuleSet, RuleError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| RuleError::Parse(format!("{}: {e}", path.as_ref().display())))?;
        RuleSet::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<RuleSet, RuleError> {
        let doc: RulesDoc = toml::from_str(text).map_err(|e| RuleError::Parse(e.to_string()))?;
        let rules = doc
            .rule
            .into_iter()
            .map(|r| Rule::from_strings(r.task, r.all, r.extract))
            .collect::<Result<Vec<_>, _>>()?;
        let set = RuleSet::new(rules, doc.separators, doc.fillers);
        let covered: BTreeSet<_> = set.rules.iter().map(|r| r.task).collect();
        let uncovered: Vec<_> = TaskKind::all().filter(|t| !covered.contains(t)).collect();
        if !uncovered.is_empty() {
            return Err(RuleError::Uncovered(uncovered));
        }
        Ok(set)
    }

    pub fn new(rules: Vec<Rule>, separators: Vec<String>, mut fillers: Vec<String>) -> RuleSet {
        fillers.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        RuleSet { rules, separators, fillers }
    }

    /// Copy with the trailing `fraction` of rules removed (rounded up).
    ///
    /// Used to build deliberately degraded routers; the result no longer
    /// covers every task.
    pub fn without_last_fraction(&self, fraction: f64) -> RuleSet {
        let drop = ((self.rules.len() as f64) * fraction.clamp(0.0, 1.0)).ceil() as usize;
        let mut copy = self.clone();
        copy.rules.truncate(self.rules.len() - drop);
        copy
    }

    /// Tasks that at least one rule can produce.
    pub fn covered_tasks(&self) -> BTreeSet<TaskKind> {
        self.rules.iter().map(|r| r.task).collect()
    }

    /// Split an instruction into clauses at sentence-initial separators.
    pub fn split_clauses<'a>(&self, text: &'a str) -> Vec<&'a str> {
        let mut clauses = Vec::new();
        let mut clause_start = 0;
        for start in sentence_starts(text).into_iter().skip(1) {
            if let Some(body) = self.strip_separator(&text[start..]) {
                clauses.push(&text[clause_start..start]);
                clause_start = text.len() - body.len();
            }
        }
        clauses.push(&text[clause_start..]);
        clauses.into_iter().map(str::trim).filter(|c| !c.is_empty()).collect()
    }

    fn strip_separator<'a>(&self, sentence: &'a str) -> Option<&'a str> {
        self.separators.iter().find_map(|sep| {
            let rest = strip_prefix_ci(sentence, sep)?;
            if rest.chars().next().is_some_and(|c| c.is_alphanumeric()) {
                return None;
            }
            Some(rest.trim_start_matches(|c: char| c == ',' || c == ':' || c.is_whitespace()))
        })
    }

    /// Best rule for a single clause: highest score, ties to the earlier rule.
    fn best_match(&self, clause: &Clause) -> Option<(&Rule, RuleMatch)> {
        let mut best: Option<(&Rule, RuleMatch)> = None;
        for rule in &self.rules {
            if let Some(m) = rule.matches(clause) {
                if best.as_ref().map_or(true, |(_, b)| m.score > b.score) {
                    best = Some((rule, m));
                }
            }
        }
        best
    }

    /// Route one clause to a step, if any rule fires.
    pub fn route_clause(&self, clause: &str) -> Option<RoutingStep> {
        let (rule, m) = self.best_match(&Clause::new(clause))?;
        let prompt = self.extract(clause, m.spans, rule.extract);
        Some(RoutingStep::new(rule.task, prompt))
    }

    fn extract(&self, clause: &str, spans: Vec<(usize, usize)>, extractor: Extractor) -> String {
        let prompt = match extractor {
            Extractor::QuotedOrFreeText => {
                quoted(clause).map(str::to_string).unwrap_or_else(|| self.free_text(clause, spans))
            }
            Extractor::FreeText => self.free_text(clause, spans),
            Extractor::WholeClause => first_sentence(clause.trim()).to_string(),
        };
        let prompt = if prompt.trim().is_empty() { first_sentence(clause.trim()).to_string() } else { prompt };
        sanitize(prompt)
    }

    /// Longest gap between matched keywords, or after the last one. The text
    /// before the first keyword is skipped since it holds the request framing.
    fn free_text(&self, clause: &str, mut spans: Vec<(usize, usize)>) -> String {
        spans.sort_unstable();
        let mut gaps = Vec::with_capacity(spans.len());
        let mut covered = spans.first().map_or(0, |s| s.1);
        for &(start, end) in spans.iter().skip(1) {
            if start > covered {
                gaps.push(self.trim_fillers(&clause[covered..start]));
            }
            covered = covered.max(end);
        }
        gaps.push(self.trim_fillers(first_sentence(&clause[covered..])));
        gaps.into_iter().fold("", |best, g| if g.chars().count() > best.chars().count() { g } else { best }).to_string()
    }

    fn trim_fillers<'a>(&self, mut text: &'a str) -> &'a str {
        let punct = |c: char| c.is_whitespace() || ",:;-\u{2013}\u{2014}".contains(c);
        loop {
            text = text.trim_start_matches(punct);
            let stripped = self.fillers.iter().find_map(|f| {
                let tail = strip_prefix_ci(text, f)?;
                (!tail.chars().next().is_some_and(|c| c.is_alphanumeric())).then_some(tail)
            });
            match stripped {
                Some(tail) if tail.len() < text.len() => text = tail,
                _ => break,
            }
        }
        loop {
            text = text.trim_end_matches(punct);
            let stripped = self.fillers.iter().map(String::as_str).chain(DANGLING).find_map(|f| {
                let head = strip_suffix_ci(text, f)?;
                (!head.chars().next_back().is_some_and(|c| c.is_alphanumeric())).then_some(head)
            });
            match stripped {
                Some(head) if head.len() < text.len() => text = head,
                _ => break,
            }
        }
        text
    }
}

fn strip_prefix_ci<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    let head = text.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &text[prefix.len()..])
}

fn strip_suffix_ci<'a>(text: &'a str, suffix: &str) -> Option<&'a str> {
    let cut = text.len().checked_sub(suffix.len())?;
    let tail = text.get(cut..)?;
    tail.eq_ignore_ascii_case(suffix).then(|| &text[..cut])
}

/// Text up to the first sentence terminator. A closing period is kept;
/// `?` and `!` are dropped.
fn first_sentence(text: &str) -> &str {
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '?' | '!') && chars.peek().map_or(true, |(_, n)| n.is_whitespace()) {
            let end = if c == '.' { i + 1 } else { i };
            return text[..end].trim_end_matches(|c: char| c.is_whitespace() || ",;:".contains(c));
        }
    }
    text.trim_end_matches(|c: char| c.is_whitespace() || ",;:".contains(c))
}

fn sentence_starts(text: &str) -> Vec<usize> {
    let mut starts = vec![0];
    let mut after_terminator = false;
    let mut in_gap = false;
    for (i, c) in text.char_indices() {
        if in_gap && !c.is_whitespace() {
            starts.push(i);
            in_gap = false;
            after_terminator = false;
        }
        if after_terminator && c.is_whitespace() {
            in_gap = true;
        }
        after_terminator = matches!(c, '.' | '?' | '!' | ';') || (after_terminator && !c.is_whitespace() && in_gap);
    }
    starts
}

fn quoted(text: &str) -> Option<&str> {
    static QUOTE: OnceLock<Regex> = OnceLock::new();
    let re = QUOTE.get_or_init(|| {
        Regex::new(r#"(?:^|[\s(:,])(?:'([^']+)'|"([^"]+)"|\u{201C}([^\u{201D}]+)\u{201D})(?:$|[\s.,;:!?)])"#)
            .expect("quote pattern compiles")
    });
    let caps = re.captures(text)?;
    (1..=3).find_map(|i| caps.get(i)).map(|m| m.as_str().trim()).filter(|s| !s.is_empty())
}

fn sanitize(prompt: String) -> String {
    if find_known_tag(&prompt).is_some() {
        prompt.replace(['<', '>'], "")
    } else {
        prompt
    }
}

#[derive(Debug, Clone)]
struct Word {
    text: String,
    start: usize,
    end: usize,
}

/// A clause's words indexed by text for keyword lookup.
struct Clause {
    words: Vec<Word>,
    starts: HashMap<String, Vec<usize>>,
}

impl Clause {
    fn new(text: &str) -> Clause {
        let words = words(text);
        let mut starts: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            starts.entry(w.text.clone()).or_default().push(i);
        }
        Clause { words, starts }
    }
}

/// Lowercased alphanumeric runs with their end offsets.
fn words(text: &str) -> Vec<Word> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if current.is_empty() {
                start = i;
            }
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            out.push(Word { text: std::mem::take(&mut current), start, end: i });
        }
    }
    if !current.is_empty() {
        out.push(Word { text: current, start, end: text.len() });
    }
    out
}

/// Deterministic keyword router standing in for a trained controller.
#[derive(Debug, Clone)]
pub struct RuleRouter {
    rules: RuleSet,
    /// Answer unmatched instructions as plain text instead of failing.
    pub direct_answer: bool,
    pub max_chain_length: usize,
}

impl RuleRouter {
    pub fn new(rules: RuleSet) -> RuleRouter {
        RuleRouter { rules, direct_answer: true, max_chain_length: DEFAULT_MAX_CHAIN_LENGTH }
    }

    pub fn shipped() -> RuleRouter {
        RuleRouter::new(RuleSet::shipped())
    }

    pub fn with_direct_answer(mut self, enabled: bool) -> RuleRouter {
        self.direct_answer = enabled;
        self
    }

    pub fn with_max_chain_length(mut self, max: usize) -> RuleRouter {
        self.max_chain_length = max;
        self
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }
}

impl Controller for RuleRouter {
    /// History is ignored; each instruction is routed on its own text.
    fn route(&self, request: &ControllerRequest) -> Result<RoutedResponse, ControllerError> {
        request.validate()?;
        let steps: Vec<_> =
            self.rules.split_clauses(&request.instruction).into_iter().filter_map(|c| self.rules.route_clause(c)).collect();
        if steps.is_empty() {
            return if self.direct_answer {
                Ok(RoutedResponse::text(sanitize(request.instruction.clone())))
            } else {
                Err(ControllerError::NoRoute)
            };
        }
        let resp = RoutedResponse::from_steps(steps);
        check_chain(&resp, self.max_chain_length)?;
        Ok(resp)
    }

    fn name(&self) -> &str {
        "rule"
    }
}
