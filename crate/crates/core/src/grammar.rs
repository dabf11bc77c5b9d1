//! Routing-token responses: parsing controller text into segments and
//! rendering segments back to text.
//!
//! Only tags whose name appears in the token table are structural. Any other
//! `<...>` sequence is ordinary text, so prose with angle brackets survives.

use serde::{Deserialize, Serialize};

use crate::task::{max_token_len, TaskKind};

/// A single routed step: which task handles it and the prompt it receives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingStep {
    pub task: TaskKind,
    pub refined_prompt: String,
}

impl RoutingStep {
    pub fn new(task: TaskKind, refined_prompt: impl Into<String>) -> Self {
        RoutingStep { task, refined_prompt: refined_prompt.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Segment {
    Text { text: String },
    Step(RoutingStep),
}

/// Ordered mix of plain text and routing steps.
///
/// Construction merges adjacent text and drops empty text, which keeps the
/// representation canonical: two responses that render identically compare
/// equal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Segment>", into = "Vec<Segment>")]
pub struct RoutedResponse {
    segments: Vec<Segment>,
}

impl From<Vec<Segment>> for RoutedResponse {
    fn from(segments: Vec<Segment>) -> Self {
        RoutedResponse::from_segments(segments)
    }
}

impl From<RoutedResponse> for Vec<Segment> {
    fn from(resp: RoutedResponse) -> Self {
        resp.segments
    }
}

impl RoutedResponse {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_segments(segments: impl IntoIterator<Item = Segment>) -> Self {
        let mut resp = Self::new();
        for seg in segments {
            match seg {
                Segment::Text { text } => resp.push_text(&text),
                Segment::Step(step) => resp.push_step(step),
            }
        }
        resp
    }

    pub fn from_steps(steps: impl IntoIterator<Item = RoutingStep>) -> Self {
        Self::from_segments(steps.into_iter().map(Segment::Step))
    }

    /// A direct answer with no routing.
    pub fn text(text: impl Into<String>) -> Self {
        let mut resp = Self::new();
        resp.push_text(&text.into());
        resp
    }

    pub fn push_text(&mut self, text: &str) {
        if text.is_empty() {
            return;
        }
        if let Some(Segment::Text { text: last }) = self.segments.last_mut() {
            last.push_str(text);
        } else {
            self.segments.push(Segment::Text { text: text.to_string() });
        }
    }

    pub fn push_step(&mut self, step: RoutingStep) {
        self.segments.push(Segment::Step(step));
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn steps(&self) -> impl Iterator<Item = &RoutingStep> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Step(step) => Some(step),
            Segment::Text { .. } => None,
        })
    }

    pub fn step_count(&self) -> usize {
        self.steps().count()
    }

    pub fn tasks(&self) -> Vec<TaskKind> {
        self.steps().map(|s| s.task).collect()
    }

    /// Concatenation of all plain-text segments.
    pub fn plain_text(&self) -> String {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Text { text } => Some(text.as_str()),
                Segment::Step(_) => None,
            })
            .collect()
    }

    pub fn is_direct_answer(&self) -> bool {
        self.step_count() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("unbalanced tag `{tag}` at byte {offset}")]
    UnbalancedTag { tag: String, offset: usize },
    #[error("tag `{inner}` nested inside `<{outer}>` at byte {offset}")]
    NestedTag { outer: String, inner: String, offset: usize },
    #[error("empty prompt in `<{tag}>` at byte {offset}")]
    EmptyStep { tag: String, offset: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("prompt for `{task}` embeds routing tag `{tag}`")]
    IllegalPrompt { task: TaskKind, tag: String },
    #[error("prompt for `{0}` is empty")]
    EmptyPrompt(TaskKind),
    #[error("plain text embeds routing tag `{0}`")]
    IllegalText(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Tag {
    task: TaskKind,
    closing: bool,
    /// Byte length of the whole tag including angle brackets.
    len: usize,
}

/// Recognize a known routing tag starting at `text[0]` (which must be `<`).
fn tag_at(text: &str) -> Option<Tag> {
    let bytes = text.as_bytes();
    debug_assert_eq!(bytes.first(), Some(&b'<'));
    let mut i = 1;
    let closing = bytes.get(1) == Some(&b'/');
    if closing {
        i += 1;
    }
    let name_start = i;
    while i < bytes.len() && i - name_start <= max_token_len() {
        match bytes[i] {
            b'>' => {
                let name = &text[name_start..i];
                return TaskKind::from_token_name(name).map(|task| Tag { task, closing, len: i + 1 });
            }
            b if b.is_ascii_alphanumeric() || b == b'_' => i += 1,
            _ => return None,
        }
    }
    None
}

/// First known routing tag inside `text`, as its literal string.
pub fn find_known_tag(text: &str) -> Option<String> {
    text.match_indices('<').find_map(|(at, _)| {
        tag_at(&text[at..]).map(|tag| text[at..at + tag.len].to_string())
    })
}

/// Parse controller output into a [`RoutedResponse`].
///
/// Every input byte lands in exactly one segment. Unknown tags are text.
pub fn parse_response(text: &str) -> Result<RoutedResponse, ParseError> {
    let mut resp = RoutedResponse::new();
    // (task, byte offset of the open tag, byte offset where the body starts)
    let mut open: Option<(TaskKind, usize, usize)> = None;
    let mut text_start = 0;
    let mut cursor = 0;

    while let Some(rel) = text[cursor..].find('<') {
        let at = cursor + rel;
        let Some(tag) = tag_at(&text[at..]) else {
            cursor = at + 1;
            continue;
        };
        match (open, tag.closing) {
            (None, false) => {
                resp.push_text(&text[text_start..at]);
                open = Some((tag.task, at, at + tag.len));
            }
            (None, true) => {
                return Err(ParseError::UnbalancedTag { tag: text[at..at + tag.len].to_string(), offset: at });
            }
            (Some((outer, _, _)), false) => {
                return Err(ParseError::NestedTag {
                    outer: outer.token_name().to_string(),
                    inner: text[at..at + tag.len].to_string(),
                    offset: at,
                });
            }
            (Some((task, open_at, body_start)), true) => {
                if task != tag.task {
                    return Err(ParseError::UnbalancedTag { tag: text[at..at + tag.len].to_string(), offset: at });
                }
                let body = &text[body_start..at];
                if body.is_empty() {
                    return Err(ParseError::EmptyStep { tag: task.token_name().to_string(), offset: open_at });
                }
                resp.push_step(RoutingStep::new(task, body));
                open = None;
            }
        }
        cursor = at + tag.len;
        text_start = cursor;
    }

    if let Some((task, open_at, _)) = open {
        return Err(ParseError::UnbalancedTag { tag: task.spec().open_tag(), offset: open_at });
    }
    resp.push_text(&text[text_start..]);
    Ok(resp)
}

/// Render a response back to controller text. Inverse of [`parse_response`].
pub fn render_response(resp: &RoutedResponse) -> Result<String, RenderError> {
    let mut out = String::new();
    for seg in resp.segments() {
        match seg {
            Segment::Text { text } => {
                if let Some(tag) = find_known_tag(text) {
                    return Err(RenderError::IllegalText(tag));
                }
                out.push_str(text);
            }
            Segment::Step(step) => {
                if step.refined_prompt.is_empty() {
                    return Err(RenderError::EmptyPrompt(step.task));
                }
                if let Some(tag) = find_known_tag(&step.refined_prompt) {
                    return Err(RenderError::IllegalPrompt { task: step.task, tag });
                }
                let spec = step.task.spec();
                out.push_str(&spec.open_tag());
                out.push_str(&step.refined_prompt);
                out.push_str(&spec.close_tag());
            }
        }
    }
    Ok(out)
}
