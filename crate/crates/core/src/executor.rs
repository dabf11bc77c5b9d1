//! Chain-of-action execution: bind artifacts between steps, run each step
//! against the registry in order, and aggregate a report.

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::artifact::{task_io, Artifact, Modality};
use crate::grammar::RoutedResponse;
use crate::registry::Registry;
use crate::task::TaskKind;

pub const DEFAULT_MAX_CHAIN_LENGTH: usize = 5;

/// Where a step input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactRef {
    UserAttachment(usize),
    StepOutput { step: usize, output: usize },
}

impl fmt::Display for ArtifactRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArtifactRef::UserAttachment(i) => write!(f, "attachment[{i}]"),
            ArtifactRef::StepOutput { step, output } => write!(f, "step[{step}].out[{output}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedStep {
    pub task: TaskKind,
    pub refined_prompt: String,
    pub input_bindings: Vec<ArtifactRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlannedStep>,
    pub attachments: Vec<Artifact>,
    /// Plain text the controller emitted alongside the steps.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("response has no routing steps")]
    NoSteps,
    #[error("chain of {actual} steps exceeds the maximum of {max}")]
    ChainTooLong { actual: usize, max: usize },
    #[error("step {step} needs an input of modality {modality} but none is available")]
    UnsatisfiedInput { step: usize, modality: Modality },
}

/// Bind every step's required inputs.
///
/// Each required modality binds to the most recent earlier step whose output
/// has that modality; failing that, to the first user attachment of that
/// modality. Only the first output of a step is bindable, since that is the
/// only output whose modality is known before execution.
pub fn plan(response: &RoutedResponse, attachments: &[Artifact], max_chain_length: usize) -> Result<Plan, PlanError> {
    let steps: Vec<_> = response.steps().collect();
    if steps.is_empty() {
        return Err(PlanError::NoSteps);
    }
    if steps.len() > max_chain_length {
        return Err(PlanError::ChainTooLong { actual: steps.len(), max: max_chain_length });
    }

    let mut planned = Vec::with_capacity(steps.len());
    for (index, step) in steps.iter().enumerate() {
        let mut bindings = Vec::new();
        for &modality in task_io(step.task).inputs {
            let from_step = (0..index)
                .rev()
                .find(|&prev| task_io(steps[prev].task).output == modality)
                .map(|prev| ArtifactRef::StepOutput { step: prev, output: 0 });
            let binding = from_step
                .or_else(|| attachments.iter().position(|a| a.modality == modality).map(ArtifactRef::UserAttachment))
                .ok_or(PlanError::UnsatisfiedInput { step: index, modality })?;
            bindings.push(binding);
        }
        planned.push(PlannedStep { task: step.task, refined_prompt: step.refined_prompt.clone(), input_bindings: bindings });
    }
    Ok(Plan { steps: planned, attachments: attachments.to_vec(), text: response.plain_text() })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOptions {
    pub continue_on_error: bool,
    pub step_timeout: Option<Duration>,
    /// Surface every step's outputs in `final_artifacts`, not just the last.
    pub surface_intermediate: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions { continue_on_error: false, step_timeout: None, surface_intermediate: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub index: usize,
    pub task: TaskKind,
    pub model: String,
    pub prompt: String,
    pub status: StepStatus,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub steps: Vec<StepReport>,
    pub final_artifacts: Vec<Artifact>,
    pub final_text: String,
}

impl RunReport {
    pub fn succeeded(&self) -> bool {
        self.steps.iter().all(|s| s.status == StepStatus::Ok)
    }

    pub fn has_failures(&self) -> bool {
        self.steps.iter().any(|s| s.status == StepStatus::Failed)
    }

    /// Copy with all durations zeroed, for comparing runs.
    pub fn without_timings(&self) -> RunReport {
        let mut copy = self.clone();
        for step in &mut copy.steps {
            step.duration_ms = 0;
        }
        copy
    }

    /// Line-delimited form: one `step` record per step, then one `final` record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            let line = LogLine::Step(step.clone());
            out.push_str(&serde_json::to_string(&line).expect("report serializes"));
            out.push('\n');
        }
        let last = LogLine::Final { final_artifacts: self.final_artifacts.clone(), final_text: self.final_text.clone() };
        out.push_str(&serde_json::to_string(&last).expect("report serializes"));
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<RunReport, String> {
        let mut steps = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            match serde_json::from_str::<LogLine>(line).map_err(|e| format!("line {}: {e}", n + 1))? {
                LogLine::Step(step) => steps.push(step),
                LogLine::Final { final_artifacts, final_text } => {
                    return Ok(RunReport { steps, final_artifacts, final_text });
                }
            }
        }
        Err("missing final record".into())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum LogLine {
    Step(StepReport),
    Final { final_artifacts: Vec<Artifact>, final_text: String },
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for step in &self.steps {
            let status = match step.status {
                StepStatus::Ok => "ok",
                StepStatus::Failed => "FAILED",
                StepStatus::Skipped => "skipped",
            };
            writeln!(f, "[{}] {} ({}) {:>7} {:>5} ms  {:?}", step.index, step.task.token_name(), step.model, status, step.duration_ms, step.prompt)?;
            for a in &step.outputs {
                writeln!(f, "      -> {a}")?;
            }
            if let Some(err) = &step.error {
                writeln!(f, "      !! {err}")?;
            }
        }
        write!(f, "{}", self.final_text)
    }
}

fn resolve(plan: &Plan, outputs: &[Option<Vec<Artifact>>], binding: ArtifactRef) -> Option<Artifact> {
    match binding {
        ArtifactRef::UserAttachment(i) => plan.attachments.get(i).cloned(),
        ArtifactRef::StepOutput { step, output } => outputs.get(step)?.as_ref()?.get(output).cloned(),
    }
}

/// Run a plan step by step.
///
/// Backend failures become `Failed` steps; the report is always returned.
/// After a failure the remaining steps are skipped unless
/// `continue_on_error` is set, in which case only steps whose inputs are
/// missing are skipped.
pub fn execute(plan: &Plan, registry: &Registry, options: &ExecOptions) -> RunReport {
    let mut reports = Vec::with_capacity(plan.steps.len());
    let mut outputs: Vec<Option<Vec<Artifact>>> = Vec::with_capacity(plan.steps.len());
    let mut halted = false;

    for (index, step) in plan.steps.iter().enumerate() {
        let model = registry.spec(step.task).map(|s| s.name.clone()).unwrap_or_default();
        let mut report = StepReport {
            index,
            task: step.task,
            model,
            prompt: step.refined_prompt.clone(),
            status: StepStatus::Skipped,
            inputs: Vec::new(),
            outputs: Vec::new(),
            error: None,
            duration_ms: 0,
        };
        let inputs: Option<Vec<Artifact>> =
            step.input_bindings.iter().map(|b| resolve(plan, &outputs, *b)).collect();

        match (halted, inputs) {
            (true, _) => report.error = Some("skipped after earlier failure".into()),
            (false, None) => report.error = Some("input from a failed step is unavailable".into()),
            (false, Some(inputs)) => {
                let started = Instant::now();
                let result = registry.invoke(step.task, &step.refined_prompt, &inputs, options.step_timeout);
                report.duration_ms = started.elapsed().as_millis() as u64;
                report.inputs = inputs;
                match result {
                    Ok(arts) => {
                        report.status = StepStatus::Ok;
                        report.outputs = arts.into_iter().map(|a| a.produced_by(index, step.task)).collect();
                    }
                    Err(err) => {
                        report.status = StepStatus::Failed;
                        report.error = Some(err.to_string());
                        halted = !options.continue_on_error;
                    }
                }
            }
        }
        outputs.push((report.status == StepStatus::Ok).then(|| report.outputs.clone()));
        reports.push(report);
    }

    let final_artifacts: Vec<Artifact> = if options.surface_intermediate {
        reports.iter().flat_map(|r| r.outputs.iter().cloned()).collect()
    } else {
        reports.iter().rev().find(|r| r.status == StepStatus::Ok).map(|r| r.outputs.clone()).unwrap_or_default()
    };

    let mut final_text = plan.text.trim().to_string();
    for a in &final_artifacts {
        if !final_text.is_empty() {
            final_text.push('\n');
        }
        final_text.push_str(&format!("{} artifact: {}", a.modality, a.locator));
    }
    let failed = reports.iter().filter(|r| r.status == StepStatus::Failed).count();
    if failed > 0 {
        if !final_text.is_empty() {
            final_text.push('\n');
        }
        final_text.push_str(&format!("{failed} of {} steps failed", reports.len()));
    }

    RunReport { steps: reports, final_artifacts, final_text }
}
