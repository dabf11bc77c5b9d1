//! Specialist registry: maps every routable task to a backend and invokes it.
//!
//! Backends come in three kinds. Stubs synthesize deterministic locators and
//! never touch media. Command backends run a local program. HTTP backends
//! POST a JSON document to a remote service.

use regex::Regex;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifact::{task_io, Artifact, Modality};
use crate::task::TaskKind;
use crate::transport::{HttpTransport, Transport};

const SHIPPED_CONFIG: &str = include_str!("../assets/registry.toml");
const DEFAULT_TIMEOUT_MS: u64 = 60_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum BackendKind {
    Stub {
        #[serde(default)]
        latency_ms: u64,
        #[serde(default, rename = "seed")]
        deterministic_seed: u64,
    },
    Command {
        argv: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_ms: u64,
    },
    Http {
        endpoint: String,
        #[serde(default = "default_timeout")]
        timeout_ms: u64,
    },
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_MS
}

impl BackendKind {
    fn label(&self) -> &'static str {
        match self {
            BackendKind::Stub { .. } => "stub",
            BackendKind::Command { .. } => "command",
            BackendKind::Http { .. } => "http",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecialistSpec {
    pub task: TaskKind,
    pub backend: BackendKind,
    /// Documentation name of the model serving this task.
    pub name: String,
    pub input_modalities: BTreeSet<Modality>,
    pub output_modality: Modality,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    #[serde(default)]
    allow_partial: bool,
    #[serde(default)]
    specialist: Vec<ConfigEntry>,
}

#[derive(Debug, Deserialize)]
struct ConfigEntry {
    token: String,
    #[serde(default)]
    model: Option<String>,
    #[serde(flatten)]
    backend: BackendKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("cannot read registry config: {0}")]
    Parse(String),
    #[error("registry is missing tasks: {}", join_tasks(.0))]
    MissingTask(Vec<TaskKind>),
    #[error("registry lists tasks more than once: {}", join_tasks(.0))]
    DuplicateTask(Vec<TaskKind>),
    #[error("bad backend: {0}")]
    BadBackend(String),
    #[error("invalid registry config: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<RegistryError>),
}

fn join_tasks(tasks: &[TaskKind]) -> String {
    tasks.iter().map(|t| t.token_name()).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvokeError {
    #[error("no specialist registered for `{0}`")]
    UnresolvedTask(TaskKind),
    #[error("`{task}` needs a {missing} input")]
    ModalityMismatch { task: TaskKind, missing: Modality },
    #[error("backend for `{task}` failed: {detail}")]
    BackendFailure {
        task: TaskKind,
        detail: String,
        exit_code: Option<i32>,
        http_status: Option<u16>,
    },
}

impl InvokeError {
    fn failure(task: TaskKind, detail: impl Into<String>) -> Self {
        InvokeError::BackendFailure { task, detail: detail.into(), exit_code: None, http_status: None }
    }
}

/// Wire form of an artifact for command and HTTP backends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireArtifact {
    pub modality: Modality,
    pub locator: String,
}

/// Body POSTed to an HTTP specialist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialistRequest {
    pub task: String,
    pub prompt: String,
    pub inputs: Vec<WireArtifact>,
}

/// Body returned by an HTTP specialist (and printed by command backends).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialistResponse {
    pub outputs: Vec<WireArtifact>,
}

/// Immutable task → specialist map.
#[derive(Clone)]
pub struct Registry {
    specs: BTreeMap<TaskKind, SpecialistSpec>,
    transport: Arc<dyn Transport>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry").field("specs", &self.specs).finish_non_exhaustive()
    }
}

impl Registry {
    /// The shipped configuration: stubs for all 30 tasks.
    pub fn shipped() -> Registry {
        Registry::from_toml(SHIPPED_CONFIG).expect("shipped registry config is valid")
    }

    pub fn shipped_config() -> &'static str {
        SHIPPED_CONFIG
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Registry, RegistryError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| RegistryError::Parse(format!("{}: {e}", path.as_ref().display())))?;
        Registry::from_toml(&text)
    }

    /// Load and validate a TOML registry document.
    ///
    /// All problems are collected before returning: every missing task,
    /// every duplicate, and every malformed backend.
    pub fn from_toml(text: &str) -> Result<Registry, RegistryError> {
        let doc: ConfigDoc = toml::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;

        let mut bad = Vec::new();
        let mut duplicate = BTreeSet::new();
        let mut specs = BTreeMap::new();
        for entry in doc.specialist {
            let Some(task) = TaskKind::from_token_name(&entry.token) else {
                bad.push(format!("unknown task token `{}`", entry.token));
                continue;
            };
            if let Err(detail) = validate_backend(&entry.backend) {
                bad.push(format!("{}: {detail}", entry.token));
                continue;
            }
            let io = task_io(task);
            let spec = SpecialistSpec {
                task,
                name: entry.model.unwrap_or_else(|| entry.backend.label().to_string()),
                backend: entry.backend,
                input_modalities: io.inputs.iter().copied().collect(),
                output_modality: io.output,
            };
            if specs.insert(task, spec).is_some() {
                duplicate.insert(task);
            }
        }

        let mut errors = Vec::new();
        if !bad.is_empty() {
            errors.push(RegistryError::BadBackend(bad.join("; ")));
        }
        if !duplicate.is_empty() {
            errors.push(RegistryError::DuplicateTask(duplicate.into_iter().collect()));
        }
        if !doc.allow_partial {
            let missing: Vec<_> = TaskKind::all().filter(|t| !specs.contains_key(t)).collect();
            if !missing.is_empty() {
                errors.push(RegistryError::MissingTask(missing));
            }
        }
        match errors.len() {
            0 => Ok(Registry { specs, transport: Arc::new(HttpTransport) }),
            1 => Err(errors.pop().unwrap()),
            _ => Err(RegistryError::Invalid(errors)),
        }
    }

    /// Replace the HTTP transport (used for tests and custom clients).
    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Registry {
        self.transport = transport;
        self
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn spec(&self, task: TaskKind) -> Option<&SpecialistSpec> {
        self.specs.get(&task)
    }

    pub fn specs(&self) -> impl Iterator<Item = &SpecialistSpec> {
        self.specs.values()
    }

    /// Run the specialist for `task`.
    ///
    /// `timeout` overrides the backend's own timeout when it is shorter.
    pub fn invoke(
        &self,
        task: TaskKind,
        prompt: &str,
        inputs: &[Artifact],
        timeout: Option<Duration>,
    ) -> Result<Vec<Artifact>, InvokeError> {
        let spec = self.specs.get(&task).ok_or(InvokeError::UnresolvedTask(task))?;
        if let Some(&missing) = spec.input_modalities.iter().find(|m| !inputs.iter().any(|a| a.modality == **m)) {
            return Err(InvokeError::ModalityMismatch { task, missing });
        }
        let limit = |ms: u64| {
            let own = Duration::from_millis(ms);
            timeout.map_or(own, |t| t.min(own))
        };

        let outputs = match &spec.backend {
            BackendKind::Stub { latency_ms, deterministic_seed } => {
                if *latency_ms > 0 {
                    std::thread::sleep(Duration::from_millis(*latency_ms));
                }
                vec![Artifact::new(spec.output_modality, stub_locator(task, prompt, *deterministic_seed))]
            }
            BackendKind::Command { argv, timeout_ms } => run_command(task, argv, prompt, inputs, limit(*timeout_ms))?,
            BackendKind::Http { endpoint, timeout_ms } => {
                self.call_http(task, endpoint, prompt, inputs, limit(*timeout_ms))?
            }
        };

        match outputs.first() {
            None => Err(InvokeError::failure(task, "backend returned no outputs")),
            Some(first) if first.modality != spec.output_modality => Err(InvokeError::failure(
                task,
                format!("first output is {}, expected {}", first.modality, spec.output_modality),
            )),
            Some(_) => Ok(outputs),
        }
    }

    fn call_http(
        &self,
        task: TaskKind,
        endpoint: &str,
        prompt: &str,
        inputs: &[Artifact],
        timeout: Duration,
    ) -> Result<Vec<Artifact>, InvokeError> {
        let body = serde_json::to_string(&SpecialistRequest {
            task: task.token_name().to_string(),
            prompt: prompt.to_string(),
            inputs: inputs.iter().map(to_wire).collect(),
        })
        .expect("request serializes");
        let resp = self
            .transport
            .post_json(endpoint, &body, &[], timeout)
            .map_err(|e| InvokeError::failure(task, e.to_string()))?;
        if resp.status != 200 {
            return Err(InvokeError::BackendFailure {
                task,
                detail: format!("HTTP {}: {}", resp.status, truncate(&resp.body, 200)),
                exit_code: None,
                http_status: Some(resp.status),
            });
        }
        decode_outputs(task, &resp.body)
    }
}

fn to_wire(a: &Artifact) -> WireArtifact {
    WireArtifact { modality: a.modality, locator: a.locator.clone() }
}

fn decode_outputs(task: TaskKind, body: &str) -> Result<Vec<Artifact>, InvokeError> {
    let resp: SpecialistResponse = serde_json::from_str(body)
        .map_err(|e| InvokeError::failure(task, format!("malformed specialist response: {e}")))?;
    if let Some(empty) = resp.outputs.iter().find(|o| o.locator.is_empty()) {
        return Err(InvokeError::failure(task, format!("empty {} locator", empty.modality)));
    }
    Ok(resp.outputs.into_iter().map(|o| Artifact::new(o.modality, o.locator)).collect())
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Deterministic stub locator: `stub://<token>/<16 hex digits>`.
pub fn stub_locator(task: TaskKind, prompt: &str, seed: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(task.token_name().as_bytes());
    hasher.update([0]);
    hasher.update(prompt.as_bytes());
    hasher.update([0]);
    hasher.update(seed.to_le_bytes());
    let digest = hasher.finalize();
    format!("stub://{}/{}", task.token_name(), hex::encode(&digest[..8]))
}

const PLACEHOLDERS: [&str; 2] = ["{prompt}", "{inputs}"];

fn validate_backend(backend: &BackendKind) -> Result<(), String> {
    match backend {
        BackendKind::Stub { .. } => Ok(()),
        BackendKind::Command { argv, timeout_ms } => {
            if argv.is_empty() || argv[0].is_empty() {
                return Err("command argv is empty".into());
            }
            if *timeout_ms == 0 {
                return Err("timeout_ms must be positive".into());
            }
            let placeholder = Regex::new(r"\{[a-z_]+\}").expect("placeholder pattern compiles");
            for arg in argv {
                if let Some(m) = placeholder.find_iter(arg).find(|m| !PLACEHOLDERS.contains(&m.as_str())) {
                    return Err(format!("unsupported placeholder `{}` in `{arg}`", m.as_str()));
                }
            }
            if argv.iter().any(|a| a.contains("{inputs}") && a != "{inputs}") {
                return Err("`{inputs}` must be a whole argument".into());
            }
            Ok(())
        }
        BackendKind::Http { endpoint, timeout_ms } => {
            if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
                return Err(format!("endpoint `{endpoint}` is not an http(s) URL"));
            }
            if *timeout_ms == 0 {
                return Err("timeout_ms must be positive".into());
            }
            Ok(())
        }
    }
}

/// Expand `{prompt}` in place and `{inputs}` into one argument per input locator.
fn expand_argv(argv: &[String], prompt: &str, inputs: &[Artifact]) -> Vec<String> {
    let mut out = Vec::with_capacity(argv.len() + inputs.len());
    for arg in argv {
        if arg == "{inputs}" {
            out.extend(inputs.iter().map(|a| a.locator.clone()));
        } else {
            out.push(arg.replace("{prompt}", prompt));
        }
    }
    out
}

fn run_command(
    task: TaskKind,
    argv: &[String],
    prompt: &str,
    inputs: &[Artifact],
    timeout: Duration,
) -> Result<Vec<Artifact>, InvokeError> {
    let args = expand_argv(argv, prompt, inputs);
    let mut child = Command::new(&args[0])
        .args(&args[1..])
        .env("TASKROUTE_TASK", task.token_name())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| InvokeError::failure(task, format!("cannot spawn `{}`: {e}", args[0])))?;

    // Drain both pipes on threads so a chatty child cannot block on a full pipe.
    let mut stdout = child.stdout.take().expect("stdout is piped");
    let reader = std::thread::spawn(move || {
        let mut buf = String::new();
        stdout.read_to_string(&mut buf).map(|_| buf)
    });
    let mut stderr = child.stderr.take().expect("stderr is piped");
    let err_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    });

    let started = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if started.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(InvokeError::failure(task, format!("timed out after {} ms", timeout.as_millis())));
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(InvokeError::failure(task, e.to_string())),
        }
    };
    let output = reader
        .join()
        .map_err(|_| InvokeError::failure(task, "stdout reader panicked"))?
        .map_err(|e| InvokeError::failure(task, e.to_string()))?;

    let stderr = err_reader.join().unwrap_or_default();
    if !status.success() {
        let tail: String = {
            let trimmed = stderr.trim();
            let skip = trimmed.chars().count().saturating_sub(200);
            trimmed.chars().skip(skip).collect()
        };
        let detail = if tail.is_empty() {
            format!("command exited with {status}")
        } else {
            format!("command exited with {status}: {tail}")
        };
        return Err(InvokeError::BackendFailure {
            task,
            detail,
            exit_code: status.code(),
            http_status: None,
        });
    }
    decode_outputs(task, &output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{Condition, Family};

    #[test]
    fn shipped_registry_covers_every_task() {
        let reg = Registry::shipped();
        assert_eq!(reg.len(), 30);
        for task in TaskKind::all() {
            let spec = reg.spec(task).unwrap();
            assert_eq!(spec.output_modality, task_io(task).output);
            assert!(matches!(spec.backend, BackendKind::Stub { .. }));
        }
        assert_eq!(reg.spec(TaskKind::plain(Family::DepthEst)).unwrap().name, "Depth Anything V2");
    }

    #[test]
    fn missing_task_is_reported() {
        let text = Registry::shipped_config().replace("token = \"video_edit\"", "token = \"image_gen\"");
        let err = Registry::from_toml(&text).unwrap_err();
        match err {
            RegistryError::Invalid(errs) => {
                assert!(errs.contains(&RegistryError::MissingTask(vec![TaskKind::plain(Family::VideoEdit)])));
                assert!(errs.contains(&RegistryError::DuplicateTask(vec![TaskKind::plain(Family::ImageGen)])));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn omission_lists_all_missing() {
        let text = "[[specialist]]\ntoken = \"image_gen\"\nbackend = \"stub\"\n";
        match Registry::from_toml(text).unwrap_err() {
            RegistryError::MissingTask(missing) => assert_eq!(missing.len(), 29),
            other => panic!("unexpected {other:?}"),
        }
        let partial = format!("allow_partial = true\n{text}");
        assert_eq!(Registry::from_toml(&partial).unwrap().len(), 1);
    }

    #[test]
    fn bad_backends_are_rejected() {
        let cases = [
            "backend = \"command\"\nargv = []",
            "backend = \"command\"\nargv = [\"run\", \"{output}\"]",
            "backend = \"command\"\nargv = [\"run\", \"x{inputs}\"]",
            "backend = \"http\"\nendpoint = \"ftp://x\"",
            "backend = \"http\"\nendpoint = \"http://x\"\ntimeout_ms = 0",
        ];
        for case in cases {
            let text = format!("allow_partial = true\n[[specialist]]\ntoken = \"image_gen\"\n{case}\n");
            assert!(matches!(Registry::from_toml(&text), Err(RegistryError::BadBackend(_))), "{case}");
        }
        let text = "allow_partial = true\n[[specialist]]\ntoken = \"image_generation\"\nbackend = \"stub\"\n";
        assert!(matches!(Registry::from_toml(text), Err(RegistryError::BadBackend(_))));
        let text = "allow_partial = true\n[[specialist]]\ntoken = \"image_gen\"\nbackend = \"grpc\"\n";
        assert!(matches!(Registry::from_toml(text), Err(RegistryError::Parse(_))));
    }

    #[test]
    fn stub_invocation_is_deterministic() {
        let reg = Registry::shipped();
        let task = TaskKind::plain(Family::ImageGen);
        let a = reg.invoke(task, "a majestic castle", &[], None).unwrap();
        let b = reg.invoke(task, "a majestic castle", &[], None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].modality, Modality::Image);
        assert!(a[0].locator.starts_with("stub://image_gen/"));
        assert_eq!(a[0].locator.len(), "stub://image_gen/".len() + 16);
        assert_ne!(stub_locator(task, "a majestic castle", 1), a[0].locator);
        assert_ne!(stub_locator(task, "a castle", 0), a[0].locator);
    }

    #[test]
    fn wrong_input_modality() {
        let reg = Registry::shipped();
        let err = reg
            .invoke(
                TaskKind::plain(Family::ImageEdit),
                "adding green trees",
                &[Artifact::new(Modality::Video, "clip.mp4")],
                None,
            )
            .unwrap_err();
        assert_eq!(
            err,
            InvokeError::ModalityMismatch { task: TaskKind::plain(Family::ImageEdit), missing: Modality::Image }
        );
        let ok = reg.invoke(
            TaskKind::controllable_video(Condition::Depth),
            "a dancer",
            &[Artifact::new(Modality::Map, "depth.png")],
            None,
        );
        assert_eq!(ok.unwrap()[0].modality, Modality::Video);
    }

    #[test]
    fn unresolved_task_in_partial_registry() {
        let reg = Registry::from_toml("allow_partial = true\n").unwrap();
        assert_eq!(
            reg.invoke(TaskKind::plain(Family::ImageGen), "x", &[], None),
            Err(InvokeError::UnresolvedTask(TaskKind::plain(Family::ImageGen)))
        );
    }

    #[test]
    fn argv_expansion() {
        let argv: Vec<String> = ["gen", "--prompt={prompt}", "{inputs}", "--fast"].map(String::from).into();
        let inputs = [Artifact::new(Modality::Image, "a.png"), Artifact::new(Modality::Map, "b.png")];
        assert_eq!(expand_argv(&argv, "a cat", &inputs), ["gen", "--prompt=a cat", "a.png", "b.png", "--fast"]);
    }

    #[cfg(unix)]
    #[test]
    fn command_backend_round_trip() {
        let script = r#"printf '{"outputs":[{"modality":"image","locator":"file:///tmp/%s.png"}]}' "$TASKROUTE_TASK""#;
        let text = format!(
            "allow_partial = true\n[[specialist]]\ntoken = \"image_sr\"\nbackend = \"command\"\nargv = [\"sh\", \"-c\", {script:?}, \"sh\", \"{{prompt}}\", \"{{inputs}}\"]\n"
        );
        let reg = Registry::from_toml(&text).unwrap();
        let out = reg
            .invoke(TaskKind::plain(Family::ImageSR), "x4", &[Artifact::new(Modality::Image, "in.png")], None)
            .unwrap();
        assert_eq!(out, vec![Artifact::new(Modality::Image, "file:///tmp/image_sr.png")]);
    }

    #[cfg(unix)]
    #[test]
    fn command_backend_failures() {
        let fail = "allow_partial = true\n[[specialist]]\ntoken = \"image_gen\"\nbackend = \"command\"\nargv = [\"sh\", \"-c\", \"exit 7\"]\n";
        let reg = Registry::from_toml(fail).unwrap();
        match reg.invoke(TaskKind::plain(Family::ImageGen), "x", &[], None).unwrap_err() {
            InvokeError::BackendFailure { exit_code, .. } => assert_eq!(exit_code, Some(7)),
            other => panic!("unexpected {other:?}"),
        }
        let slow = "allow_partial = true\n[[specialist]]\ntoken = \"image_gen\"\nbackend = \"command\"\nargv = [\"sleep\", \"5\"]\ntimeout_ms = 100\n";
        let reg = Registry::from_toml(slow).unwrap();
        let started = Instant::now();
        let err = reg.invoke(TaskKind::plain(Family::ImageGen), "x", &[], None).unwrap_err();
        assert!(err.to_string().contains("timed out"));
        assert!(started.elapsed() < Duration::from_secs(3));
    }
}
