//! Command-line front end. `run_cli` takes its streams as arguments so the
//! binary stays a one-liner and tests can drive every command in-process.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::artifact::Artifact;
use crate::controller::{
    Controller, ControllerError, ControllerRequest, EndpointConfig, RemoteController, ReplayController, RuleRouter,
    RuleSet, Turn,
};
use crate::dataset::{
    build_llm_prompt, load_jsonl, stats, synth_corpus, to_jsonl, Distribution, InstructionRecord, PromptOptions, Split,
    TemplateBank,
};
use crate::eval::{evaluate, family_prefix_subsets, sweep, sweep_table, CorpusConfig};
use crate::executor::{execute, plan, ExecOptions, RunReport, DEFAULT_MAX_CHAIN_LENGTH};
use crate::grammar::render_response;
use crate::registry::{BackendKind, Registry};
use crate::task::{token_table, TaskKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONTROLLER: i32 = 2;
pub const EXIT_PIPELINE: i32 = 3;
pub const EXIT_DATA: i32 = 4;

/// Environment variable naming a config file.
pub const CONFIG_ENV: &str = "TASKROUTE_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Rule,
    Replay,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Instruct,
    Bench,
}

#[derive(Parser, Debug)]
#[command(name = "taskroute", version, about = "Route instructions to specialist models, run chains, build and score corpora")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Specialist registry TOML; defaults to the shipped stub registry.
    #[arg(long, global = true)]
    registry: Option<PathBuf>,
    /// Rule set TOML for the rule controller.
    #[arg(long, global = true)]
    rules: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    controller: Option<ControllerKind>,
    /// Corpus the replay controller answers from.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Remote controller URL.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    #[arg(long, global = true)]
    max_chain_length: Option<usize>,
    /// Fail instead of answering directly when no rule matches.
    #[arg(long, global = true)]
    no_direct_answer: bool,
    /// Emit machine-readable output.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the routed response for an instruction.
    Route {
        instruction: String,
        /// Also print the parsed step table.
        #[arg(long)]
        explain: bool,
    },
    /// Route, plan, and execute an instruction.
    Run {
        instruction: String,
        /// User artifact as modality=locator; repeatable.
        #[arg(long = "attach", value_name = "MODALITY=LOCATOR")]
        attachments: Vec<Artifact>,
        #[arg(long)]
        continue_on_error: bool,
        /// Report every step's outputs as final artifacts.
        #[arg(long)]
        all_outputs: bool,
        /// Per-step timeout in milliseconds.
        #[arg(long)]
        step_timeout_ms: Option<u64>,
    },
    /// Score a controller over a JSONL corpus.
    Eval {
        dataset: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Synthesize a corpus as JSONL.
    Synth {
        /// `all` or a comma-separated list of token names.
        #[arg(long, default_value = "all")]
        tasks: String,
        #[arg(long, default_value_t = 0.01)]
        scale: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = SplitArg::Instruct)]
        split: SplitArg,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Profile a JSONL corpus.
    Stats { dataset: PathBuf },
    /// List the routing tokens.
    Tokens,
    /// Print the generator prompt for one task.
    Prompt {
        task: String,
        #[arg(long)]
        no_prefixes: bool,
        #[arg(long)]
        no_phrases: bool,
        #[arg(long)]
        no_complexities: bool,
        #[arg(long)]
        no_examples: bool,
    },
    /// Evaluate the rule router on corpora restricted to growing task sets.
    Sweep {
        /// Family counts per row.
        #[arg(long, value_delimiter = ',', default_value = "5,10,15,20")]
        sizes: Vec<usize>,
        /// Drop this fraction of rules from the end of the rule set.
        #[arg(long, default_value_t = 0.0)]
        drop_rules: f64,
        #[arg(long, default_value_t = 0.01)]
        scale: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Read instructions line by line, routing and executing each.
    Repl {
        /// Allow command and http backends from --registry.
        #[arg(long)]
        allow_live_backends: bool,
    },
}

/// Settings read from a config file; flags take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub registry: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub controller: Option<ControllerKind>,
    pub dataset: Option<PathBuf>,
    pub max_chain_length: Option<usize>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub direct_answer: Option<bool>,
    pub endpoint: Option<EndpointConfig>,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

const DEFAULT_SEED: u64 = 7;

/// Fully resolved settings.
struct Settings {
    config: CliConfig,
    controller: ControllerKind,
    max_chain_length: usize,
    format: Format,
    direct_answer: bool,
    endpoint_url: Option<String>,
}

impl Settings {
    fn resolve(global: &GlobalArgs) -> Result<Settings, Failure> {
        let mut config = match &global.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", path.display())))?;
                toml::from_str::<CliConfig>(&text)
                    .map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", path.display())))?
            }
            None => CliConfig::default(),
        };
        if global.registry.is_some() {
            config.registry = global.registry.clone();
        }
        if global.rules.is_some() {
            config.rules = global.rules.clone();
        }
        if global.dataset.is_some() {
            config.dataset = global.dataset.clone();
        }
        let max_chain_length = global.max_chain_length.or(config.max_chain_length).unwrap_or(DEFAULT_MAX_CHAIN_LENGTH);
        if max_chain_length == 0 {
            return Err(fail(EXIT_USAGE, "--max-chain-length must be positive"));
        }
        Ok(Settings {
            controller: global.controller.or(config.controller).unwrap_or(ControllerKind::Rule),
            max_chain_length,
            format: if global.json { Format::Json } else { config.format.unwrap_or(Format::Text) },
            direct_answer: !global.no_direct_answer && config.direct_answer.unwrap_or(true),
            endpoint_url: global.endpoint.clone(),
            config,
        })
    }

    fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.config.seed).unwrap_or(DEFAULT_SEED)
    }

    fn registry(&self) -> Result<Registry, Failure> {
        match &self.config.registry {
            Some(path) => Registry::from_path(path).map_err(|e| fail(EXIT_DATA, format!("registry: {e}"))),
            None => Ok(Registry::shipped()),
        }
    }

    fn rule_set(&self) -> Result<RuleSet, Failure> {
        match &self.config.rules {
            Some(path) => RuleSet::from_path(path).map_err(|e| fail(EXIT_DATA, format!("rules: {e}"))),
            None => Ok(RuleSet::shipped()),
        }
    }

    fn controller(&self, corpus: Option<&[InstructionRecord]>) -> Result<Box<dyn Controller>, Failure> {
        match self.controller {
            ControllerKind::Rule => Ok(Box::new(
                RuleRouter::new(self.rule_set()?)
                    .with_direct_answer(self.direct_answer)
                    .with_max_chain_length(self.max_chain_length),
            )),
            ControllerKind::Replay => {
                let loaded;
                let records = match (corpus, &self.config.dataset) {
                    (Some(c), _) => c,
                    (None, Some(path)) => {
                        loaded = load_jsonl(path).map_err(|e| fail(EXIT_DATA, e.to_string()))?;
                        &loaded
                    }
                    (None, None) => return Err(fail(EXIT_USAGE, "the replay controller needs --dataset")),
                };
                Ok(Box::new(ReplayController::new(records)))
            }
            ControllerKind::Remote => {
                let mut endpoint = match (&self.endpoint_url, &self.config.endpoint) {
                    (Some(url), Some(cfg)) => EndpointConfig { url: url.clone(), ..cfg.clone() },
                    (Some(url), None) => EndpointConfig::new(url.clone()),
                    (None, Some(cfg)) => cfg.clone(),
                    (None, None) => return Err(fail(EXIT_USAGE, "the remote controller needs --endpoint")),
                };
                endpoint.max_chain_length = self.max_chain_length;
                Ok(Box::new(RemoteController::new(endpoint.with_env_credential())))
            }
        }
    }
}

/// Parse `args` (including the program name) and run the command.
/// Returns the process exit code.
pub fn run_cli<I, S>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let rendered = e.render().to_string();
            if informational {
                let _ = write!(stdout, "{rendered}");
                return EXIT_OK;
            }
            let _ = write!(stderr, "{rendered}");
            return EXIT_USAGE;
        }
    };
    match dispatch(cli, stdin, stdout) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn io_fail(e: std::io::Error) -> Failure {
    fail(EXIT_DATA, format!("write failed: {e}"))
}

fn controller_fail(e: ControllerError) -> Failure {
    fail(EXIT_CONTROLLER, e.to_string())
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes")
}

fn dispatch(cli: Cli, stdin: &mut dyn BufRead, out: &mut dyn Write) -> Result<i32, Failure> {
    let settings = Settings::resolve(&cli.global)?;
    match cli.command {
        Command::Route { instruction, explain } => cmd_route(&settings, &instruction, explain, out),
        Command::Run { instruction, attachments, continue_on_error, all_outputs, step_timeout_ms } => {
            let options = ExecOptions {
                continue_on_error,
                step_timeout: step_timeout_ms.map(std::time::Duration::from_millis),
                surface_intermediate: all_outputs,
            };
            cmd_run(&settings, &instruction, &attachments, &options, out)
        }
        Command::Eval { dataset, workers } => cmd_eval(&settings, &dataset, workers, out),
        Command::Synth { tasks, scale, seed, split, out: path } => {
            let split = match split {
                SplitArg::Instruct => Split::Instruct,
                SplitArg::Bench => Split::Bench,
            };
            cmd_synth(&tasks, scale, settings.seed(seed), split, path.as_deref(), out)
        }
        Command::Stats { dataset } => cmd_stats(&settings, &dataset, out),
        Command::Tokens => cmd_tokens(&settings, out),
        Command::Prompt { task, no_prefixes, no_phrases, no_complexities, no_examples } => {
            let task = TaskKind::from_token_name(&task).ok_or_else(|| fail(EXIT_USAGE, format!("unknown task `{task}`")))?;
            let options = PromptOptions {
                prefixes: !no_prefixes,
                phrases: !no_phrases,
                complexities: !no_complexities,
                examples: !no_examples,
            };
            let prompt = build_llm_prompt(task, &TemplateBank::shipped(), &options)
                .map_err(|e| fail(EXIT_DATA, e.to_string()))?;
            write!(out, "{prompt}").map_err(io_fail)?;
            Ok(EXIT_OK)
        }
        Command::Sweep { sizes, drop_rules, scale, seed } => {
            cmd_sweep(&settings, &sizes, drop_rules, scale, settings.seed(seed), out)
        }
        Command::Repl { allow_live_backends } => cmd_repl(&settings, allow_live_backends, stdin, out),
    }
}

fn cmd_route(settings: &Settings, instruction: &str, explain: bool, out: &mut dyn Write) -> Result<i32, Failure> {
    let controller = settings.controller(None)?;
    let resp = controller.route(&ControllerRequest::new(instruction)).map_err(controller_fail)?;
    let raw = render_response(&resp).map_err(|e| fail(EXIT_CONTROLLER, e.to_string()))?;
    if settings.format == Format::Json {
        let doc = serde_json::json!({ "raw": raw, "segments": resp.segments() });
        writeln!(out, "{}", to_json(&doc)).map_err(io_fail)?;
        return Ok(EXIT_OK);
    }
    writeln!(out, "{raw}").map_err(io_fail)?;
    if explain {
        writeln!(out, "{:<4} {:<18} prompt", "step", "task").map_err(io_fail)?;
        for (i, step) in resp.steps().enumerate() {
            writeln!(out, "{:<4} {:<18} {}", i, step.task.token_name(), step.refined_prompt).map_err(io_fail)?;
        }
        if resp.is_direct_answer() {
            writeln!(out, "(direct answer, no steps)").map_err(io_fail)?;
        }
    }
    Ok(EXIT_OK)
}

fn route_and_execute(
    settings: &Settings,
    controller: &dyn Controller,
    registry: &Registry,
    request: &ControllerRequest,
    options: &ExecOptions,
) -> Result<RunReport, Failure> {
    let resp = controller.route(request).map_err(controller_fail)?;
    if resp.is_direct_answer() {
        return Ok(RunReport { steps: Vec::new(), final_artifacts: Vec::new(), final_text: resp.plain_text() });
    }
    let plan = plan(&resp, &request.attachments, settings.max_chain_length).map_err(|e| fail(EXIT_PIPELINE, e.to_string()))?;
    Ok(execute(&plan, registry, options))
}

fn cmd_run(
    settings: &Settings,
    instruction: &str,
    attachments: &[Artifact],
    options: &ExecOptions,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    let controller = settings.controller(None)?;
    let registry = settings.registry()?;
    let request = ControllerRequest::new(instruction).with_attachments(attachments.to_vec());
    let report = route_and_execute(settings, controller.as_ref(), &registry, &request, options)?;
    match settings.format {
        Format::Json => write!(out, "{}", report.to_jsonl()),
        Format::Text => writeln!(out, "{report}"),
    }
    .map_err(io_fail)?;
    if report.has_failures() && !options.continue_on_error {
        return Ok(EXIT_PIPELINE);
    }
    Ok(EXIT_OK)
}

fn load(path: &Path) -> Result<Vec<InstructionRecord>, Failure> {
    load_jsonl(path).map_err(|e| fail(EXIT_DATA, e.to_string()))
}

fn cmd_eval(settings: &Settings, dataset: &Path, workers: usize, out: &mut dyn Write) -> Result<i32, Failure> {
    let records = load(dataset)?;
    let controller = match settings.controller {
        // Replay answers from the evaluated corpus unless told otherwise.
        ControllerKind::Replay if settings.config.dataset.is_none() => settings.controller(Some(&records))?,
        _ => settings.controller(None)?,
    };
    let report = evaluate(controller.as_ref(), &records, workers.max(1)).map_err(|e| fail(EXIT_DATA, e.to_string()))?;
    match settings.format {
        Format::Json => writeln!(out, "{}", to_json(&report)),
        Format::Text => writeln!(out, "{report}"),
    }
    .map_err(io_fail)?;
    Ok(EXIT_OK)
}

fn parse_tasks(spec: &str) -> Result<BTreeSet<TaskKind>, Failure> {
    if spec.trim() == "all" {
        return Ok(TaskKind::all().collect());
    }
    let tasks: BTreeSet<TaskKind> = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| TaskKind::from_token_name(s).ok_or_else(|| fail(EXIT_USAGE, format!("unknown task `{s}`"))))
        .collect::<Result<_, _>>()?;
    if tasks.is_empty() {
        return Err(fail(EXIT_USAGE, "--tasks is empty"));
    }
    Ok(tasks)
}

fn cmd_synth(
    tasks: &str,
    scale: f64,
    seed: u64,
    split: Split,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(fail(EXIT_USAGE, "--scale must be positive"));
    }
    let distribution = Distribution::scaled(split, scale).restricted(&parse_tasks(tasks)?);
    let records =
        synth_corpus(&distribution, seed, &TemplateBank::shipped()).map_err(|e| fail(EXIT_DATA, e.to_string()))?;
    let text = to_jsonl(&records);
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| fail(EXIT_DATA, format!("{}: {e}", p.display())))?;
            writeln!(out, "wrote {} records to {}", records.len(), p.display()).map_err(io_fail)?;
        }
        None => write!(out, "{text}").map_err(io_fail)?,
    }
    Ok(EXIT_OK)
}

fn cmd_stats(settings: &Settings, dataset: &Path, out: &mut dyn Write) -> Result<i32, Failure> {
    let s = stats(&load(dataset)?);
    match settings.format {
        Format::Json => writeln!(out, "{}", to_json(&s)),
        Format::Text => writeln!(out, "{s}"),
    }
    .map_err(io_fail)?;
    Ok(EXIT_OK)
}

fn cmd_tokens(settings: &Settings, out: &mut dyn Write) -> Result<i32, Failure> {
    let rows: Vec<_> = token_table()
        .into_iter()
        .map(|spec| {
            (
                spec.task.family().name(),
                spec.task.condition().map_or("-", |c| c.name()),
                spec.name,
                spec.open_tag(),
                spec.close_tag(),
            )
        })
        .collect();
    if settings.format == Format::Json {
        let doc: Vec<_> = rows
            .iter()
            .map(|(f, c, n, o, cl)| serde_json::json!({"family": f, "condition": c, "token": n, "open": o, "close": cl}))
            .collect();
        writeln!(out, "{}", to_json(&doc)).map_err(io_fail)?;
    } else {
        writeln!(out, "family\tcondition\ttoken\topen\tclose").map_err(io_fail)?;
        for (f, c, n, o, cl) in rows {
            writeln!(out, "{f}\t{c}\t{n}\t{o}\t{cl}").map_err(io_fail)?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_sweep(
    settings: &Settings,
    sizes: &[usize],
    drop_rules: f64,
    scale: f64,
    seed: u64,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    if sizes.is_empty() || sizes.iter().any(|&n| n == 0 || n > 20) {
        return Err(fail(EXIT_USAGE, "--sizes must be between 1 and 20"));
    }
    let rules = settings.rule_set()?.without_last_fraction(drop_rules);
    let max = settings.max_chain_length;
    let make = move |_: &[InstructionRecord]| -> Box<dyn Controller> {
        Box::new(RuleRouter::new(rules.clone()).with_max_chain_length(max))
    };
    let config = CorpusConfig { scale, seed, ..CorpusConfig::default() };
    let rows = sweep(&family_prefix_subsets(sizes), &make, &config, &TemplateBank::shipped());
    match settings.format {
        Format::Json => writeln!(out, "{}", to_json(&rows)),
        Format::Text => write!(out, "{}", sweep_table(&rows)),
    }
    .map_err(io_fail)?;
    Ok(EXIT_OK)
}

const REPL_HELP: &str = "commands: :attach MODALITY=LOCATOR, :clear, :help, :quit; anything else is routed and run";

fn cmd_repl(
    settings: &Settings,
    allow_live_backends: bool,
    stdin: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    let registry = settings.registry()?;
    if !allow_live_backends {
        if let Some(live) = registry.specs().find(|s| !matches!(s.backend, BackendKind::Stub { .. })) {
            return Err(fail(
                EXIT_USAGE,
                format!("registry entry `{}` is not a stub; pass --allow-live-backends to use it", live.task),
            ));
        }
    }
    let controller = settings.controller(None)?;
    let mut attachments: Vec<Artifact> = Vec::new();
    let mut history: Vec<Turn> = Vec::new();
    writeln!(out, "{REPL_HELP}").map_err(io_fail)?;
    let mut line = String::new();
    loop {
        write!(out, "> ").map_err(io_fail)?;
        out.flush().map_err(io_fail)?;
        line.clear();
        if stdin.read_line(&mut line).map_err(|e| fail(EXIT_USAGE, e.to_string()))? == 0 {
            writeln!(out).map_err(io_fail)?;
            return Ok(EXIT_OK);
        }
        let input = line.trim();
        match input {
            "" => continue,
            ":quit" | ":q" => return Ok(EXIT_OK),
            ":help" => writeln!(out, "{REPL_HELP}").map_err(io_fail)?,
            ":clear" => {
                attachments.clear();
                history.clear();
                writeln!(out, "cleared").map_err(io_fail)?;
            }
            _ if input.starts_with(":attach ") => match input[":attach ".len()..].trim().parse::<Artifact>() {
                Ok(a) => {
                    writeln!(out, "attached {a}").map_err(io_fail)?;
                    attachments.push(a);
                }
                Err(e) => writeln!(out, "error: {e}").map_err(io_fail)?,
            },
            _ => {
                let request = ControllerRequest::new(input)
                    .with_attachments(attachments.clone())
                    .with_history(history.clone());
                let result = route_and_execute(settings, controller.as_ref(), &registry, &request, &ExecOptions::default());
                match result {
                    Ok(report) => {
                        writeln!(out, "{report}").map_err(io_fail)?;
                        history.push(Turn { instruction: input.to_string(), response: report.final_text.clone() });
                    }
                    Err(f) => writeln!(out, "error: {}", f.message).map_err(io_fail)?,
                }
            }
        }
    }
}
