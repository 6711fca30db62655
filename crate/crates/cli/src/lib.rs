//! The `coevo` command line: grammar diffs, instance validation, migration
//! (deterministic or LLM-driven), metric evaluation and repeated LLM batches.
//!
//! [`run`] takes the argument list and output streams so the whole tool can be
//! driven from tests without spawning a process.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use coevo_core::cst::{validate, ValidationReport};
use coevo_core::gdiff::{diff_grammars, GrammarDiff};
use coevo_core::grammar::{parse_grammar, Grammar};
use coevo_core::llm::{build_prompt, run_once, ExtractContext, LlmRunRecord, PromptBundle, Provider, ProviderConfig};
use coevo_core::metrics::{default_threshold, summarize_batch, Evaluator, MetricAverages, MetricsError, MetricsReport};
use coevo_core::migrate::{migrate_deterministic, MigrationOutcome, MigrationPlan};

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    /// Usage errors, non-conforming instances, rejected batches, failed
    /// postconditions.
    pub const FAILURE: i32 = 1;
    pub const GRAMMAR: i32 = 2;
    pub const IO: i32 = 3;
    pub const NEEDS_LLM: i32 = 4;
    pub const PROVIDER: i32 = 5;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub status: i32,
    pub message: String,
}

impl CliError {
    fn new(status: i32, message: impl Into<String>) -> Self {
        CliError { status, message: message.into() }
    }

    fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::new(exit::IO, format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(name = "coevo", version, about = "Co-evolve DSL instances with their grammar")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the structural difference between two grammar versions as JSON.
    Diff(GrammarPair),
    /// Check an instance against a grammar.
    Validate(ValidateArgs),
    /// Migrate an instance from the old grammar to the new one.
    Migrate(MigrateArgs),
    /// Score an evolved instance against the original.
    Eval(EvalArgs),
    /// Run the LLM migration repeatedly and decide acceptance.
    Batch(BatchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GrammarPair {
    #[arg(long)]
    pub grammar_old: PathBuf,
    #[arg(long)]
    pub grammar_new: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub grammar: PathBuf,
    #[arg(long)]
    pub instance: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Deterministic,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderChoice {
    Mock,
    Http,
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    #[arg(long, value_enum, default_value = "mock")]
    pub provider: ProviderChoice,
    /// Directory of scripted responses (`*.txt`, replayed in name order).
    #[arg(long)]
    pub script_dir: Option<PathBuf>,
    /// Chat-completions endpoint URL.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, default_value = "gpt-4o")]
    pub model: String,
    /// Environment variable holding the bearer token.
    #[arg(long, default_value = "COEVO_API_KEY")]
    pub api_key_env: String,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    /// Request timeout in seconds.
    #[arg(long, default_value_t = 120)]
    pub timeout: u64,
}

impl ProviderArgs {
    pub fn to_config(&self) -> Result<ProviderConfig, CliError> {
        let mut config = match self.provider {
            ProviderChoice::Mock => {
                let dir = self.script_dir.as_ref().ok_or_else(|| CliError::new(exit::FAILURE, "--provider mock needs --script-dir"))?;
                ProviderConfig::mock(dir)
            }
            ProviderChoice::Http => {
                let endpoint = self.endpoint.as_ref().ok_or_else(|| CliError::new(exit::FAILURE, "--provider http needs --endpoint"))?;
                ProviderConfig::http(endpoint, &self.model, &self.api_key_env)
            }
        };
        config.temperature = self.temperature;
        config.timeout_secs = self.timeout;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct MigrateArgs {
    #[command(flatten)]
    pub grammars: GrammarPair,
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, value_enum, default_value = "deterministic")]
    pub engine: Engine,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// Write the migrated instance here instead of stdout. The LLM engine
    /// also leaves `<out>.response.txt` and `<out>.record.json` next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub grammars: GrammarPair,
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub evolved: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BatchArgs {
    #[command(flatten)]
    pub grammars: GrammarPair,
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, value_enum, default_value = "llm")]
    pub engine: Engine,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    /// Good runs needed for acceptance (default: 60% of the runs, rounded up).
    #[arg(long)]
    pub good_threshold: Option<usize>,
    /// Output directory for per-run artifacts and the manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of runs in flight at once.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Free text stored in the manifest, e.g. model snapshot or date.
    #[arg(long)]
    pub seed_note: Option<String>,
}

/// Everything that determines a migration or batch, echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub grammar_old_path: PathBuf,
    pub grammar_new_path: PathBuf,
    pub instance_path: PathBuf,
    pub engine: Engine,
    pub provider: ProviderConfig,
    pub runs: usize,
    pub good_threshold: usize,
    pub output_path: Option<PathBuf>,
    pub parallel: usize,
    pub seed_note: Option<String>,
}

impl RunConfig {
    fn check(&self) -> Result<(), CliError> {
        if self.runs == 0 {
            return Err(CliError::new(exit::FAILURE, "--runs must be at least 1"));
        }
        if self.good_threshold > self.runs {
            return Err(CliError::new(exit::FAILURE, format!("--good-threshold {} exceeds --runs {}", self.good_threshold, self.runs)));
        }
        if self.parallel == 0 {
            return Err(CliError::new(exit::FAILURE, "--parallel must be at least 1"));
        }
        Ok(())
    }
}

impl MigrateArgs {
    pub fn to_config(&self) -> Result<RunConfig, CliError> {
        Ok(RunConfig {
            grammar_old_path: self.grammars.grammar_old.clone(),
            grammar_new_path: self.grammars.grammar_new.clone(),
            instance_path: self.instance.clone(),
            engine: self.engine,
            provider: self.provider_config()?,
            runs: 1,
            good_threshold: 1,
            output_path: self.out.clone(),
            parallel: 1,
            seed_note: None,
        })
    }

    fn provider_config(&self) -> Result<ProviderConfig, CliError> {
        match self.engine {
            Engine::Llm => self.provider.to_config(),
            // Unused; recorded only so the config shape stays the same.
            Engine::Deterministic => Ok(ProviderConfig { script_path: self.provider.script_dir.clone(), ..ProviderConfig::mock("") }),
        }
    }
}

impl BatchArgs {
    pub fn to_config(&self) -> Result<RunConfig, CliError> {
        let provider = match self.engine {
            Engine::Llm => self.provider.to_config()?,
            Engine::Deterministic => ProviderConfig { script_path: self.provider.script_dir.clone(), ..ProviderConfig::mock("") },
        };
        let config = RunConfig {
            grammar_old_path: self.grammars.grammar_old.clone(),
            grammar_new_path: self.grammars.grammar_new.clone(),
            instance_path: self.instance.clone(),
            engine: self.engine,
            provider,
            runs: self.runs,
            good_threshold: self.good_threshold.unwrap_or_else(|| default_threshold(self.runs)),
            output_path: Some(self.out.clone()),
            parallel: self.parallel,
            seed_note: self.seed_note.clone(),
        };
        config.check()?;
        Ok(config)
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

pub fn load_grammar(path: &Path) -> Result<Grammar, CliError> {
    let source = read_text(path)?;
    parse_grammar(&source).map_err(|e| CliError::new(exit::GRAMMAR, format!("{}: {e}", path.display())))
}

fn evaluator<'g>(original: &str, old: &'g Grammar, new: &'g Grammar) -> Result<Evaluator<'g>, CliError> {
    Evaluator::new(original, old, new).map_err(|MetricsError::Oracle(e)| migration_error(e))
}

fn migration_error(err: coevo_core::migrate::MigrationError) -> CliError {
    CliError::new(exit::FAILURE, err.to_string())
}

fn needs_llm(reasons: &[String]) -> CliError {
    CliError::new(exit::NEEDS_LLM, format!("deterministic migration not possible:\n  {}", reasons.join("\n  ")))
}

pub fn cmd_diff(pair: &GrammarPair) -> Result<GrammarDiff, CliError> {
    let old = load_grammar(&pair.grammar_old)?;
    let new = load_grammar(&pair.grammar_new)?;
    Ok(diff_grammars(&old, &new))
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<ValidationReport, CliError> {
    let grammar = load_grammar(&args.grammar)?;
    let source = read_text(&args.instance)?;
    Ok(validate(&source, &grammar))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<MetricsReport, CliError> {
    let old = load_grammar(&args.grammars.grammar_old)?;
    let new = load_grammar(&args.grammars.grammar_new)?;
    let original = read_text(&args.instance)?;
    let evolved = read_text(&args.evolved)?;
    Ok(evaluator(&original, &old, &new)?.evaluate(&evolved))
}

/// Result of a single migration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MigrateOutput {
    pub text: String,
    /// Present for the deterministic engine.
    pub plan: Option<MigrationPlan>,
    /// Present for the LLM engine.
    pub record: Option<LlmRunRecord>,
}

struct Inputs {
    old: Grammar,
    new: Grammar,
    old_source: String,
    new_source: String,
    instance: String,
}

impl Inputs {
    fn load(config: &RunConfig) -> Result<Self, CliError> {
        let old_source = read_text(&config.grammar_old_path)?;
        let new_source = read_text(&config.grammar_new_path)?;
        let grammar = |source: &str, path: &Path| {
            parse_grammar(source).map_err(|e| CliError::new(exit::GRAMMAR, format!("{}: {e}", path.display())))
        };
        Ok(Inputs {
            old: grammar(&old_source, &config.grammar_old_path)?,
            new: grammar(&new_source, &config.grammar_new_path)?,
            instance: read_text(&config.instance_path)?,
            old_source,
            new_source,
        })
    }

    fn prompt(&self) -> Result<String, CliError> {
        build_prompt(&PromptBundle::new(&self.old_source, &self.new_source, &self.instance))
            .map_err(|e| CliError::new(exit::FAILURE, e.to_string()))
    }

    fn context(&self) -> ExtractContext<'_> {
        ExtractContext { original: &self.instance, grammar: &self.new }
    }
}

fn build_provider(config: &ProviderConfig) -> Result<Box<dyn Provider>, CliError> {
    config.build().map_err(|e| CliError::new(exit::PROVIDER, format!("provider: {e}")))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// Runs one migration. With an output path the result is written there; for
/// the LLM engine the raw response and run record are kept beside it even
/// when the run fails.
pub fn cmd_migrate(config: &RunConfig) -> Result<MigrateOutput, CliError> {
    let inputs = Inputs::load(config)?;
    match config.engine {
        Engine::Deterministic => {
            let outcome = migrate_deterministic(&inputs.instance, &inputs.old, &inputs.new).map_err(migration_error)?;
            match outcome {
                MigrationOutcome::Migrated { text, plan } => {
                    if let Some(out) = &config.output_path {
                        write_text(out, &text)?;
                    }
                    Ok(MigrateOutput { text, plan: Some(plan), record: None })
                }
                MigrationOutcome::NeedsLlm(reasons) => Err(needs_llm(&reasons)),
            }
        }
        Engine::Llm => {
            let provider = build_provider(&config.provider)?;
            let record = run_once(provider.as_ref(), &inputs.prompt()?, &inputs.context(), 1);
            if let Some(out) = &config.output_path {
                write_text(&with_suffix(out, ".response.txt"), &record.raw_response)?;
                write_text(&with_suffix(out, ".record.json"), &to_json(&record))?;
            }
            match (&record.extracted, &record.failure) {
                (Some(text), _) => {
                    if let Some(out) = &config.output_path {
                        write_text(out, text)?;
                    }
                    Ok(MigrateOutput { text: text.clone(), plan: None, record: Some(record) })
                }
                (None, failure) => {
                    let what = failure.as_ref().map(|f| match f {
                        coevo_core::llm::RunFailure::ProviderError { message } => format!("provider_error: {message}"),
                        other => other.kind().to_string(),
                    });
                    Err(CliError::new(exit::PROVIDER, format!("llm run failed: {}", what.unwrap_or_default())))
                }
            }
        }
    }
}

/// One run as listed in the manifest. Paths are relative to the batch
/// output directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestRun {
    pub run_index: usize,
    pub good: bool,
    pub failure: Option<String>,
    pub response: PathBuf,
    pub migrated: Option<PathBuf>,
    pub partial: Option<PathBuf>,
    pub record: PathBuf,
    pub metrics: PathBuf,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub timestamp: String,
    pub config: RunConfig,
    pub runs: Vec<ManifestRun>,
    pub averages: MetricAverages,
    pub good_runs: usize,
    pub good_threshold: usize,
    pub accepted: bool,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn collect_records(config: &RunConfig, inputs: &Inputs) -> Result<Vec<LlmRunRecord>, CliError> {
    let runs = config.runs;
    match config.engine {
        Engine::Deterministic => {
            let outcome = migrate_deterministic(&inputs.instance, &inputs.old, &inputs.new).map_err(migration_error)?;
            let text = match outcome {
                MigrationOutcome::Migrated { text, .. } => text,
                MigrationOutcome::NeedsLlm(reasons) => return Err(needs_llm(&reasons)),
            };
            Ok((1..=runs)
                .map(|run_index| LlmRunRecord { run_index, raw_response: text.clone(), extracted: Some(text.clone()), failure: None })
                .collect())
        }
        Engine::Llm => {
            let provider = build_provider(&config.provider)?;
            let prompt = inputs.prompt()?;
            let context = inputs.context();
            if config.parallel <= 1 {
                return Ok((1..=runs).map(|i| run_once(provider.as_ref(), &prompt, &context, i)).collect());
            }
            let next = AtomicUsize::new(0);
            let slots: Mutex<Vec<Option<LlmRunRecord>>> = Mutex::new(vec![None; runs]);
            std::thread::scope(|scope| {
                for _ in 0..config.parallel.min(runs) {
                    scope.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i >= runs {
                            break;
                        }
                        let record = run_once(provider.as_ref(), &prompt, &context, i + 1);
                        slots.lock().expect("no panics while holding the lock")[i] = Some(record);
                    });
                }
            });
            Ok(slots.into_inner().expect("workers joined").into_iter().map(|r| r.expect("every run filled")).collect())
        }
    }
}

/// Runs the batch, writes `run-NN/` artifacts and the manifest under the
/// output directory, and returns the manifest.
pub fn cmd_batch(config: &RunConfig) -> Result<RunManifest, CliError> {
    config.check()?;
    let out = config.output_path.clone().ok_or_else(|| CliError::new(exit::FAILURE, "batch needs an output directory"))?;
    let inputs = Inputs::load(config)?;
    let evaluator = evaluator(&inputs.instance, &inputs.old, &inputs.new)?;
    let records = collect_records(config, &inputs)?;

    let scored: Vec<(LlmRunRecord, MetricsReport)> = records
        .into_iter()
        .map(|record| {
            let report = match record.candidate() {
                Some(text) => evaluator.evaluate(text),
                None => MetricsReport::total_loss(&inputs.instance),
            };
            (record, report)
        })
        .collect();
    let summary = summarize_batch(scored, MetricsReport::is_good, config.good_threshold);

    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let width = config.runs.to_string().len().max(2);
    let mut listed = Vec::with_capacity(summary.runs.len());
    for run in &summary.runs {
        let rel = PathBuf::from(format!("run-{:0width$}", run.record.run_index));
        let dir = out.join(&rel);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let put = |name: &str, text: &str| -> Result<PathBuf, CliError> {
            write_text(&dir.join(name), text)?;
            Ok(rel.join(name))
        };
        let response = put("response.txt", &run.record.raw_response)?;
        let migrated = run.record.extracted.as_deref().map(|t| put("migrated.txt", t)).transpose()?;
        let partial = match &run.record.failure {
            Some(coevo_core::llm::RunFailure::Truncated { partial }) => Some(put("partial.txt", partial)?),
            _ => None,
        };
        let record = put("record.json", &to_json(&run.record))?;
        let metrics = put("metrics.json", &to_json(&run.report))?;
        listed.push(ManifestRun {
            run_index: run.record.run_index,
            good: run.good,
            failure: run.record.failure.as_ref().map(|f| f.kind().to_string()),
            response,
            migrated,
            partial,
            record,
            metrics,
            report: run.report.clone(),
        });
    }

    let manifest = RunManifest {
        timestamp: chrono::Utc::now().to_rfc3339(),
        config: config.clone(),
        runs: listed,
        averages: summary.averages,
        good_runs: summary.good_runs,
        good_threshold: summary.good_threshold,
        accepted: summary.accepted,
    };
    let manifest_path = out.join(MANIFEST_FILE);
    write_text(&manifest_path, &to_json(&manifest))?;
    Ok(manifest)
}

#[derive(Serialize)]
struct BatchSummaryLine<'a> {
    manifest: PathBuf,
    runs: usize,
    good_runs: usize,
    good_threshold: usize,
    accepted: bool,
    averages: &'a MetricAverages,
}

fn dispatch(command: &Command, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let emit = |stdout: &mut dyn Write, text: &str| -> Result<(), CliError> {
        writeln!(stdout, "{text}").map_err(|e| CliError::new(exit::IO, format!("stdout: {e}")))
    };
    match command {
        Command::Diff(pair) => {
            emit(stdout, &cmd_diff(pair)?.to_json())?;
            Ok(exit::OK)
        }
        Command::Validate(args) => {
            let report = cmd_validate(args)?;
            emit(stdout, &to_json(&report))?;
            Ok(if report.is_valid() { exit::OK } else { exit::FAILURE })
        }
        Command::Eval(args) => {
            emit(stdout, &to_json(&cmd_eval(args)?))?;
            Ok(exit::OK)
        }
        Command::Migrate(args) => {
            let config = args.to_config()?;
            let output = cmd_migrate(&config)?;
            if config.output_path.is_none() {
                write!(stdout, "{}", output.text).map_err(|e| CliError::new(exit::IO, format!("stdout: {e}")))?;
            }
            Ok(exit::OK)
        }
        Command::Batch(args) => {
            let config = args.to_config()?;
            let manifest = cmd_batch(&config)?;
            let line = BatchSummaryLine {
                manifest: args.out.join(MANIFEST_FILE),
                runs: manifest.runs.len(),
                good_runs: manifest.good_runs,
                good_threshold: manifest.good_threshold,
                accepted: manifest.accepted,
                averages: &manifest.averages,
            };
            emit(stdout, &to_json(&line))?;
            Ok(if manifest.accepted { exit::OK } else { exit::FAILURE })
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let informational = !e.use_stderr();
            let sink: &mut dyn Write = if informational { stdout } else { stderr };
            let _ = write!(sink, "{}", e.render());
            return if informational { exit::OK } else { exit::FAILURE };
        }
    };
    match dispatch(&cli.command, stdout) {
        Ok(status) => status,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.status
        }
    }
}

