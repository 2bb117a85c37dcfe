//! Whole-project orchestration: baseline measurement, one search per
//! function in dependency order, and the final report.

pub mod config;
pub mod metrics;
pub mod report;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

pub use self::config::{ConfigFile, NamedProviders, RunConfig, RunPaths, Timeouts, ValidationSettings};
pub use self::metrics::{compute_metrics, measure_project, FinalMeasurement, FunctionOutcome, StandaloneMetrics};
pub use self::report::{
    check_schema, emit_report, read_report, BaselineSummary, FunctionReport, ProjectMetrics, TranslationReport,
    REPORT_SCHEMA, REPORT_SCHEMA_VERSION,
};
use crate::code_model::{order_by_dependency, CodeModelError, ProjectSnapshot};
use crate::mcts::{mcts_search, SafetyScorer, SearchEnv, SearchError};
use crate::refiner::transcript::read_transcript;
use crate::refiner::{ModelPool, ModelProvider, RefinerError, ReplayProvider, Transcript};
use crate::safety::{count_constructs, SafetyBaseline, SafetyError};
use crate::validation::{load_suite, CargoToolchain, TestCase, ValidationError, Validator};

/// At least one function was refined.
pub const EXIT_REFINED: i32 = 0;
/// The run completed without accepting any refinement.
pub const EXIT_NO_REFINEMENTS: i32 = 1;
/// Configuration or environment failure.
pub const EXIT_ENVIRONMENT: i32 = 2;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(
        "the input project does not compile (compile errors: {count}); refinement needs a compiling project:\n{diagnostics}"
    )]
    BaselineCompile { count: usize, diagnostics: String },
    #[error("report error: {0}")]
    Report(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    CodeModel(#[from] CodeModelError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Safety(#[from] SafetyError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Refiner(#[from] RefinerError),
}

/// Process exit status for a finished run.
pub fn exit_code(report: &TranslationReport) -> i32 {
    if report.project.refined > 0 {
        EXIT_REFINED
    } else {
        EXIT_NO_REFINEMENTS
    }
}

/// Runs a translation with the providers described by `config`.
pub fn run_translation(config: &RunConfig) -> Result<TranslationReport, PipelineError> {
    let config = config.resolved()?;
    let providers = config.providers()?;
    translate(&config, providers)
}

/// Runs a translation with caller-supplied providers, one per configured
/// model id. `config` must already be resolved.
pub fn translate(config: &RunConfig, providers: NamedProviders) -> Result<TranslationReport, PipelineError> {
    let started = Instant::now();
    let project = ProjectSnapshot::load(&config.project_dir)?;
    let suite: Vec<TestCase> = match &config.tests_file {
        Some(path) => load_suite(path)?,
        None => Vec::new(),
    };
    if suite.is_empty() {
        tracing::warn!("empty test suite: acceptance rests on compilation alone");
    }
    let toolchain = CargoToolchain::new(config.toolchain())?;

    let initial = toolchain.validate(&project, &suite)?;
    if !initial.compile.success {
        return Err(PipelineError::BaselineCompile {
            count: initial.compile.error_count,
            diagnostics: initial.feedback_text.clone(),
        });
    }
    let baseline_passed = initial.tests.iter().flatten().filter(|t| t.passed).count();
    if baseline_passed < suite.len() {
        tracing::warn!(
            passed = baseline_passed,
            total = suite.len(),
            "the input project fails part of its own test suite; no refinement can be accepted"
        );
    }
    let baseline = SafetyBaseline {
        counts0: count_constructs(&project)?,
        linter0: lint(&toolchain, &project)?,
    };
    tracing::info!(counts = ?baseline.counts0, linter = ?baseline.linter0, "baseline measured");

    let transcript_path = config.transcript_path();
    ensure_parent(&transcript_path)?;
    let header = serde_json::to_value(config).map_err(|e| PipelineError::Config(e.to_string()))?;
    let transcript = Arc::new(Transcript::create(&transcript_path, header)?);
    let ids: Vec<&str> = config.models.iter().map(|m| m.id.as_str()).collect();
    let pool = pool_for(&ids, providers)?
        .with_retry(config.retry)
        .with_transcript(transcript.clone());

    if let Some(dir) = &config.tree_dump_dir {
        std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
            path: dir.clone(),
            source,
        })?;
    }

    let order = order_by_dependency(&project.units()).ordered_ids;
    let mut current = project.clone();
    let mut outcomes = Vec::with_capacity(order.len());
    for (index, id) in order.iter().enumerate() {
        let unit = current
            .unit(id)
            .cloned()
            .ok_or_else(|| CodeModelError::UnknownFunction(id.clone()))?;
        let env = SearchEnv {
            pool: &pool,
            validator: &toolchain,
            scorer: &baseline,
        };
        let result = mcts_search(env, &unit, &current, &config.search, &suite)?;
        if let Some(dir) = &config.tree_dump_dir {
            write_tree_dump(dir, index, id, &result.tree.dump())?;
        }
        let refined = result.found_success;
        if refined {
            current = result.best.program.clone().expect("Success nodes carry a program");
        }
        let safety = match result.best.safety {
            Some(s) if refined => s,
            _ => baseline.score(&current, true)?,
        };
        tracing::info!(function = %id, refined, safety, "function done");
        outcomes.push(FunctionOutcome {
            id: id.clone(),
            refined,
            safety,
            usage: result.usage,
            rollouts: result.rollouts_used,
            nodes: result.tree.len(),
            best_depth: refined.then_some(result.best.depth),
        });
    }

    std::fs::create_dir_all(&config.output_dir).map_err(|source| PipelineError::Io {
        path: config.output_dir.clone(),
        source,
    })?;
    current.materialize(&config.output_dir)?;

    let last_validation = toolchain.validate(&current, &suite)?;
    let last_lint = if last_validation.compile.success {
        lint(&toolchain, &current)?
    } else {
        None
    };
    let measurement = FinalMeasurement {
        program: &current,
        validation: &last_validation,
        suite_len: suite.len(),
        linter_warnings: last_lint,
    };
    let m = compute_metrics(&outcomes, &measurement, &baseline);
    let mut project_metrics = m.project;
    project_metrics.wall_time_secs = started.elapsed().as_secs_f64();

    let report = TranslationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        order,
        per_function: m.per_function,
        project: project_metrics,
        baseline: BaselineSummary {
            counts: baseline.counts0,
            linter_warnings: baseline.linter0,
            tests_passed: baseline_passed,
            tests_total: suite.len(),
        },
    };
    debug_assert_eq!(transcript.query_count(), report.project.total_queries);
    emit_report(&report, &config.report_path)?;
    Ok(report)
}

fn pool_for(ids: &[&str], providers: NamedProviders) -> Result<ModelPool, PipelineError> {
    let provided: Vec<&str> = providers.iter().map(|(id, _)| id.as_str()).collect();
    if provided != ids {
        return Err(PipelineError::Config(format!(
            "providers {provided:?} do not match configured models {ids:?}"
        )));
    }
    Ok(ModelPool::new(providers)?)
}

fn lint(toolchain: &CargoToolchain, program: &ProjectSnapshot) -> Result<Option<u64>, PipelineError> {
    if toolchain.config().lint_command.is_empty() {
        return Ok(None);
    }
    let dir = toolchain.scratch_dir()?;
    Ok(Some(toolchain.lint_warnings(program, dir.path())?))
}

fn ensure_parent(path: &Path) -> Result<(), PipelineError> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(parent) => std::fs::create_dir_all(parent).map_err(|source| PipelineError::Io {
            path: parent.to_path_buf(),
            source,
        }),
        None => Ok(()),
    }
}

fn write_tree_dump(dir: &Path, index: usize, id: &str, dump: &impl serde::Serialize) -> Result<(), PipelineError> {
    let name: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    let path = dir.join(format!("{index:03}_{name}.json"));
    let text = serde_json::to_string_pretty(dump).map_err(|e| PipelineError::Report(e.to_string()))?;
    std::fs::write(&path, text).map_err(|source| PipelineError::Io { path, source })
}

/// Outcome of re-running a recorded translation.
#[derive(Debug)]
pub struct ReplaySummary {
    pub config: RunConfig,
    pub report: TranslationReport,
    /// Recorded model answers the re-run did not consume.
    pub unused_records: usize,
    /// Whether the new report equals the recorded run's report, ignoring
    /// wall time; `None` when that report cannot be read.
    pub matches_original: Option<bool>,
}

/// Re-runs the translation recorded in `transcript_path`, answering every
/// model query from the transcript. Outputs go to `out_dir` as `project/`,
/// `report.json` and `transcript.jsonl`.
pub fn replay(transcript_path: &Path, out_dir: &Path) -> Result<ReplaySummary, PipelineError> {
    let recorded = read_transcript(transcript_path)?;
    let header = recorded
        .config
        .ok_or_else(|| PipelineError::Config(format!("{} has no run header", transcript_path.display())))?;
    let original: RunConfig = serde_json::from_value(header)
        .map_err(|e| PipelineError::Config(format!("run header of {}: {e}", transcript_path.display())))?;

    let mut config = original.clone();
    config.output_dir = out_dir.join("project");
    config.report_path = out_dir.join("report.json");
    config.transcript_path = Some(out_dir.join("transcript.jsonl"));
    config.tree_dump_dir = original.tree_dump_dir.as_ref().map(|_| out_dir.join("trees"));
    config.mock = None;
    let config = config.resolved()?;

    let provider = Arc::new(ReplayProvider::from_records(&recorded.queries));
    let shared: Arc<dyn ModelProvider> = provider.clone();
    let providers = config.models.iter().map(|m| (m.id.clone(), shared.clone())).collect();
    let report = translate(&config, providers)?;
    let matches_original = read_report(&original.report_path)
        .ok()
        .map(|r| r.without_timing() == report.without_timing());
    Ok(ReplaySummary {
        config,
        report,
        unused_records: provider.remaining(),
        matches_original,
    })
}
