//! Run configuration: a TOML file for search, models and tooling, combined
//! with the paths given on the command line.
//!
//! ```toml
//! [search]
//! num_rollouts = 10
//! uct_c = 1.5
//! max_depth = 5
//! gen_children = 4
//! fix_children = 2
//! reward_weight = 2.0
//!
//! [[models]]
//! id = "gpt-4o-mini"
//! provider = "http"
//! endpoint = "https://api.openai.com/v1"
//! api_key_env = "OPENAI_API_KEY"
//!
//! [timeouts]
//! test_secs = 30
//! compile_secs = 600
//! model_secs = 120
//!
//! [validation]
//! compile_command = ["cargo", "build", "--message-format=json"]
//! lint_command = ["cargo", "clippy", "--message-format=json"]
//!
//! [output]
//! transcript = "runs/transcript.jsonl"
//! tree_dump = "runs/trees"
//! ```
//!
//! Relative paths inside the file are resolved against the file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::mcts::SearchConfig;
use crate::refiner::{MockProvider, ModelConfig, ModelProvider, ProviderKind, ReplayProvider, RetryPolicy};
use crate::validation::ToolchainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Timeouts {
    pub test_secs: f64,
    pub compile_secs: f64,
    pub model_secs: f64,
}

impl Default for Timeouts {
    fn default() -> Self {
        Self {
            test_secs: 30.0,
            compile_secs: 600.0,
            model_secs: 120.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationSettings {
    pub compile_command: Vec<String>,
    /// Empty disables linting; idiomaticity is then reported as null.
    pub lint_command: Vec<String>,
    pub target_dir: Option<PathBuf>,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        let t = ToolchainConfig::default();
        Self {
            compile_command: t.compile_command,
            lint_command: t.lint_command,
            target_dir: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    pub transcript: Option<PathBuf>,
    pub tree_dump: Option<PathBuf>,
}

/// The configuration file as written by the user.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub search: SearchConfig,
    pub models: Vec<ModelConfig>,
    pub timeouts: Timeouts,
    pub validation: ValidationSettings,
    pub retry: RetryPolicy,
    pub output: OutputSettings,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.output.transcript,
            &mut cfg.output.tree_dump,
            &mut cfg.validation.target_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Model ids paired with the provider serving each.
pub type NamedProviders = Vec<(String, Arc<dyn ModelProvider>)>;

/// Paths supplied per run, usually from the command line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunPaths {
    pub project_dir: PathBuf,
    pub tests_file: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub report_path: PathBuf,
    /// Mock script (`.toml`) or recorded transcript (`.jsonl`) serving every model.
    pub mock: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub project_dir: PathBuf,
    pub tests_file: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub report_path: PathBuf,
    pub search: SearchConfig,
    pub models: Vec<ModelConfig>,
    pub timeouts: Timeouts,
    pub validation: ValidationSettings,
    pub retry: RetryPolicy,
    /// Defaults to the report path with a `.transcript.jsonl` extension.
    pub transcript_path: Option<PathBuf>,
    pub tree_dump_dir: Option<PathBuf>,
    pub mock: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(file: ConfigFile, paths: RunPaths) -> Self {
        Self {
            project_dir: paths.project_dir,
            tests_file: paths.tests_file,
            output_dir: paths.output_dir,
            report_path: paths.report_path,
            search: file.search,
            models: file.models,
            timeouts: file.timeouts,
            validation: file.validation,
            retry: file.retry,
            transcript_path: file.output.transcript,
            tree_dump_dir: file.output.tree_dump,
            mock: paths.mock,
        }
    }

    pub fn transcript_path(&self) -> PathBuf {
        self.transcript_path
            .clone()
            .unwrap_or_else(|| self.report_path.with_extension("transcript.jsonl"))
    }

    pub fn toolchain(&self) -> ToolchainConfig {
        ToolchainConfig {
            compile_command: self.validation.compile_command.clone(),
            lint_command: self.validation.lint_command.clone(),
            test_timeout_secs: self.timeouts.test_secs,
            compile_timeout_secs: self.timeouts.compile_secs,
            target_dir: self.validation.target_dir.clone(),
        }
    }

    /// Checks the configuration and makes every path absolute.
    pub fn resolved(&self) -> Result<Self, PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.search
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.models.is_empty() {
            return bad("at least one model must be configured".into());
        }
        for (name, v) in [
            ("timeouts.test_secs", self.timeouts.test_secs),
            ("timeouts.compile_secs", self.timeouts.compile_secs),
            ("timeouts.model_secs", self.timeouts.model_secs),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a positive number of seconds"));
            }
        }
        if self.validation.compile_command.is_empty() {
            return bad("validation.compile_command must not be empty".into());
        }
        let abs = |p: &Path| {
            std::path::absolute(p).map_err(|e| PipelineError::Config(format!("cannot resolve {}: {e}", p.display())))
        };
        let existing = |p: &Path, dir: bool| -> Result<PathBuf, PipelineError> {
            let meta = std::fs::metadata(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
            if meta.is_dir() != dir {
                let kind = if dir { "directory" } else { "file" };
                return Err(PipelineError::Config(format!("{} is not a {kind}", p.display())));
            }
            abs(p)
        };

        let mut out = self.clone();
        out.project_dir = existing(&self.project_dir, true)?;
        out.tests_file = self.tests_file.as_deref().map(|p| existing(p, false)).transpose()?;
        out.mock = self.mock.as_deref().map(|p| existing(p, false)).transpose()?;
        out.output_dir = abs(&self.output_dir)?;
        if out.output_dir.exists() {
            let non_empty = std::fs::read_dir(&out.output_dir)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", out.output_dir.display())))?
                .next()
                .is_some();
            if non_empty {
                return bad(format!("output directory {} is not empty", out.output_dir.display()));
            }
        }
        if out.output_dir.starts_with(&out.project_dir) || out.project_dir.starts_with(&out.output_dir) {
            return bad("output directory must not overlap the project directory".into());
        }
        out.report_path = abs(&self.report_path)?;
        out.transcript_path = Some(abs(&self.transcript_path())?);
        out.tree_dump_dir = self.tree_dump_dir.as_deref().map(abs).transpose()?;
        out.validation.target_dir = self.validation.target_dir.as_deref().map(abs).transpose()?;
        Ok(out)
    }

    /// Providers for the configured pool, in pool order. A mock file, when
    /// set, serves every model.
    pub fn providers(&self) -> Result<NamedProviders, PipelineError> {
        if let Some(path) = &self.mock {
            let provider: Arc<dyn ModelProvider> = if path.extension().is_some_and(|e| e == "jsonl") {
                Arc::new(ReplayProvider::load(path)?)
            } else {
                Arc::new(MockProvider::load(path)?)
            };
            return Ok(self.models.iter().map(|m| (m.id.clone(), provider.clone())).collect());
        }
        let timeout = Duration::from_secs_f64(self.timeouts.model_secs);
        self.models
            .iter()
            .map(|m| match m.provider {
                ProviderKind::Http => Ok((
                    m.id.clone(),
                    Arc::new(m.http_provider(timeout)?) as Arc<dyn ModelProvider>,
                )),
                ProviderKind::Mock => Err(PipelineError::Config(format!(
                    "model `{}` uses the mock provider, which needs a mock file",
                    m.id
                ))),
            })
            .collect()
    }
}
