//! Driving the external compiler, linter and built binary.
//!
//! Commands run with the materialized project as working directory and must
//! print cargo's JSON message stream on stdout (`--message-format=json`).

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tempfile::TempDir;
use wait_timeout::ChildExt;

use super::{CompileDiagnostic, CompileOutcome, TestCase, TestOutcome, ValidationError, ValidationResult, Validator};
use crate::code_model::ProjectSnapshot;

/// Exit value recorded for a test that hit its timeout.
pub const TIMEOUT_EXIT: i32 = -1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolchainConfig {
    pub compile_command: Vec<String>,
    pub lint_command: Vec<String>,
    pub test_timeout_secs: f64,
    pub compile_timeout_secs: f64,
    /// Shared build directory. A private temporary one is used when unset.
    pub target_dir: Option<PathBuf>,
}

impl Default for ToolchainConfig {
    fn default() -> Self {
        Self {
            compile_command: ["cargo", "build", "--message-format=json"].map(String::from).to_vec(),
            lint_command: ["cargo", "clippy", "--message-format=json"].map(String::from).to_vec(),
            test_timeout_secs: 30.0,
            compile_timeout_secs: 600.0,
            target_dir: None,
        }
    }
}

pub struct CargoToolchain {
    config: ToolchainConfig,
    target_dir: PathBuf,
    _owned_target: Option<TempDir>,
}

struct RunOutput {
    stdout: Vec<u8>,
    stderr: Vec<u8>,
    status: Option<ExitStatus>,
}

/// Runs `cmd` feeding `stdin`; `status` is `None` on timeout.
fn run_with_timeout(mut cmd: Command, stdin: &[u8], timeout: Duration) -> std::io::Result<RunOutput> {
    cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());
    let mut child = cmd.spawn()?;
    let mut child_in = child.stdin.take().expect("piped stdin");
    let mut child_out = child.stdout.take().expect("piped stdout");
    let mut child_err = child.stderr.take().expect("piped stderr");
    let input = stdin.to_vec();
    let writer = thread::spawn(move || {
        // broken pipe just means the program stopped reading
        let _ = child_in.write_all(&input);
    });
    let out_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = child_out.read_to_end(&mut buf);
        buf
    });
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = child_err.read_to_end(&mut buf);
        buf
    });
    let status = match child.wait_timeout(timeout)? {
        Some(s) => Some(s),
        None => {
            let _ = child.kill();
            let _ = child.wait();
            None
        }
    };
    let _ = writer.join();
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    Ok(RunOutput { stdout, stderr, status })
}

fn exit_value(status: ExitStatus) -> i32 {
    if let Some(code) = status.code() {
        return code;
    }
    #[cfg(unix)]
    {
        use std::os::unix::process::ExitStatusExt;
        if let Some(sig) = status.signal() {
            return 128 + sig;
        }
    }
    TIMEOUT_EXIT
}

/// What a cargo JSON message stream says about a build.
#[derive(Debug, Default)]
pub(crate) struct BuildMessages {
    pub errors: Vec<CompileDiagnostic>,
    pub warnings: u64,
    pub executable: Option<PathBuf>,
}

fn is_summary(message: &str) -> bool {
    message.starts_with("aborting due to")
        || message.ends_with("warnings emitted")
        || message.ends_with("warning emitted")
        || message.starts_with("Some errors have detailed explanations")
        || message.starts_with("For more information about")
}

pub(crate) fn parse_messages(stdout: &str, workdir: &Path) -> BuildMessages {
    let root = workdir.to_string_lossy();
    let scrub = |s: &str| {
        if root.is_empty() {
            s.to_string()
        } else {
            s.replace(root.as_ref(), ".")
        }
    };
    let mut out = BuildMessages::default();
    for line in stdout.lines().filter(|l| l.starts_with('{')) {
        let Ok(v) = serde_json::from_str::<Value>(line) else {
            continue;
        };
        match v["reason"].as_str() {
            Some("compiler-message") => {
                let m = &v["message"];
                let level = m["level"].as_str().unwrap_or("");
                let message = m["message"].as_str().unwrap_or("").to_string();
                if is_summary(&message) {
                    continue;
                }
                if level == "warning" {
                    out.warnings += 1;
                } else if level.starts_with("error") {
                    let primary = m["spans"]
                        .as_array()
                        .and_then(|spans| spans.iter().find(|s| s["is_primary"].as_bool() == Some(true)));
                    let rendered = m["rendered"]
                        .as_str()
                        .map(str::to_string)
                        .unwrap_or_else(|| format!("error: {message}"));
                    out.errors.push(CompileDiagnostic {
                        code: m["code"]["code"].as_str().map(str::to_string),
                        message: scrub(&message),
                        file: primary.and_then(|s| s["file_name"].as_str()).map(scrub),
                        line: primary.and_then(|s| s["line_start"].as_u64()).map(|n| n as usize),
                        rendered: scrub(&rendered),
                    });
                }
            }
            Some("compiler-artifact") => {
                let is_bin = v["target"]["kind"]
                    .as_array()
                    .is_some_and(|k| k.iter().any(|k| k == "bin"));
                if let (true, Some(exe)) = (is_bin, v["executable"].as_str()) {
                    if out.executable.is_none() {
                        out.executable = Some(PathBuf::from(exe));
                    }
                }
            }
            _ => {}
        }
    }
    out
}

impl CargoToolchain {
    pub fn new(config: ToolchainConfig) -> Result<Self, ValidationError> {
        let (target_dir, owned) = match &config.target_dir {
            Some(dir) => (dir.clone(), None),
            None => {
                let tmp = tempfile::Builder::new()
                    .prefix("saferefine-target-")
                    .tempdir()
                    .map_err(|source| ValidationError::Io {
                        path: std::env::temp_dir(),
                        source,
                    })?;
                (tmp.path().to_path_buf(), Some(tmp))
            }
        };
        Ok(Self {
            config,
            target_dir,
            _owned_target: owned,
        })
    }

    pub fn config(&self) -> &ToolchainConfig {
        &self.config
    }

    fn command(&self, template: &[String], workdir: &Path) -> Result<Command, ValidationError> {
        let (program, args) = template
            .split_first()
            .ok_or_else(|| ValidationError::Environment("empty command template".into()))?;
        let mut cmd = Command::new(program);
        cmd.args(args)
            .current_dir(workdir)
            .env("CARGO_TARGET_DIR", &self.target_dir)
            .env("CARGO_TERM_COLOR", "never");
        Ok(cmd)
    }

    fn invoke(
        &self,
        template: &[String],
        program: &ProjectSnapshot,
        workdir: &Path,
    ) -> Result<(RunOutput, BuildMessages), ValidationError> {
        if program.files.is_empty() {
            return Err(ValidationError::Environment("project has no files to build".into()));
        }
        program
            .materialize(workdir)
            .map_err(|e| ValidationError::Environment(e.to_string()))?;
        let cmd = self.command(template, workdir)?;
        let timeout = Duration::from_secs_f64(self.config.compile_timeout_secs);
        let run = run_with_timeout(cmd, &[], timeout).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                ValidationError::Environment(format!("`{}` not found", template[0]))
            } else {
                ValidationError::Environment(format!("cannot run `{}`: {e}", template[0]))
            }
        })?;
        let messages = parse_messages(&String::from_utf8_lossy(&run.stdout), workdir);
        Ok((run, messages))
    }

    fn build(
        &self,
        program: &ProjectSnapshot,
        workdir: &Path,
    ) -> Result<(CompileOutcome, Option<PathBuf>), ValidationError> {
        let (run, mut messages) = self.invoke(&self.config.compile_command, program, workdir)?;
        let ok = run.status.is_some_and(|s| s.success());
        if !ok && messages.errors.is_empty() {
            // manifest problems, timeouts and the like produce no JSON diagnostics
            let stderr = String::from_utf8_lossy(&run.stderr);
            let message = match run.status {
                None => "compilation timed out".to_string(),
                Some(_) => stderr
                    .lines()
                    .find(|l| l.starts_with("error"))
                    .unwrap_or("build failed")
                    .to_string(),
            };
            let root = workdir.to_string_lossy();
            messages.errors.push(CompileDiagnostic {
                code: None,
                message: message.replace(root.as_ref(), "."),
                file: None,
                line: None,
                rendered: stderr.trim().replace(root.as_ref(), "."),
            });
        }
        Ok((CompileOutcome::from_errors(messages.errors), messages.executable))
    }

    pub fn compile_project(
        &self,
        program: &ProjectSnapshot,
        workdir: &Path,
    ) -> Result<CompileOutcome, ValidationError> {
        self.build(program, workdir).map(|(outcome, _)| outcome)
    }

    /// Builds `program` in `workdir` and runs every case in order.
    pub fn run_tests(
        &self,
        program: &ProjectSnapshot,
        suite: &[TestCase],
        workdir: &Path,
    ) -> Result<Vec<TestOutcome>, ValidationError> {
        let (outcome, exe) = self.build(program, workdir)?;
        if !outcome.success {
            return Err(ValidationError::Environment(format!(
                "cannot run tests: build failed with {} errors",
                outcome.error_count
            )));
        }
        let exe = exe.ok_or_else(|| ValidationError::Environment("no binary produced by the build".into()))?;
        self.run_binary(&exe, suite, workdir)
    }

    fn run_binary(&self, exe: &Path, suite: &[TestCase], workdir: &Path) -> Result<Vec<TestOutcome>, ValidationError> {
        if !exe.exists() {
            return Err(ValidationError::Environment(format!(
                "binary {} is missing",
                exe.display()
            )));
        }
        let timeout = Duration::from_secs_f64(self.config.test_timeout_secs);
        let mut outcomes = Vec::with_capacity(suite.len());
        for case in suite {
            let mut cmd = Command::new(exe);
            cmd.args(&case.args).current_dir(workdir);
            let run = run_with_timeout(cmd, &case.stdin, timeout)
                .map_err(|e| ValidationError::Environment(format!("cannot run {}: {e}", exe.display())))?;
            let outcome = match run.status {
                Some(status) => TestOutcome::judge(case, run.stdout, exit_value(status)),
                None => TestOutcome {
                    test_id: case.id.clone(),
                    observed_stdout: run.stdout,
                    observed_exit: TIMEOUT_EXIT,
                    passed: false,
                },
            };
            outcomes.push(outcome);
        }
        Ok(outcomes)
    }

    /// Number of warnings the linter reports for `program`.
    pub fn lint_warnings(&self, program: &ProjectSnapshot, workdir: &Path) -> Result<u64, ValidationError> {
        let (run, messages) = self.invoke(&self.config.lint_command, program, workdir)?;
        if !run.status.is_some_and(|s| s.success()) {
            return Err(ValidationError::Environment(format!(
                "linter failed: {}",
                String::from_utf8_lossy(&run.stderr).lines().last().unwrap_or("")
            )));
        }
        Ok(messages.warnings)
    }

    pub fn scratch_dir(&self) -> Result<TempDir, ValidationError> {
        tempfile::Builder::new()
            .prefix("saferefine-build-")
            .tempdir()
            .map_err(|source| ValidationError::Io {
                path: std::env::temp_dir(),
                source,
            })
    }
}

impl Validator for CargoToolchain {
    fn validate(&self, program: &ProjectSnapshot, suite: &[TestCase]) -> Result<ValidationResult, ValidationError> {
        let dir = self.scratch_dir()?;
        let (outcome, exe) = self.build(program, dir.path())?;
        let tests = if outcome.success && !suite.is_empty() {
            let exe = exe.ok_or_else(|| ValidationError::Environment("no binary produced by the build".into()))?;
            Some(self.run_binary(&exe, suite, dir.path())?)
        } else {
            None
        };
        Ok(ValidationResult::new(outcome, tests, suite))
    }
}
