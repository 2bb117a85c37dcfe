//! Compile and behavioral validation of candidate programs.

mod cargo;
mod suite;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::cargo::{CargoToolchain, ToolchainConfig, TIMEOUT_EXIT};
pub use self::suite::{load_suite, parse_suite, TestCase};
use crate::code_model::ProjectSnapshot;

/// At most this many diagnostics are rendered into feedback text.
pub const FEEDBACK_MAX_DIAGNOSTICS: usize = 40;
/// Feedback text is cut at this many bytes.
pub const FEEDBACK_MAX_BYTES: usize = 8 * 1024;

#[derive(Debug, Error)]
pub enum ValidationError {
    /// The toolchain could not run at all. Distinct from a failed compile.
    #[error("environment error: {0}")]
    Environment(String),
    #[error("invalid test suite: {0}")]
    Suite(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileDiagnostic {
    pub code: Option<String>,
    pub message: String,
    pub file: Option<String>,
    pub line: Option<usize>,
    /// Human-readable rendering as printed by the compiler.
    pub rendered: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileOutcome {
    pub success: bool,
    pub errors: Vec<CompileDiagnostic>,
    pub error_count: usize,
}

impl CompileOutcome {
    pub fn from_errors(errors: Vec<CompileDiagnostic>) -> Self {
        Self {
            success: errors.is_empty(),
            error_count: errors.len(),
            errors,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestOutcome {
    pub test_id: String,
    pub observed_stdout: Vec<u8>,
    pub observed_exit: i32,
    pub passed: bool,
}

impl TestOutcome {
    pub fn judge(case: &TestCase, observed_stdout: Vec<u8>, observed_exit: i32) -> Self {
        let passed = observed_stdout == case.expected_stdout && observed_exit == case.expected_exit;
        Self {
            test_id: case.id.clone(),
            observed_stdout,
            observed_exit,
            passed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationResult {
    pub compile: CompileOutcome,
    /// Present only when compilation succeeded and a suite was run.
    pub tests: Option<Vec<TestOutcome>>,
    pub feedback_text: String,
}

impl ValidationResult {
    pub fn new(compile: CompileOutcome, tests: Option<Vec<TestOutcome>>, suite: &[TestCase]) -> Self {
        let tests = if compile.success { tests } else { None };
        let feedback_text = render_feedback(&compile, tests.as_deref(), suite);
        Self {
            compile,
            tests,
            feedback_text,
        }
    }

    /// Compiled and every test (if any ran) passed.
    pub fn passed(&self) -> bool {
        self.compile.success && self.tests.as_deref().is_none_or(|t| is_equivalent(t).equivalent)
    }

    pub fn failed_tests(&self) -> impl Iterator<Item = &TestOutcome> {
        self.tests.iter().flatten().filter(|t| !t.passed)
    }
}

/// `1 / (errors + 1)`.
pub fn compile_score(outcome: &CompileOutcome) -> f64 {
    1.0 / (outcome.error_count as f64 + 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Equivalence {
    pub equivalent: bool,
    /// No tests were run, so equivalence holds only vacuously.
    pub vacuous: bool,
}

pub fn is_equivalent(outcomes: &[TestOutcome]) -> Equivalence {
    Equivalence {
        equivalent: outcomes.iter().all(|o| o.passed),
        vacuous: outcomes.is_empty(),
    }
}

/// Compiles a program and, when it builds and `suite` is non-empty, runs the
/// suite against the same build.
pub trait Validator: Send + Sync {
    fn validate(&self, program: &ProjectSnapshot, suite: &[TestCase]) -> Result<ValidationResult, ValidationError>;
}

fn truncate_bytes(s: &mut String, max: usize) {
    if s.len() <= max {
        return;
    }
    let mut cut = max;
    while !s.is_char_boundary(cut) {
        cut -= 1;
    }
    s.truncate(cut);
    s.push_str("\n... (truncated)\n");
}

fn excerpt(bytes: &[u8]) -> String {
    let mut s = String::from_utf8_lossy(bytes).into_owned();
    truncate_bytes(&mut s, 1024);
    s
}

fn render_feedback(compile: &CompileOutcome, tests: Option<&[TestOutcome]>, suite: &[TestCase]) -> String {
    let mut out = String::new();
    if !compile.success {
        for d in compile.errors.iter().take(FEEDBACK_MAX_DIAGNOSTICS) {
            out.push_str(d.rendered.trim_end());
            out.push_str("\n\n");
        }
        if compile.errors.len() > FEEDBACK_MAX_DIAGNOSTICS {
            out.push_str(&format!(
                "... and {} more errors\n",
                compile.errors.len() - FEEDBACK_MAX_DIAGNOSTICS
            ));
        }
    } else if let Some(tests) = tests {
        for t in tests.iter().filter(|t| !t.passed) {
            let case = suite.iter().find(|c| c.id == t.test_id);
            out.push_str(&format!("test `{}` failed\n", t.test_id));
            if let Some(case) = case {
                if !case.args.is_empty() {
                    out.push_str(&format!("arguments: {:?}\n", case.args));
                }
                if !case.stdin.is_empty() {
                    out.push_str(&format!("stdin:\n{}\n", excerpt(&case.stdin)));
                }
                out.push_str(&format!("expected exit status: {}\n", case.expected_exit));
                out.push_str(&format!("expected stdout:\n{}\n", excerpt(&case.expected_stdout)));
            }
            if t.observed_exit == TIMEOUT_EXIT {
                out.push_str("observed: timed out\n");
            } else {
                out.push_str(&format!("observed exit status: {}\n", t.observed_exit));
            }
            out.push_str(&format!("observed stdout:\n{}\n\n", excerpt(&t.observed_stdout)));
        }
    }
    truncate_bytes(&mut out, FEEDBACK_MAX_BYTES);
    out
}
