//! In-memory validator and scorer keyed by a function's body text, for
//! driving searches without a toolchain.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::SafetyScorer;
use crate::code_model::ProjectSnapshot;
use crate::safety::SafetyError;
use crate::validation::{
    CompileDiagnostic, CompileOutcome, TestCase, TestOutcome, ValidationError, ValidationResult, Validator,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Verdict {
    CompileErrors(usize),
    /// Compiles but the first test case fails.
    TestFailure,
    Pass,
}

/// Validates by looking up the body of one function in a verdict table.
#[derive(Debug)]
pub struct ScriptedValidator {
    unit_id: String,
    verdicts: HashMap<String, Verdict>,
    default: Verdict,
    calls: AtomicUsize,
}

impl ScriptedValidator {
    pub fn new(unit_id: impl Into<String>, default: Verdict) -> Self {
        Self {
            unit_id: unit_id.into(),
            verdicts: HashMap::new(),
            default,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn set(&mut self, body: impl Into<String>, verdict: Verdict) {
        self.verdicts.insert(body.into(), verdict);
    }

    /// Number of `validate` calls so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn verdict(&self, program: &ProjectSnapshot) -> Verdict {
        program
            .unit(&self.unit_id)
            .and_then(|u| self.verdicts.get(&u.body))
            .copied()
            .unwrap_or(self.default)
    }
}

impl Validator for ScriptedValidator {
    fn validate(&self, program: &ProjectSnapshot, suite: &[TestCase]) -> Result<ValidationResult, ValidationError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let result = match self.verdict(program) {
            Verdict::CompileErrors(n) => {
                let errors = (0..n.max(1))
                    .map(|i| CompileDiagnostic {
                        code: Some("E0308".into()),
                        message: format!("scripted error {i}"),
                        file: None,
                        line: None,
                        rendered: format!("error[E0308]: scripted error {i}"),
                    })
                    .collect();
                ValidationResult::new(CompileOutcome::from_errors(errors), None, suite)
            }
            v => {
                let mut outcomes: Vec<TestOutcome> = suite
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        if v == Verdict::TestFailure && i == 0 {
                            TestOutcome::judge(c, b"<wrong>".to_vec(), c.expected_exit + 1)
                        } else {
                            TestOutcome::judge(c, c.expected_stdout.clone(), c.expected_exit)
                        }
                    })
                    .collect();
                if v == Verdict::TestFailure && suite.is_empty() {
                    outcomes.push(TestOutcome {
                        test_id: "scripted".into(),
                        observed_stdout: Vec::new(),
                        observed_exit: 1,
                        passed: false,
                    });
                }
                ValidationResult::new(CompileOutcome::from_errors(vec![]), Some(outcomes), suite)
            }
        };
        Ok(result)
    }
}

/// Scores by looking up the body of one function; non-compiling programs
/// score 0.
#[derive(Clone, Debug)]
pub struct ScriptedScorer {
    unit_id: String,
    scores: HashMap<String, f64>,
    default: f64,
}

impl ScriptedScorer {
    pub fn new(unit_id: impl Into<String>, default: f64) -> Self {
        Self {
            unit_id: unit_id.into(),
            scores: HashMap::new(),
            default,
        }
    }

    pub fn set(&mut self, body: impl Into<String>, s: f64) {
        self.scores.insert(body.into(), s);
    }
}

impl SafetyScorer for ScriptedScorer {
    fn score(&self, program: &ProjectSnapshot, compilable: bool) -> Result<f64, SafetyError> {
        if !compilable {
            return Ok(0.0);
        }
        Ok(program
            .unit(&self.unit_id)
            .and_then(|u| self.scores.get(&u.body))
            .copied()
            .unwrap_or(self.default))
    }
}
