//! Project-level metrics over a finished run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::{FunctionReport, ProjectMetrics, VacuousFlags};
use super::PipelineError;
use crate::code_model::ProjectSnapshot;
use crate::refiner::UsageRecord;
use crate::safety::{count_constructs, idiomaticity, safety_ratio, SafetyBaseline, UnsafeConstructCounts};
use crate::validation::{CargoToolchain, CompileOutcome, ValidationResult, Validator};

/// What the search produced for one function.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionOutcome {
    pub id: String,
    pub refined: bool,
    /// Safety ratio of the project after this function's step.
    pub safety: f64,
    pub usage: UsageRecord,
    pub rollouts: usize,
    pub nodes: usize,
    pub best_depth: Option<usize>,
}

/// Measurements of the final project.
#[derive(Clone, Debug)]
pub struct FinalMeasurement<'a> {
    pub program: &'a ProjectSnapshot,
    pub validation: &'a ValidationResult,
    pub suite_len: usize,
    pub linter_warnings: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub project: ProjectMetrics,
    pub per_function: BTreeMap<String, FunctionReport>,
}

/// Compile errors per function id, located by the line each diagnostic
/// points at, plus the number of errors outside every function.
pub fn attribute_errors(program: &ProjectSnapshot, compile: &CompileOutcome) -> (BTreeMap<String, u64>, u64) {
    let mut per_fn = BTreeMap::new();
    let mut unlocated = 0;
    for e in &compile.errors {
        let hit = match (&e.file, e.line) {
            (Some(file), Some(line)) => {
                let file = file.strip_prefix("./").unwrap_or(file);
                program.files.get(file).and_then(|text| {
                    let range = line_range(text, line)?;
                    program
                        .function_index
                        .values()
                        .find(|u| u.file == file && u.span.start < range.end && range.start < u.span.end)
                })
            }
            _ => None,
        };
        match hit {
            Some(u) => *per_fn.entry(u.id.clone()).or_insert(0) += 1,
            None => unlocated += 1,
        }
    }
    (per_fn, unlocated)
}

/// Byte range of 1-based `line`, newline excluded.
fn line_range(text: &str, line: usize) -> Option<std::ops::Range<usize>> {
    let mut start = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return Some(start..start + l.trim_end_matches('\n').len().max(1));
        }
        start += l.len();
    }
    None
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Derives the report metrics. A function compiles when no error of the
/// final build points into it; an error outside every function means no
/// function counts as compiling. The wall time is left at zero.
pub fn compute_metrics(
    outcomes: &[FunctionOutcome],
    last: &FinalMeasurement<'_>,
    baseline: &SafetyBaseline,
) -> Metrics {
    let compiles = last.validation.compile.success;
    let (errors, unlocated) = attribute_errors(last.program, &last.validation.compile);
    let n = outcomes.len();
    let compiling = if unlocated > 0 {
        0
    } else {
        outcomes.iter().filter(|o| !errors.contains_key(&o.id)).count()
    };
    let refined = outcomes.iter().filter(|o| o.refined).count();

    let tests_total = last.suite_len;
    let tests_passed = last.validation.tests.iter().flatten().filter(|t| t.passed).count();
    let final_counts = match count_constructs(last.program) {
        Ok(c) => c,
        Err(e) => {
            tracing::warn!(error = %e, "cannot count unsafe constructs in the final project");
            UnsafeConstructCounts::default()
        }
    };
    let total = outcomes.iter().fold(UsageRecord::default(), |acc, o| acc + o.usage);

    let project = ProjectMetrics {
        sr: safety_ratio(&final_counts, baseline, compiles),
        fcr: ratio(compiling, n),
        frr: ratio(refined, n),
        tpr: ratio(tests_passed, tests_total),
        pcr: if compiles { 1.0 } else { 0.0 },
        ppr: (tests_total > 0).then_some(if compiles && tests_passed == tests_total {
            1.0
        } else {
            0.0
        }),
        linter_warnings: last.linter_warnings,
        idiomaticity: match (last.linter_warnings, baseline.linter0) {
            (Some(li), Some(l0)) => Some(idiomaticity(li, l0)),
            _ => None,
        },
        avg_queries: (n > 0).then(|| total.queries as f64 / n as f64),
        avg_tokens: (n > 0).then(|| total.tokens as f64 / n as f64),
        total_queries: total.queries,
        total_tokens: total.tokens,
        functions: n,
        refined,
        tests_passed,
        tests_total,
        final_counts,
        vacuous: VacuousFlags {
            no_functions: n == 0,
            empty_suite: tests_total == 0,
            linter_disabled: baseline.linter0.is_none() || last.linter_warnings.is_none(),
        },
        wall_time_secs: 0.0,
    };
    let per_function = outcomes
        .iter()
        .map(|o| {
            let compile_errors = errors.get(&o.id).copied().unwrap_or(0);
            (
                o.id.clone(),
                FunctionReport {
                    refined: o.refined,
                    safety: o.safety,
                    compile_errors,
                    queries: o.usage.queries,
                    tokens: o.usage.tokens,
                    rollouts: o.rollouts,
                    nodes: o.nodes,
                    best_depth: o.best_depth,
                },
            )
        })
        .collect();
    Metrics { project, per_function }
}

/// Safety and idiomaticity of one project measured against another.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandaloneMetrics {
    pub compiles: bool,
    pub sr: f64,
    pub counts: UnsafeConstructCounts,
    pub baseline_counts: UnsafeConstructCounts,
    pub idiomaticity: Option<f64>,
    pub linter_warnings: Option<u64>,
    pub baseline_linter_warnings: Option<u64>,
}

/// Measures `project_dir` against the untouched `baseline_dir`. Linting is
/// skipped when `lint` is false.
pub fn measure_project(
    project_dir: &Path,
    baseline_dir: &Path,
    toolchain: &CargoToolchain,
    lint: bool,
) -> Result<StandaloneMetrics, PipelineError> {
    let project = ProjectSnapshot::load(project_dir)?;
    let base = ProjectSnapshot::load(baseline_dir)?;
    let baseline_counts = count_constructs(&base)?;
    let compiles = toolchain.validate(&project, &[])?.compile.success;
    let counts = if compiles {
        count_constructs(&project)?
    } else {
        count_constructs(&project).unwrap_or_default()
    };
    let (linter_warnings, baseline_linter_warnings) = if lint {
        let scratch = toolchain.scratch_dir()?;
        let l0 = toolchain.lint_warnings(&base, &scratch.path().join("baseline"))?;
        let li = if compiles {
            Some(toolchain.lint_warnings(&project, &scratch.path().join("project"))?)
        } else {
            None
        };
        (li, Some(l0))
    } else {
        (None, None)
    };
    let baseline = SafetyBaseline {
        counts0: baseline_counts,
        linter0: baseline_linter_warnings,
    };
    Ok(StandaloneMetrics {
        compiles,
        sr: safety_ratio(&counts, &baseline, compiles),
        counts,
        baseline_counts,
        idiomaticity: match (linter_warnings, baseline_linter_warnings) {
            (Some(li), Some(l0)) => Some(idiomaticity(li, l0)),
            _ => None,
        },
        linter_warnings,
        baseline_linter_warnings,
    })
}
