//! The machine-readable translation report.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::PipelineError;
use crate::safety::UnsafeConstructCounts;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslationReport {
    pub schema_version: u32,
    /// Function ids in the order they were searched.
    pub order: Vec<String>,
    pub per_function: BTreeMap<String, FunctionReport>,
    pub project: ProjectMetrics,
    pub baseline: BaselineSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionReport {
    /// A Success node was found and its body substituted.
    pub refined: bool,
    /// Safety ratio of the whole project after this function's step.
    pub safety: f64,
    /// Errors located in this function when the final project is compiled.
    pub compile_errors: u64,
    pub queries: u64,
    pub tokens: u64,
    pub rollouts: usize,
    pub nodes: usize,
    /// Depth of the accepted node, when refined.
    pub best_depth: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectMetrics {
    /// Safety ratio of the final project.
    pub sr: f64,
    /// Function-level compile rate; null for a project without functions.
    pub fcr: Option<f64>,
    /// Function replacement rate; null for a project without functions.
    pub frr: Option<f64>,
    /// Passed tests over all tests on the final project; null for an empty suite.
    pub tpr: Option<f64>,
    /// 1 when the final project compiles, else 0.
    pub pcr: f64,
    /// 1 when the final project passes every test, else 0; null for an empty suite.
    pub ppr: Option<f64>,
    pub linter_warnings: Option<u64>,
    pub idiomaticity: Option<f64>,
    pub avg_queries: Option<f64>,
    pub avg_tokens: Option<f64>,
    pub total_queries: u64,
    pub total_tokens: u64,
    pub functions: usize,
    pub refined: usize,
    pub tests_passed: usize,
    pub tests_total: usize,
    pub final_counts: UnsafeConstructCounts,
    pub vacuous: VacuousFlags,
    pub wall_time_secs: f64,
}

/// Marks metrics that hold only vacuously or could not be computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VacuousFlags {
    pub no_functions: bool,
    pub empty_suite: bool,
    pub linter_disabled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSummary {
    pub counts: UnsafeConstructCounts,
    pub linter_warnings: Option<u64>,
    pub tests_passed: usize,
    pub tests_total: usize,
}

impl TranslationReport {
    /// The report with its wall time zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.project.wall_time_secs = 0.0;
        r
    }
}

/// Writes `report` as pretty-printed JSON. Floats round-trip exactly.
pub fn emit_report(report: &TranslationReport, path: &Path) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| PipelineError::Report(e.to_string()))?;
    text.push('\n');
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| PipelineError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_report(path: &Path) -> Result<TranslationReport, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let report: TranslationReport =
        serde_json::from_str(&text).map_err(|e| PipelineError::Report(format!("{}: {e}", path.display())))?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(PipelineError::Report(format!(
            "unsupported report schema version {}",
            report.schema_version
        )));
    }
    Ok(report)
}

/// Documented report layout, one `path: type|type` line per field.
/// Entries of `per_function` appear as `*` and array items as `[]`.
pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.txt");

/// Observed JSON types per field path of `doc`.
pub fn schema_outline(doc: &Value) -> BTreeMap<String, BTreeSet<&'static str>> {
    fn walk(v: &Value, path: &str, out: &mut BTreeMap<String, BTreeSet<&'static str>>) {
        let kind = match v {
            Value::Null => "null",
            Value::Bool(_) => "boolean",
            Value::Number(_) => "number",
            Value::String(_) => "string",
            Value::Array(_) => "array",
            Value::Object(_) => "object",
        };
        if !path.is_empty() {
            out.entry(path.to_string()).or_default().insert(kind);
        }
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let key = if path == "per_function" { "*" } else { k.as_str() };
                    let p = if path.is_empty() {
                        key.to_string()
                    } else {
                        format!("{path}.{key}")
                    };
                    walk(child, &p, out);
                }
            }
            Value::Array(items) => {
                for item in items {
                    walk(item, &format!("{path}[]"), out);
                }
            }
            _ => {}
        }
    }
    let mut out = BTreeMap::new();
    walk(doc, "", &mut out);
    out
}

/// Checks `doc` against a schema in the [`REPORT_SCHEMA`] format. Fields
/// under `per_function.*` or inside arrays may be absent when their
/// container is empty; every other documented field must be present, and
/// no undocumented field may appear.
pub fn check_schema(doc: &Value, schema: &str) -> Result<(), Vec<String>> {
    let mut documented: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut problems = Vec::new();
    for line in schema
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        match line.split_once(": ") {
            Some((path, kinds)) => {
                documented.insert(path, kinds.split('|').collect());
            }
            None => problems.push(format!("malformed schema line `{line}`")),
        }
    }
    let observed = schema_outline(doc);
    for (path, kinds) in &observed {
        match documented.get(path.as_str()) {
            None => problems.push(format!("undocumented field `{path}`")),
            Some(allowed) => {
                for k in kinds.iter().filter(|k| !allowed.contains(*k)) {
                    problems.push(format!("field `{path}` has type {k}"));
                }
            }
        }
    }
    for path in documented.keys() {
        let optional = path.contains("per_function.*") || path.contains("[]");
        if !optional && !observed.contains_key(*path) {
            problems.push(format!("missing field `{path}`"));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}
