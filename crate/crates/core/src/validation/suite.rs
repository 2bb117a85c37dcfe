//! Test suite documents.
//!
//! A suite is a TOML file with one `[[test]]` table per case:
//!
//! ```toml
//! [[test]]
//! id = "sorts-three"
//! args = ["-r"]
//! stdin = "3\n1\n2\n"              # or stdin_file = "inputs/three.txt"
//! expected_stdout = "3\n2\n1\n"    # or expected_stdout_file = "..."
//! expected_exit = 0                # defaults to 0
//! ```
//!
//! File references are resolved relative to the suite file.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::ValidationError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestCase {
    pub id: String,
    pub args: Vec<String>,
    pub stdin: Vec<u8>,
    pub expected_stdout: Vec<u8>,
    pub expected_exit: i32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteDoc {
    #[serde(default)]
    test: Vec<RawCase>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    id: String,
    #[serde(default)]
    args: Vec<String>,
    stdin: Option<String>,
    stdin_file: Option<String>,
    expected_stdout: Option<String>,
    expected_stdout_file: Option<String>,
    #[serde(default)]
    expected_exit: i32,
}

fn literal_or_file(
    id: &str,
    what: &str,
    literal: Option<String>,
    file: Option<String>,
    base: Option<&Path>,
) -> Result<Vec<u8>, ValidationError> {
    match (literal, file) {
        (Some(_), Some(_)) => Err(ValidationError::Suite(format!(
            "test `{id}` gives both {what} and {what}_file"
        ))),
        (Some(s), None) => Ok(s.into_bytes()),
        (None, Some(f)) => {
            let path = base.map_or_else(|| Path::new(&f).to_path_buf(), |b| b.join(&f));
            fs::read(&path).map_err(|source| ValidationError::Io { path, source })
        }
        (None, None) => Ok(Vec::new()),
    }
}

/// Parses a suite document. `base` resolves `*_file` references.
pub fn parse_suite(text: &str, base: Option<&Path>) -> Result<Vec<TestCase>, ValidationError> {
    let doc: SuiteDoc = toml::from_str(text).map_err(|e| ValidationError::Suite(e.to_string()))?;
    let mut seen = HashSet::new();
    let mut cases = Vec::with_capacity(doc.test.len());
    for raw in doc.test {
        if !seen.insert(raw.id.clone()) {
            return Err(ValidationError::Suite(format!("duplicate test id `{}`", raw.id)));
        }
        let stdin = literal_or_file(&raw.id, "stdin", raw.stdin, raw.stdin_file, base)?;
        let expected_stdout = literal_or_file(
            &raw.id,
            "expected_stdout",
            raw.expected_stdout,
            raw.expected_stdout_file,
            base,
        )?;
        cases.push(TestCase {
            id: raw.id,
            args: raw.args,
            stdin,
            expected_stdout,
            expected_exit: raw.expected_exit,
        });
    }
    Ok(cases)
}

pub fn load_suite(path: &Path) -> Result<Vec<TestCase>, ValidationError> {
    let text = fs::read_to_string(path).map_err(|source| ValidationError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_suite(&text, path.parent())
}
