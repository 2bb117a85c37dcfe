//! Append-only JSON Lines log of every model query.
//!
//! The first line is a `run` header carrying the run configuration; every
//! following line is one `query` record, one per provider attempt.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Conversation, RefinerError};

pub const TRANSCRIPT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub function: String,
    pub node: usize,
    pub model_id: String,
    pub seed: u64,
    /// Zero for the first try, then one per retry.
    pub attempt: u32,
    pub digest: String,
    pub conversation: Conversation,
    pub response: Option<String>,
    pub error: Option<String>,
    #[serde(default)]
    pub retriable: bool,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Run { schema_version: u32, config: Value },
    Query(Box<QueryRecord>),
}

/// Single-writer transcript sink; safe to share across threads.
pub struct Transcript {
    out: Mutex<Box<dyn Write + Send>>,
    queries: Mutex<u64>,
}

impl Transcript {
    pub fn new(out: Box<dyn Write + Send>, config: Value) -> Result<Self, RefinerError> {
        let t = Self {
            out: Mutex::new(out),
            queries: Mutex::new(0),
        };
        t.write(&Line::Run {
            schema_version: TRANSCRIPT_SCHEMA_VERSION,
            config,
        })?;
        Ok(t)
    }

    pub fn create(path: &Path, config: Value) -> Result<Self, RefinerError> {
        let file = File::create(path).map_err(|e| RefinerError::Transcript(format!("{}: {e}", path.display())))?;
        Self::new(Box::new(BufWriter::new(file)), config)
    }

    pub fn record(&self, record: &QueryRecord) -> Result<(), RefinerError> {
        self.write(&Line::Query(Box::new(record.clone())))?;
        *self.queries.lock().expect("transcript poisoned") += 1;
        Ok(())
    }

    /// Query records written so far.
    pub fn query_count(&self) -> u64 {
        *self.queries.lock().expect("transcript poisoned")
    }

    fn write(&self, line: &Line) -> Result<(), RefinerError> {
        let mut text = serde_json::to_string(line).map_err(|e| RefinerError::Transcript(e.to_string()))?;
        text.push('\n');
        let mut out = self.out.lock().expect("transcript poisoned");
        out.write_all(text.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| RefinerError::Transcript(e.to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TranscriptContents {
    pub schema_version: Option<u32>,
    pub config: Option<Value>,
    pub queries: Vec<QueryRecord>,
}

pub fn parse_transcript(text: &str) -> Result<TranscriptContents, RefinerError> {
    parse_lines(BufReader::new(text.as_bytes()))
}

pub fn read_transcript(path: &Path) -> Result<TranscriptContents, RefinerError> {
    let file = File::open(path).map_err(|e| RefinerError::Transcript(format!("{}: {e}", path.display())))?;
    parse_lines(BufReader::new(file))
}

fn parse_lines(reader: impl BufRead) -> Result<TranscriptContents, RefinerError> {
    let mut out = TranscriptContents::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| RefinerError::Transcript(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line =
            serde_json::from_str(&line).map_err(|e| RefinerError::Transcript(format!("line {}: {e}", i + 1)))?;
        match parsed {
            Line::Run { schema_version, config } => {
                if out.config.is_some() {
                    return Err(RefinerError::Transcript(format!("line {}: second run header", i + 1)));
                }
                out.schema_version = Some(schema_version);
                out.config = Some(config);
            }
            Line::Query(q) => out.queries.push(*q),
        }
    }
    Ok(out)
}
