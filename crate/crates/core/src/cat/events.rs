//! Session transcript events and their JSONL log representation.

use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::bank::StimulusKind;

use super::{Answer, Demographics, SessionConfig, TestResult};

/// One step of a session. The ordered list of events is the session's
/// transcript; replaying it against the same bank rebuilds the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "payload", rename_all = "snake_case")]
pub enum SessionEvent {
    Started {
        config: SessionConfig,
        seed: u64,
        schedule: Vec<StimulusKind>,
    },
    Presented {
        item_id: String,
        position: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        option_order: Option<[u8; 4]>,
    },
    Answered {
        item_id: String,
        answer: Answer,
        latency_ms: u64,
    },
    Warned {
        item_id: String,
    },
    Finalized {
        demographics: Option<Demographics>,
        result: TestResult,
    },
}

/// One line of a session event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub ts: DateTime<Utc>,
    pub session_id: String,
    #[serde(flatten)]
    pub event: SessionEvent,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub fn write_record<W: Write>(mut w: W, record: &LogRecord) -> std::io::Result<()> {
    let mut line = serde_json::to_string(record).expect("log record serialises");
    line.push('\n');
    w.write_all(line.as_bytes())
}

/// Reads a JSONL event log. Blank lines are skipped.
pub fn read_log<R: BufRead>(r: R) -> Result<Vec<LogRecord>, LogError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}
