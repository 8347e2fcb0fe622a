//! File-backed session store.
//!
//! Each session is an append-only JSONL event log under `sessions/`. An
//! operation runs on a copy of the session, its new events are appended and
//! synced, and only then does the in-memory session advance. Finished results
//! are compacted into `results.csv` by writing a temporary file and renaming
//! it over the old one.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use vocabsize_core::cat::{write_record, CatError, LogRecord, Presentation, SessionEvent, SessionState, SubmitOutcome};
use vocabsize_core::study::{write_records, StudyRecord};
use vocabsize_core::{Answer, Demographics, ItemBank, Session, SessionConfig, TestResult};

pub const MAX_AGE: i64 = 120;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown session {0:?}")]
    NotFound(String),
    #[error("no item bank is available: {}", .0.join("; "))]
    Unavailable(Vec<String>),
    #[error(transparent)]
    Cat(#[from] CatError),
    #[error("{0}")]
    Invalid(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> StoreError {
    let context = context.into();
    move |source| StoreError::Io { context, source }
}

/// The bank a server runs with, or why it cannot run sessions.
#[derive(Debug, Clone)]
pub enum BankStatus {
    Ready(Arc<ItemBank>),
    Unavailable(Vec<String>),
}

impl BankStatus {
    /// Checks `bank` against the composition of `config`.
    pub fn check(bank: ItemBank, config: &SessionConfig) -> Self {
        match vocabsize_core::bank::validate_for_administration(&bank, &config.composition) {
            Ok(()) if bank.conversion.is_none() => {
                BankStatus::Unavailable(vec!["bank has no conversion coefficients".into()])
            }
            Ok(()) => BankStatus::Ready(Arc::new(bank)),
            Err(d) => BankStatus::Unavailable(d.iter().map(ToString::to_string).collect()),
        }
    }
}

struct Entry {
    session: Session,
    started_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredResult {
    pub record: StudyRecord,
    pub trusted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: String,
    pub state: SessionState,
    /// Fully answered items.
    pub position: usize,
    pub total_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAggregate {
    pub n: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation; absent below two results.
    pub sd: Option<f64>,
    /// Sorted trusted vocabulary sizes.
    pub values: Vec<u32>,
}

impl GroupAggregate {
    fn from_values(mut values: Vec<u32>) -> Self {
        values.sort_unstable();
        let n = values.len();
        let mean = (n > 0).then(|| values.iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64);
        let sd = mean.filter(|_| n > 1).map(|m| {
            let ss: f64 = values.iter().map(|&v| (f64::from(v) - m).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        GroupAggregate { n, mean, sd, values }
    }
}

/// Trusted results per nativeness group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub native: GroupAggregate,
    pub nonnative: GroupAggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultView {
    #[serde(flatten)]
    pub result: TestResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percentile_native: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percentile_nonnative: Option<f64>,
}

/// Share of `others` strictly below `score`; absent without reference data.
pub fn percentile(score: u32, others: impl IntoIterator<Item = u32>) -> Option<f64> {
    let (below, n) = others
        .into_iter()
        .fold((0usize, 0usize), |(b, n), v| (b + usize::from(v < score), n + 1));
    (n > 0).then(|| below as f64 / n as f64)
}

pub struct Store {
    dir: PathBuf,
    bank: BankStatus,
    config: SessionConfig,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    results: RwLock<BTreeMap<String, StoredResult>>,
    compaction: Mutex<()>,
    warnings: Vec<String>,
}

impl Store {
    /// Opens `dir`, replaying every session log found there. Logs that fail
    /// to replay are skipped and reported by [`Store::warnings`]; a torn final
    /// line is dropped and truncated away.
    pub fn open(dir: impl Into<PathBuf>, bank: BankStatus, config: SessionConfig) -> Result<Store, StoreError> {
        let dir = dir.into();
        config.validate()?;
        let sessions_dir = dir.join("sessions");
        fs::create_dir_all(&sessions_dir).map_err(io_err(format!("creating {}", sessions_dir.display())))?;
        let mut store = Store {
            dir,
            bank,
            config,
            sessions: RwLock::new(HashMap::new()),
            results: RwLock::new(BTreeMap::new()),
            compaction: Mutex::new(()),
            warnings: Vec::new(),
        };
        let BankStatus::Ready(bank) = store.bank.clone() else {
            return Ok(store);
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(&sessions_dir)
            .map_err(io_err("listing sessions"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut sessions = HashMap::new();
        let mut results = BTreeMap::new();
        for path in paths {
            match recover(&path, &bank) {
                Ok((entry, finished_at)) => {
                    let id = entry.session.id().to_string();
                    if let Some(at) = finished_at {
                        if let Some(r) = stored_result(&entry, at) {
                            results.insert(id.clone(), r);
                        }
                    }
                    sessions.insert(id, Arc::new(Mutex::new(entry)));
                }
                Err(e) => store.warnings.push(format!("{}: {e}", path.display())),
            }
        }
        store.sessions = RwLock::new(sessions);
        store.results = RwLock::new(results);
        store.compact()?;
        Ok(store)
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn bank(&self) -> &BankStatus {
        &self.bank
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map lock").len()
    }

    fn ready_bank(&self) -> Result<Arc<ItemBank>, StoreError> {
        match &self.bank {
            BankStatus::Ready(b) => Ok(Arc::clone(b)),
            BankStatus::Unavailable(d) => Err(StoreError::Unavailable(d.clone())),
        }
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.dir.join("sessions").join(format!("{id}.jsonl"))
    }

    pub fn results_path(&self) -> PathBuf {
        self.dir.join("results.csv")
    }

    /// Starts and persists a session. `seed` fixes item selection.
    pub fn create(&self, seed: Option<u64>) -> Result<SessionStatus, StoreError> {
        let bank = self.ready_bank()?;
        let config = match seed {
            Some(s) => self.config.seeded(s),
            None => self.config,
        };
        let id = uuid::Uuid::new_v4().to_string();
        let session = Session::start(id.clone(), &bank, config)?;
        let now = Utc::now();
        append(&self.log_path(&id), &id, session.transcript(), now, true)?;
        let status = status_of(&session);
        self.sessions
            .write()
            .expect("session map lock")
            .insert(id, Arc::new(Mutex::new(Entry { session, started_at: now })));
        Ok(status)
    }

    fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, StoreError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    /// Runs `op` on a copy of the session and commits it once its new events
    /// are durable.
    fn apply<T>(
        &self,
        id: &str,
        op: impl FnOnce(&mut Session, &ItemBank) -> Result<T, CatError>,
    ) -> Result<(T, DateTime<Utc>), StoreError> {
        let bank = self.ready_bank()?;
        let entry = self.entry(id)?;
        let mut entry = entry.lock().expect("session lock");
        let mut next = entry.session.clone();
        let out = op(&mut next, &bank)?;
        let now = Utc::now();
        let fresh = &next.transcript()[entry.session.transcript().len()..];
        if !fresh.is_empty() {
            append(&self.log_path(id), id, fresh, now, false)?;
        }
        entry.session = next;
        Ok((out, now))
    }

    pub fn status(&self, id: &str) -> Result<SessionStatus, StoreError> {
        let entry = self.entry(id)?;
        let entry = entry.lock().expect("session lock");
        Ok(status_of(&entry.session))
    }

    pub fn next(&self, id: &str) -> Result<Presentation, StoreError> {
        Ok(self.apply(id, |s, bank| s.next_item(bank))?.0)
    }

    pub fn answer(&self, id: &str, item_id: &str, answer: Answer, latency_ms: u64) -> Result<SubmitOutcome, StoreError> {
        Ok(self.apply(id, |s, bank| s.submit_response(bank, item_id, answer, latency_ms))?.0)
    }

    /// Finalises the session. Ages outside `0..=120` are rejected.
    pub fn demographics(&self, id: &str, age: i64, native: bool, honest: bool) -> Result<TestResult, StoreError> {
        if !(0..=MAX_AGE).contains(&age) {
            return Err(StoreError::Invalid(format!("age must be between 0 and {MAX_AGE}, got {age}")));
        }
        let demographics = Demographics { age: age as u32, native, honest };
        let entry = self.entry(id)?;
        let (result, at) = self.apply(id, |s, bank| s.finalize(bank, Some(demographics)))?;
        let stored = {
            let entry = entry.lock().expect("session lock");
            stored_result(&entry, at).expect("finalised session with demographics")
        };
        self.results.write().expect("results lock").insert(id.to_string(), stored);
        self.compact()?;
        Ok(result)
    }

    pub fn result(&self, id: &str) -> Result<ResultView, StoreError> {
        let entry = self.entry(id)?;
        let result = {
            let entry = entry.lock().expect("session lock");
            match entry.session.result() {
                Some(r) => r.clone(),
                None => {
                    return Err(CatError::WrongState { op: "result", state: entry.session.state() }.into());
                }
            }
        };
        let results = self.results.read().expect("results lock");
        let others = |native: bool| {
            results
                .iter()
                .filter(move |(k, r)| k.as_str() != id && r.trusted && r.record.native == native)
                .map(|(_, r)| r.record.vocab_words)
        };
        Ok(ResultView {
            percentile_native: percentile(result.vocab_words, others(true)),
            percentile_nonnative: percentile(result.vocab_words, others(false)),
            result,
        })
    }

    /// Aggregates over a snapshot of the trusted results.
    pub fn stats(&self) -> AggregateStats {
        let snapshot: Vec<StoredResult> = self
            .results
            .read()
            .expect("results lock")
            .values()
            .filter(|r| r.trusted)
            .cloned()
            .collect();
        let group = |native: bool| {
            GroupAggregate::from_values(
                snapshot
                    .iter()
                    .filter(|r| r.record.native == native)
                    .map(|r| r.record.vocab_words)
                    .collect(),
            )
        };
        AggregateStats { native: group(true), nonnative: group(false) }
    }

    /// Every finished result with demographics, trusted or not.
    pub fn results(&self) -> Vec<StoredResult> {
        self.results.read().expect("results lock").values().cloned().collect()
    }

    /// The session's transcript as stored in memory.
    pub fn transcript(&self, id: &str) -> Result<Vec<SessionEvent>, StoreError> {
        let entry = self.entry(id)?;
        let entry = entry.lock().expect("session lock");
        Ok(entry.session.transcript().to_vec())
    }

    fn compact(&self) -> Result<(), StoreError> {
        let _guard = self.compaction.lock().expect("compaction lock");
        let records: Vec<StudyRecord> = self.results().into_iter().map(|r| r.record).collect();
        let path = self.results_path();
        let tmp = path.with_extension("csv.tmp");
        let file = File::create(&tmp).map_err(io_err(format!("creating {}", tmp.display())))?;
        let mut w = BufWriter::new(file);
        write_records(&mut w, &records).map_err(|e| StoreError::Invalid(e.to_string()))?;
        let file = w.into_inner().map_err(|e| StoreError::Io {
            context: format!("writing {}", tmp.display()),
            source: e.into_error(),
        })?;
        file.sync_all().map_err(io_err(format!("syncing {}", tmp.display())))?;
        fs::rename(&tmp, &path).map_err(io_err(format!("renaming onto {}", path.display())))
    }
}

fn status_of(session: &Session) -> SessionStatus {
    SessionStatus {
        session_id: session.id().to_string(),
        state: session.state(),
        position: session.position(),
        total_items: session.config().total_items,
    }
}

fn stored_result(entry: &Entry, finished_at: DateTime<Utc>) -> Option<StoredResult> {
    let result = entry.session.result()?;
    let d = result.demographics?;
    Some(StoredResult {
        record: StudyRecord {
            session_id: entry.session.id().to_string(),
            vocab_words: result.vocab_words,
            theta: result.theta,
            se: result.se,
            attention: result.attention_index,
            duration_s: (finished_at - entry.started_at).num_milliseconds() as f64 / 1000.0,
            age: d.age,
            native: d.native,
            honest: d.honest,
            finished_at,
        },
        trusted: result.trusted,
    })
}

fn append(path: &Path, id: &str, events: &[SessionEvent], ts: DateTime<Utc>, create: bool) -> Result<(), StoreError> {
    let mut buf = Vec::new();
    for event in events {
        let record = LogRecord { ts, session_id: id.to_string(), event: event.clone() };
        write_record(&mut buf, &record).map_err(io_err("encoding log record"))?;
    }
    let mut file = OpenOptions::new()
        .append(true)
        .create_new(create)
        .open(path)
        .map_err(io_err(format!("opening {}", path.display())))?;
    file.write_all(&buf).map_err(io_err(format!("appending to {}", path.display())))?;
    file.sync_data().map_err(io_err(format!("syncing {}", path.display())))
}

/// Rebuilds one session from its log, returning the finalisation time if
/// the log has one.
fn recover(path: &Path, bank: &ItemBank) -> Result<(Entry, Option<DateTime<Utc>>), StoreError> {
    let text = fs::read(path).map_err(io_err("reading log"))?;
    let mut records: Vec<LogRecord> = Vec::new();
    let mut good_len = 0;
    let mut offset = 0;
    let lines: Vec<&[u8]> = text.split_inclusive(|&b| b == b'\n').collect();
    for (i, line) in lines.iter().enumerate() {
        offset += line.len();
        let complete = line.ends_with(b"\n");
        let body = line.trim_ascii();
        if body.is_empty() {
            if complete {
                good_len = offset;
            }
            continue;
        }
        match serde_json::from_slice::<LogRecord>(body) {
            Ok(r) if complete => {
                records.push(r);
                good_len = offset;
            }
            Ok(_) | Err(_) if i + 1 == lines.len() => break,
            Ok(_) => unreachable!("only the last line can lack a newline"),
            Err(e) => return Err(StoreError::Invalid(format!("line {}: {e}", i + 1))),
        }
    }
    if good_len < text.len() {
        let file = OpenOptions::new().write(true).open(path).map_err(io_err("opening log"))?;
        file.set_len(good_len as u64).map_err(io_err("truncating torn line"))?;
        file.sync_all().map_err(io_err("syncing log"))?;
    }
    let first = records.first().ok_or_else(|| StoreError::Invalid("empty log".into()))?;
    let id = first.session_id.clone();
    let started_at = first.ts;
    if records.iter().any(|r| r.session_id != id) {
        return Err(StoreError::Invalid("log mixes session ids".into()));
    }
    let finished_at = records
        .iter()
        .find(|r| matches!(r.event, SessionEvent::Finalized { .. }))
        .map(|r| r.ts);
    let session = Session::replay(id, bank, records.iter().map(|r| &r.event))?;
    Ok((Entry { session, started_at }, finished_at))
}
