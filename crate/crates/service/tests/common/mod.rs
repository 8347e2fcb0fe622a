#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use vocabsize_core::bank::demo_bank;
use vocabsize_core::cat::{SessionState, Stage};
use vocabsize_core::{Answer, Demographics, ItemBank, Session, SessionConfig};
use vocabsize_service::{BankStatus, Store};

/// Fixed answer script: the answer depends only on the stage and position.
pub fn script(stage: Stage, position: usize) -> Answer {
    match stage {
        Stage::BinaryDecision if position % 3 == 2 => Answer::DontKnow,
        Stage::BinaryDecision => Answer::Know,
        Stage::Definition => Answer::Choice((position % 4) as u8),
    }
}

pub fn latency(position: usize) -> u64 {
    800 + 37 * position as u64
}

pub fn answer_body(item_id: &str, answer: Answer, latency_ms: u64) -> Value {
    match answer {
        Answer::Know => json!({ "item_id": item_id, "answer": "know", "latency_ms": latency_ms }),
        Answer::DontKnow => json!({ "item_id": item_id, "answer": "dont_know", "latency_ms": latency_ms }),
        Answer::Choice(i) => json!({ "item_id": item_id, "choice_index": i, "latency_ms": latency_ms }),
    }
}

pub fn stage_of(payload: &Value) -> Stage {
    serde_json::from_value(payload["stage"].clone()).expect("stage field")
}

pub const DEMOGRAPHICS: Demographics = Demographics { age: 34, native: true, honest: true };

/// Runs the scripted session directly on the engine.
pub fn drive_library(bank: &ItemBank, seed: u64, demographics: Demographics) -> Session {
    let mut s = Session::start("library", bank, SessionConfig::default().seeded(seed)).unwrap();
    while matches!(s.state(), SessionState::InProgress | SessionState::AwaitingDefinition) {
        let p = s.next_item(bank).unwrap();
        let a = script(p.stage, p.position);
        s.submit_response(bank, &p.item_id, a, latency(p.position)).unwrap();
    }
    s.finalize(bank, Some(demographics)).unwrap();
    s
}

pub fn open_store(dir: &Path) -> Arc<Store> {
    let config = SessionConfig::default();
    Arc::new(Store::open(dir, BankStatus::check(demo_bank(), &config), config).unwrap())
}

pub struct Api {
    pub app: Router,
}

impl Api {
    pub fn new(store: Arc<Store>) -> Self {
        Api { app: vocabsize_service::router(store, &[]).unwrap() }
    }

    pub async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let body = body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty);
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body)
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = axum::body::to_bytes(resp.into_body(), 1 << 20).await.unwrap();
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, value)
    }

    pub async fn create(&self, seed: u64) -> String {
        let (status, v) = self.call("POST", "/api/v1/sessions", Some(json!({ "seed": seed }))).await;
        assert_eq!(status, StatusCode::CREATED, "{v}");
        v["session_id"].as_str().unwrap().to_string()
    }

    /// Answers scripted items until `stop_after` answers have been
    /// acknowledged or the session awaits demographics.
    pub async fn drive(&self, id: &str, stop_after: Option<usize>) -> usize {
        let mut answered = 0;
        loop {
            if stop_after == Some(answered) {
                return answered;
            }
            let (status, next) = self.call("GET", &format!("/api/v1/sessions/{id}/next"), None).await;
            if status == StatusCode::CONFLICT {
                return answered;
            }
            assert_eq!(status, StatusCode::OK, "{next}");
            let position = next["position"].as_u64().unwrap() as usize;
            let answer = script(stage_of(&next), position);
            let body = answer_body(next["item_id"].as_str().unwrap(), answer, latency(position));
            let (status, ack) = self.call("POST", &format!("/api/v1/sessions/{id}/answers"), Some(body)).await;
            assert_eq!(status, StatusCode::OK, "{ack}");
            answered += 1;
        }
    }

    pub async fn finish(&self, id: &str, d: Demographics) -> Value {
        let body = json!({ "age": d.age, "native": d.native, "honest": d.honest });
        let (status, v) = self.call("POST", &format!("/api/v1/sessions/{id}/demographics"), Some(body)).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        let (status, v) = self.call("GET", &format!("/api/v1/sessions/{id}/result"), None).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        v
    }
}

/// Minimal blocking HTTP/1.1 client for talking to a spawned server.
pub fn http(addr: &str, method: &str, path: &str, body: Option<&Value>) -> (u16, Value) {
    let mut stream = TcpStream::connect(addr).unwrap();
    let body = body.map(Value::to_string).unwrap_or_default();
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).unwrap();
    let text = String::from_utf8(raw).unwrap();
    let (head, payload) = text.split_once("\r\n\r\n").unwrap();
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    let value = if payload.is_empty() { Value::Null } else { serde_json::from_str(payload).unwrap() };
    (status, value)
}

/// Starts `vocabsize serve` on a free port; returns the child and its address.
pub fn spawn_server(data_dir: &Path) -> (Child, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_vocabsize"))
        .args(["serve", "--demo-bank", "--port", "0", "--data-dir"])
        .arg(data_dir)
        .env_remove("VOCABSIZE_BANK")
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("listening line").to_string();
    (child, addr)
}
