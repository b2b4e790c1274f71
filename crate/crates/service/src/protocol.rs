//! Wire messages. Every message is one JSON object; requests carry an `id`
//! that the matching response echoes.
//!
//! ```text
//! request   {"id": 7, "verb": "picker.eval", "payload": {"expr": "/a/**"}}
//! response  {"type": "response", "id": 7, "ok": true, "payload": {...}}
//!           {"type": "response", "id": 7, "ok": false, "error": {"code": "...", "message": "..."}}
//! event     {"type": "event", "kind": "model-changed", "revision": 12, "payload": {...}}
//! ```

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    #[serde(default)]
    pub id: Value,
    pub verb: String,
    #[serde(default)]
    pub payload: Value,
}

impl Request {
    pub fn new(id: u64, verb: &str, payload: Value) -> Request {
        Request { id: json!(id), verb: verb.to_string(), payload }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: Value,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub payload: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl Response {
    pub fn ok(id: Value, payload: Value) -> Response {
        Response { id, ok: true, payload, error: None }
    }

    pub fn error(id: Value, error: ErrorBody) -> Response {
        Response { id, ok: false, payload: Value::Null, error: Some(error) }
    }

    pub fn code(&self) -> Option<&str> {
        self.error.as_ref().map(|e| e.code.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    ModelChanged,
    SimProgress,
    SimFinished,
    SimFailed,
}

impl EventKind {
    pub const ALL: [EventKind; 4] = [EventKind::ModelChanged, EventKind::SimProgress, EventKind::SimFinished, EventKind::SimFailed];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub revision: u64,
    pub payload: Value,
}

/// Anything the service sends to a client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Outgoing {
    Response(Response),
    Event(Event),
}

impl Outgoing {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }
}
