//! Model backends. A backend turns a prompt into raw text and knows nothing
//! about parsing.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use crowdlabel_core::Task;
use serde::{Deserialize, Serialize};

use crate::io::read_json;
use crate::Result;

use super::Prompt;

/// What a backend is asked to complete.
#[derive(Debug, Clone, Copy)]
pub struct BackendRequest<'a> {
    pub record_id: &'a str,
    pub task: Task,
    pub prompt: &'a Prompt,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: timeouts, 5xx, rate limiting, dropped connections.
    #[error("transient backend error: {0}")]
    Transient(String),
    #[error("backend error: {0}")]
    Fatal(String),
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &BackendRequest<'_>) -> Result<String, BackendError>;
}

/// JSON-over-HTTP completion endpoint.
///
/// Sends `{"prompt", "task", "record_id", "settings"}` and accepts either a
/// JSON object with a string `text` field or a raw text body.
pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    settings: serde_json::Value,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, settings: serde_json::Value, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self { endpoint: endpoint.into(), api_key, settings, agent }
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &BackendRequest<'_>) -> Result<String, BackendError> {
        let body = serde_json::json!({
            "prompt": request.prompt.text,
            "task": request.task,
            "record_id": request.record_id,
            "settings": self.settings,
        });
        let mut req = self.agent.post(&self.endpoint).header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body.to_string()).map_err(classify_transport)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(classify_transport)?;
        match status {
            200..=299 => Ok(unwrap_text(text)),
            408 | 429 | 500..=599 => Err(BackendError::Transient(format!("HTTP {status}"))),
            _ => Err(BackendError::Fatal(format!("HTTP {status}: {}", truncate(&text, 200)))),
        }
    }
}

fn classify_transport(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
            BackendError::Transient(e.to_string())
        }
        other => BackendError::Fatal(other.to_string()),
    }
}

fn unwrap_text(body: String) -> String {
    match serde_json::from_str::<serde_json::Value>(&body) {
        Ok(serde_json::Value::Object(map)) => match map.get("text") {
            Some(serde_json::Value::String(s)) => s.clone(),
            _ => body,
        },
        _ => body,
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Reply script for one key: a single reply, or a sequence consumed one per
/// call with the last entry repeating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedReply {
    One(String),
    Sequence(Vec<String>),
}

/// Fixture for [`ScriptedBackend`].
///
/// Keys are tried in order: prompt hash, `task:record_id`, `record_id`.
/// Replies `!timeout` and `!fail` simulate transient and fatal errors.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedFixture {
    #[serde(default)]
    pub responses: BTreeMap<String, ScriptedReply>,
    #[serde(default)]
    pub default: Option<String>,
}

/// Offline backend replaying canned responses.
pub struct ScriptedBackend {
    fixture: ScriptedFixture,
    calls: Mutex<BTreeMap<String, usize>>,
}

impl ScriptedBackend {
    pub fn new(fixture: ScriptedFixture) -> Self {
        Self { fixture, calls: Mutex::new(BTreeMap::new()) }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(read_json(path)?))
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &BackendRequest<'_>) -> Result<String, BackendError> {
        let task_key = format!("{}:{}", request.task.as_str(), request.record_id);
        let keys = [request.prompt.hash.as_str(), task_key.as_str(), request.record_id];
        let found = keys.iter().find_map(|k| self.fixture.responses.get(*k).map(|r| (*k, r)));
        let reply = match found {
            Some((_, ScriptedReply::One(s))) => s.clone(),
            Some((key, ScriptedReply::Sequence(seq))) => {
                let mut calls = self.calls.lock().unwrap_or_else(|p| p.into_inner());
                let n = calls.entry(key.to_string()).or_insert(0);
                let i = (*n).min(seq.len().saturating_sub(1));
                *n += 1;
                seq.get(i).cloned().ok_or_else(|| BackendError::Fatal(format!("empty script for {key}")))?
            }
            None => self
                .fixture
                .default
                .clone()
                .ok_or_else(|| BackendError::Fatal(format!("no scripted reply for {}", request.record_id)))?,
        };
        match reply.as_str() {
            "!timeout" => Err(BackendError::Transient("scripted timeout".into())),
            "!fail" => Err(BackendError::Fatal("scripted failure".into())),
            _ => Ok(reply),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req<'a>(record: &'a str, prompt: &'a Prompt) -> BackendRequest<'a> {
        BackendRequest { record_id: record, task: Task::ExtractPair, prompt }
    }

    #[test]
    fn sequence_advances_then_repeats() {
        let mut fx = ScriptedFixture::default();
        fx.responses.insert("r1".into(), ScriptedReply::Sequence(vec!["!timeout".into(), "ok".into()]));
        let b = ScriptedBackend::new(fx);
        let p = Prompt::new("x".into());
        assert!(matches!(b.complete(&req("r1", &p)), Err(BackendError::Transient(_))));
        assert_eq!(b.complete(&req("r1", &p)).unwrap(), "ok");
        assert_eq!(b.complete(&req("r1", &p)).unwrap(), "ok");
    }

    #[test]
    fn hash_key_wins_over_record_key() {
        let p = Prompt::new("x".into());
        let mut fx = ScriptedFixture::default();
        fx.responses.insert("r1".into(), ScriptedReply::One("by record".into()));
        fx.responses.insert(p.hash.clone(), ScriptedReply::One("by hash".into()));
        let b = ScriptedBackend::new(fx);
        assert_eq!(b.complete(&req("r1", &p)).unwrap(), "by hash");
    }

    #[test]
    fn missing_reply_is_fatal_without_default() {
        let b = ScriptedBackend::new(ScriptedFixture::default());
        let p = Prompt::new("x".into());
        assert!(matches!(b.complete(&req("r9", &p)), Err(BackendError::Fatal(_))));
    }

    #[test]
    fn json_text_field_is_unwrapped() {
        assert_eq!(unwrap_text(r#"{"text":"{\"label\":null}"}"#.into()), r#"{"label":null}"#);
        assert_eq!(unwrap_text("plain".into()), "plain");
        assert_eq!(unwrap_text(r#"{"label":"PC1"}"#.into()), r#"{"label":"PC1"}"#);
    }
}
