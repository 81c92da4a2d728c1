//! One annotator, one record: call, retry, parse, repair.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crowdlabel_core::{AnnotationFailure, Candidate, Codebook, RawAnnotation, Task, VoteValue};
use serde_json::Value;

use super::{Backend, BackendError, BackendRequest, Prompt};

/// Appended to a prompt when the first reply could not be parsed.
pub const REPAIR_SUFFIX: &str =
    "\n\nYour previous reply was not valid. Reply again with only the JSON object in the required format.\n";

#[derive(Clone)]
pub struct AnnotatorHandle {
    pub id: String,
    pub backend: Arc<dyn Backend>,
    pub max_retries: u32,
}

impl std::fmt::Debug for AnnotatorHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnnotatorHandle").field("id", &self.id).field("max_retries", &self.max_retries).finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no JSON object in reply")]
    NoObject,
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("missing or mistyped field {0}")]
    Field(&'static str),
    #[error("{0}")]
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnnotateOutcome {
    Vote(RawAnnotation),
    /// `transient` failures exhausted their retries and are not cached.
    Failed { failure: AnnotationFailure, transient: bool },
}

/// Parses a reply for `task`. Prose around the JSON object is ignored.
pub fn parse_response(task: Task, text: &str, codebook: &Codebook) -> Result<VoteValue, ParseError> {
    let start = text.find('{').ok_or(ParseError::NoObject)?;
    let end = text.rfind('}').filter(|e| *e > start).ok_or(ParseError::NoObject)?;
    let value: Value = serde_json::from_str(&text[start..=end]).map_err(|e| ParseError::Json(e.to_string()))?;
    let obj = value.as_object().ok_or(ParseError::NoObject)?;
    match task {
        Task::ExtractPair => {
            let pairs = obj.get("pairs").and_then(Value::as_array).ok_or(ParseError::Field("pairs"))?;
            let mut out = Vec::with_capacity(pairs.len());
            for p in pairs {
                let p = p.as_object().ok_or(ParseError::Field("pairs"))?;
                let name = opt_str(p.get("name"), "name")?;
                let explanation = opt_str(p.get("explanation"), "explanation")?;
                out.push(Candidate { name, explanation });
            }
            Ok(VoteValue::Pairs { pairs: out })
        }
        Task::SemanticExplain | Task::VisualClassify | Task::PhoneticClassify => {
            if !obj.contains_key("label") {
                return Err(ParseError::Field("label"));
            }
            let label = opt_str(obj.get("label"), "label")?;
            let channel = task.channel().expect("labelling task");
            codebook.validate_label(channel, label.as_deref()).map_err(|e| ParseError::Label(e.to_string()))?;
            let explanation = opt_str(obj.get("explanation"), "explanation")?;
            Ok(VoteValue::Label { label, explanation })
        }
    }
}

fn opt_str(v: Option<&Value>, field: &'static str) -> Result<Option<String>, ParseError> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) if s.trim().is_empty() => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.trim().to_string())),
        Some(_) => Err(ParseError::Field(field)),
    }
}

enum Call {
    Ok(String),
    Fatal(String),
    Exhausted(String),
}

fn call_with_retries(
    handle: &AnnotatorHandle,
    request: &BackendRequest<'_>,
    retries: &mut u32,
    calls: &AtomicU64,
) -> Call {
    loop {
        calls.fetch_add(1, Ordering::Relaxed);
        match handle.backend.complete(request) {
            Ok(text) => return Call::Ok(text),
            Err(BackendError::Fatal(msg)) => return Call::Fatal(msg),
            Err(BackendError::Transient(msg)) => {
                if *retries >= handle.max_retries {
                    return Call::Exhausted(msg);
                }
                *retries += 1;
            }
        }
    }
}

/// Runs one annotator on one rendered prompt. Backend calls, including
/// retries and the repair attempt, are counted in `calls`.
pub fn annotate(
    handle: &AnnotatorHandle,
    record_id: &str,
    task: Task,
    prompt: &Prompt,
    codebook: &Codebook,
    calls: &AtomicU64,
) -> AnnotateOutcome {
    let failed = |reason: String, raw_text: Option<String>, transient: bool| AnnotateOutcome::Failed {
        failure: AnnotationFailure { annotator_id: handle.id.clone(), reason, raw_text },
        transient,
    };
    let mut retries = 0;
    let request = BackendRequest { record_id, task, prompt };
    let first = match call_with_retries(handle, &request, &mut retries, calls) {
        Call::Ok(t) => t,
        Call::Fatal(m) => return failed(m, None, false),
        Call::Exhausted(m) => return failed(format!("retries exhausted: {m}"), None, true),
    };
    let vote = |value: VoteValue, raw_text: String, repaired: bool, retry_count: u32| {
        AnnotateOutcome::Vote(RawAnnotation { annotator_id: handle.id.clone(), value, raw_text, retry_count, repaired })
    };
    let first_err = match parse_response(task, &first, codebook) {
        Ok(v) => return vote(v, first, false, retries),
        Err(e) => e,
    };
    let repair = Prompt::new(format!("{}{REPAIR_SUFFIX}", prompt.text));
    let request = BackendRequest { record_id, task, prompt: &repair };
    let second = match call_with_retries(handle, &request, &mut retries, calls) {
        Call::Ok(t) => t,
        Call::Fatal(_) | Call::Exhausted(_) => {
            return failed(format!("unparseable: {first_err}"), Some(first), false);
        }
    };
    match parse_response(task, &second, codebook) {
        Ok(v) => vote(v, second, true, retries),
        Err(e) => failed(format!("unparseable after repair: {e}"), Some(second), false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::shipped_codebook;

    #[test]
    fn extract_reply_with_prose_around() {
        let v = parse_response(
            Task::ExtractPair,
            "Sure:\n{\"pairs\":[{\"name\":\"翠花\",\"explanation\":\"\"}]}\nDone.",
            &shipped_codebook(),
        )
        .unwrap();
        assert_eq!(v, VoteValue::Pairs { pairs: vec![Candidate::new(Some("翠花"), None)] });
    }

    #[test]
    fn classify_label_checked_against_channel() {
        let cb = shipped_codebook();
        assert!(parse_response(Task::PhoneticClassify, r#"{"label":"PC1"}"#, &cb).is_ok());
        assert!(parse_response(Task::PhoneticClassify, r#"{"label":null}"#, &cb).is_ok());
        assert!(matches!(parse_response(Task::PhoneticClassify, r#"{"label":"VC1"}"#, &cb), Err(ParseError::Label(_))));
        assert!(matches!(parse_response(Task::VisualClassify, r#"{"x":1}"#, &cb), Err(ParseError::Field("label"))));
        assert!(parse_response(Task::SemanticExplain, r#"{"label":"C1","explanation":"x"}"#, &cb).is_ok());
        assert!(matches!(parse_response(Task::SemanticExplain, r#"{"label":null}"#, &cb), Err(ParseError::Label(_))));
    }

    #[test]
    fn garbage_is_no_object() {
        assert_eq!(parse_response(Task::ExtractPair, "no json", &shipped_codebook()), Err(ParseError::NoObject));
    }
}
