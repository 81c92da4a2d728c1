//! Fan-out of records over an ensemble, with a response cache.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use crowdlabel_core::{AnnotationFailure, Codebook, RawAnnotation, VoteSet};
use serde::{Deserialize, Serialize};

use crate::io::{read_jsonl, write_jsonl};
use crate::{Error, Result};

use super::{annotate, render_prompt, AnnotateOutcome, AnnotatorHandle, Prompt, PromptContext, SkipReason, TaskSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
enum Cached {
    Vote { vote: RawAnnotation },
    Failure { failure: AnnotationFailure },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CacheLine {
    annotator_id: String,
    prompt_hash: String,
    #[serde(flatten)]
    entry: Cached,
}

/// Outcomes keyed by (annotator id, prompt hash). Reruns with an unchanged
/// prompt and annotator reuse the stored outcome instead of calling the
/// backend again.
#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: Mutex<BTreeMap<(String, String), Cached>>,
}

impl ResponseCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads a cache file; a missing file is an empty cache.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::new());
        }
        let lines: Vec<CacheLine> = read_jsonl(path)?;
        let entries = lines.into_iter().map(|l| ((l.annotator_id, l.prompt_hash), l.entry)).collect();
        Ok(Self { entries: Mutex::new(entries) })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let entries = self.entries.lock().unwrap_or_else(|p| p.into_inner());
        let lines = entries.iter().map(|((a, h), e)| CacheLine {
            annotator_id: a.clone(),
            prompt_hash: h.clone(),
            entry: e.clone(),
        });
        write_jsonl(path, lines)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, annotator: &str, hash: &str) -> Option<Cached> {
        let entries = self.entries.lock().unwrap_or_else(|p| p.into_inner());
        entries.get(&(annotator.to_string(), hash.to_string())).cloned()
    }

    fn put(&self, annotator: &str, hash: &str, entry: Cached) {
        let mut entries = self.entries.lock().unwrap_or_else(|p| p.into_inner());
        entries.insert((annotator.to_string(), hash.to_string()), entry);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnsembleError {
    #[error("an ensemble needs at least two annotators, got {0}")]
    TooSmall(usize),
    #[error("annotator id {0} appears twice")]
    DuplicateAnnotator(String),
    #[error("record id {0} appears twice")]
    DuplicateRecord(String),
}

impl From<EnsembleError> for Error {
    fn from(e: EnsembleError) -> Self {
        Error::Config(e.to_string())
    }
}

/// A record that was not annotated.
pub type Skipped = SkipReason;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub records: usize,
    pub backend_calls: u64,
    pub cache_hits: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsembleOutput {
    /// One vote set per rendered record, ordered by record id.
    pub vote_sets: Vec<VoteSet>,
    pub skipped: Vec<Skipped>,
    pub stats: RunStats,
}

/// Sends every record to every annotator, at most `max_in_flight` calls at
/// a time. Results do not depend on scheduling.
pub fn run_ensemble(
    annotators: &[AnnotatorHandle],
    spec: &TaskSpec,
    contexts: &[PromptContext],
    codebook: &Codebook,
    cache: Option<&ResponseCache>,
    max_in_flight: usize,
) -> Result<EnsembleOutput, EnsembleError> {
    if annotators.len() < 2 {
        return Err(EnsembleError::TooSmall(annotators.len()));
    }
    let mut ids = BTreeSet::new();
    for a in annotators {
        if !ids.insert(a.id.as_str()) {
            return Err(EnsembleError::DuplicateAnnotator(a.id.clone()));
        }
    }
    let mut seen = BTreeSet::new();
    for c in contexts {
        if !seen.insert(c.record_id.as_str()) {
            return Err(EnsembleError::DuplicateRecord(c.record_id.clone()));
        }
    }

    let mut rendered: Vec<(&PromptContext, Prompt)> = Vec::new();
    let mut skipped = Vec::new();
    for ctx in contexts {
        match render_prompt(spec, ctx, codebook) {
            Ok(p) => rendered.push((ctx, p)),
            Err(s) => skipped.push(s),
        }
    }
    rendered.sort_by(|a, b| a.0.record_id.cmp(&b.0.record_id));
    skipped.sort_by(|a, b| a.record_id.cmp(&b.record_id));

    let jobs = rendered.len() * annotators.len();
    let next = AtomicUsize::new(0);
    let calls = AtomicU64::new(0);
    let hits = AtomicU64::new(0);
    let results: Mutex<Vec<Option<Cached>>> = Mutex::new(vec![None; jobs]);
    let workers = max_in_flight.max(1).min(jobs.max(1));

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                if j >= jobs {
                    break;
                }
                let (ctx, prompt) = &rendered[j / annotators.len()];
                let handle = &annotators[j % annotators.len()];
                let entry = match cache.and_then(|c| c.get(&handle.id, &prompt.hash)) {
                    Some(hit) => {
                        hits.fetch_add(1, Ordering::Relaxed);
                        hit
                    }
                    None => {
                        let outcome = annotate(handle, &ctx.record_id, spec.task, prompt, codebook, &calls);
                        let (entry, cacheable) = match outcome {
                            AnnotateOutcome::Vote(vote) => (Cached::Vote { vote }, true),
                            AnnotateOutcome::Failed { failure, transient } => (Cached::Failure { failure }, !transient),
                        };
                        if cacheable {
                            if let Some(c) = cache {
                                c.put(&handle.id, &prompt.hash, entry.clone());
                            }
                        }
                        entry
                    }
                };
                results.lock().unwrap_or_else(|p| p.into_inner())[j] = Some(entry);
            });
        }
    });

    let results = results.into_inner().unwrap_or_else(|p| p.into_inner());
    let mut vote_sets = Vec::with_capacity(rendered.len());
    for (i, (ctx, _)) in rendered.iter().enumerate() {
        let mut votes = Vec::new();
        let mut failures = Vec::new();
        for r in &results[i * annotators.len()..(i + 1) * annotators.len()] {
            match r.clone().expect("every job ran") {
                Cached::Vote { vote } => votes.push(vote),
                Cached::Failure { failure } => failures.push(failure),
            }
        }
        vote_sets.push(VoteSet::new(ctx.record_id.clone(), spec.task, votes, failures));
    }
    Ok(EnsembleOutput {
        stats: RunStats {
            records: vote_sets.len(),
            backend_calls: calls.load(Ordering::Relaxed),
            cache_hits: hits.load(Ordering::Relaxed),
        },
        vote_sets,
        skipped,
    })
}
