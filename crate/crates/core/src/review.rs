//! Human review queue and the merge of resolutions into the final dataset.
//!
//! The queue is a pure state machine; the review service wraps it with HTTP
//! and an append-only event log. Replaying the log into a fresh queue yields
//! the same state, and [`merge_final_dataset`] is independent of resolution
//! arrival order.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::codebook::{Channel, Codebook, LabelRejection};
use crate::consensus::ConsensusResult;
use crate::corpus::{pair_id, Candidate, PairRecord, Provenance};
use crate::vote::{Task, VoteSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Resolved,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewReason {
    LowConsistency,
    EnsembleFailed,
}

/// What a reviewer needs to see besides the votes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReviewContext {
    pub comment_text: Option<String>,
    pub post_url: Option<String>,
    pub foreign_name: Option<String>,
    pub image_description: Option<String>,
}

/// A flagged record awaiting adjudication.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub record_id: String,
    pub task: Task,
    pub votes: VoteSet,
    pub provisional: Option<ConsensusResult>,
    #[serde(default)]
    pub context: ReviewContext,
    pub reason: ReviewReason,
    pub status: ReviewStatus,
}

impl ReviewItem {
    /// Consistency used for queue ordering; failed ensembles sort first.
    pub fn consistency(&self) -> u8 {
        self.provisional.as_ref().map_or(0, |p| p.consistency)
    }

    pub fn with_context(mut self, context: ReviewContext) -> Self {
        self.context = context;
        self
    }
}

/// A reviewer's adjudication. It supersedes the provisional label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub item_id: String,
    pub reviewer_id: String,
    pub final_name: Option<String>,
    pub final_explanation: Option<String>,
    #[serde(default)]
    pub final_labels: BTreeMap<Channel, String>,
    /// Error-table row the correction corresponds to (1–8).
    #[serde(default)]
    pub rule_tag: Option<u8>,
    /// UTC seconds since the epoch.
    pub decided_at: i64,
    /// Further pairs when the comment proposed more than one name.
    #[serde(default)]
    pub additional_pairs: Vec<Candidate>,
}

impl Resolution {
    /// True if both carry the same decision, ignoring when it was made.
    pub fn same_decision(&self, other: &Resolution) -> bool {
        self.item_id == other.item_id
            && self.reviewer_id == other.reviewer_id
            && self.final_name == other.final_name
            && self.final_explanation == other.final_explanation
            && self.final_labels == other.final_labels
            && self.rule_tag == other.rule_tag
            && self.additional_pairs == other.additional_pairs
    }

    /// Pairs this resolution produces, in order, with empty candidates
    /// dropped.
    pub fn candidates(&self) -> Vec<Candidate> {
        core::iter::once(Candidate::new(self.final_name.as_deref(), self.final_explanation.as_deref()))
            .chain(self.additional_pairs.iter().map(|c| Candidate::new(c.name.as_deref(), c.explanation.as_deref())))
            .filter(|c| !c.is_empty())
            .collect()
    }
}

/// Event stored in the append-only review log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ReviewEvent {
    Resolved { resolution: Resolution },
    Skipped { item_id: String, at: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReviewError {
    #[error("item {0} already queued")]
    DuplicateItem(String),
    #[error("no review item {0}")]
    NotFound(String),
    #[error("item {item_id} already resolved differently")]
    Conflict { item_id: String, existing: Option<Box<Resolution>>, status: ReviewStatus },
    #[error("invalid label: {0}")]
    InvalidLabel(#[from] LabelRejection),
    #[error("rule tag {0} is not an error-table row (1-8)")]
    InvalidRuleTag(u8),
}

/// Acknowledgment of a resolution or skip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ack {
    /// State changed; the caller should persist the event.
    Applied,
    /// Identical repeat; nothing changed.
    Unchanged,
}

/// Progress counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub total: usize,
    pub resolved: usize,
    pub skipped: usize,
    pub pending: usize,
}

/// In-memory review queue.
#[derive(Debug, Clone, Default)]
pub struct ReviewQueue {
    items: BTreeMap<String, ReviewItem>,
    resolutions: BTreeMap<String, Resolution>,
}

impl ReviewQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds items as pending. Rejects the whole batch if any id is already
    /// queued or repeated within the batch.
    pub fn enqueue(&mut self, items: Vec<ReviewItem>) -> Result<usize, ReviewError> {
        let mut seen = BTreeSet::new();
        for item in &items {
            if self.items.contains_key(&item.item_id) || !seen.insert(item.item_id.as_str()) {
                return Err(ReviewError::DuplicateItem(item.item_id.clone()));
            }
        }
        let n = items.len();
        for mut item in items {
            item.status = ReviewStatus::Pending;
            self.items.insert(item.item_id.clone(), item);
        }
        Ok(n)
    }

    pub fn get(&self, item_id: &str) -> Option<&ReviewItem> {
        self.items.get(item_id)
    }

    pub fn resolution(&self, item_id: &str) -> Option<&Resolution> {
        self.resolutions.get(item_id)
    }

    pub fn items(&self) -> impl Iterator<Item = &ReviewItem> {
        self.items.values()
    }

    /// Items with the given status, hardest first: consistency ascending,
    /// then record id.
    pub fn list(&self, status: Option<ReviewStatus>, limit: usize) -> Vec<&ReviewItem> {
        let mut out: Vec<&ReviewItem> = self.items.values().filter(|i| status.is_none_or(|s| i.status == s)).collect();
        out.sort_by(|a, b| {
            a.consistency().cmp(&b.consistency()).then_with(|| a.record_id.cmp(&b.record_id)).then_with(|| a.item_id.cmp(&b.item_id))
        });
        out.truncate(limit);
        out
    }

    /// Outcome [`ReviewQueue::resolve`] would have, without changing state.
    pub fn check(&self, resolution: &Resolution, codebook: &Codebook) -> Result<Ack, ReviewError> {
        let item = self.items.get(&resolution.item_id).ok_or_else(|| ReviewError::NotFound(resolution.item_id.clone()))?;
        codebook.validate_labels(&resolution.final_labels)?;
        if let Some(tag) = resolution.rule_tag {
            if !(1..=8).contains(&tag) {
                return Err(ReviewError::InvalidRuleTag(tag));
            }
        }
        match item.status {
            ReviewStatus::Resolved => {
                let existing = self.resolutions.get(&resolution.item_id);
                return match existing {
                    Some(e) if e.same_decision(resolution) => Ok(Ack::Unchanged),
                    _ => Err(ReviewError::Conflict {
                        item_id: resolution.item_id.clone(),
                        existing: existing.cloned().map(Box::new),
                        status: ReviewStatus::Resolved,
                    }),
                };
            }
            ReviewStatus::Skipped => {
                return Err(ReviewError::Conflict {
                    item_id: resolution.item_id.clone(),
                    existing: None,
                    status: ReviewStatus::Skipped,
                })
            }
            ReviewStatus::Pending => {}
        }
        Ok(Ack::Applied)
    }

    pub fn resolve(&mut self, resolution: Resolution, codebook: &Codebook) -> Result<Ack, ReviewError> {
        let ack = self.check(&resolution, codebook)?;
        if ack == Ack::Applied {
            let id = resolution.item_id.clone();
            if let Some(item) = self.items.get_mut(&id) {
                item.status = ReviewStatus::Resolved;
            }
            self.resolutions.insert(id, resolution);
        }
        Ok(ack)
    }

    /// Outcome [`ReviewQueue::skip`] would have, without changing state.
    pub fn check_skip(&self, item_id: &str) -> Result<Ack, ReviewError> {
        let item = self.items.get(item_id).ok_or_else(|| ReviewError::NotFound(item_id.into()))?;
        match item.status {
            ReviewStatus::Pending => Ok(Ack::Applied),
            ReviewStatus::Skipped => Ok(Ack::Unchanged),
            ReviewStatus::Resolved => Err(ReviewError::Conflict {
                item_id: item_id.into(),
                existing: self.resolutions.get(item_id).cloned().map(Box::new),
                status: ReviewStatus::Resolved,
            }),
        }
    }

    pub fn skip(&mut self, item_id: &str) -> Result<Ack, ReviewError> {
        let ack = self.check_skip(item_id)?;
        if let Some(item) = self.items.get_mut(item_id) {
            item.status = ReviewStatus::Skipped;
        }
        Ok(ack)
    }

    /// Applies one logged event.
    pub fn apply(&mut self, event: &ReviewEvent, codebook: &Codebook) -> Result<Ack, ReviewError> {
        match event {
            ReviewEvent::Resolved { resolution } => self.resolve(resolution.clone(), codebook),
            ReviewEvent::Skipped { item_id, .. } => self.skip(item_id),
        }
    }

    /// Rebuilds a queue from its items and event log.
    pub fn replay(items: Vec<ReviewItem>, events: &[ReviewEvent], codebook: &Codebook) -> Result<Self, ReviewError> {
        let mut q = Self::new();
        q.enqueue(items)?;
        for e in events {
            q.apply(e, codebook)?;
        }
        Ok(q)
    }

    pub fn progress(&self) -> Progress {
        let mut p = Progress { total: self.items.len(), resolved: 0, skipped: 0, pending: 0 };
        for item in self.items.values() {
            match item.status {
                ReviewStatus::Pending => p.pending += 1,
                ReviewStatus::Resolved => p.resolved += 1,
                ReviewStatus::Skipped => p.skipped += 1,
            }
        }
        p
    }

    /// Resolutions in item-id order.
    pub fn resolutions(&self) -> Vec<Resolution> {
        self.resolutions.values().cloned().collect()
    }

    pub fn snapshot(&self) -> QueueSnapshot {
        QueueSnapshot { items: self.items.values().cloned().collect(), resolutions: self.resolutions() }
    }

    /// Rebuilds a queue from a snapshot, keeping item statuses as stored.
    pub fn restore(snapshot: QueueSnapshot) -> Result<Self, ReviewError> {
        let mut q = Self::new();
        for item in snapshot.items {
            if q.items.contains_key(&item.item_id) {
                return Err(ReviewError::DuplicateItem(item.item_id));
            }
            q.items.insert(item.item_id.clone(), item);
        }
        for r in snapshot.resolutions {
            if !q.items.contains_key(&r.item_id) {
                return Err(ReviewError::NotFound(r.item_id));
            }
            q.resolutions.insert(r.item_id.clone(), r);
        }
        Ok(q)
    }
}

/// Serializable queue state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueSnapshot {
    pub items: Vec<ReviewItem>,
    pub resolutions: Vec<Resolution>,
}

/// Post-rule consensus output for one record (a comment, for extraction).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusRecord {
    pub record_id: String,
    pub consistency: u8,
    pub pairs: Vec<PairRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MergeError {
    #[error("resolution for unknown review item {0}")]
    UnknownItem(String),
    #[error("review item {item_id} refers to unknown record {record_id}")]
    UnknownRecord { item_id: String, record_id: String },
    #[error("record {0} appears twice in the consensus input")]
    DuplicateRecord(String),
}

/// Builds the final pair set from extraction consensus. Records with a resolution take the reviewer's
/// pairs (provenance `human_resolved`); gold records replace their comment's
/// pairs outright (provenance `gold`); everything else keeps its consensus
/// pairs (provenance `auto_consensus`). When several resolutions exist for
/// one item, the latest `decided_at` wins. Output is sorted by comment id and
/// pair id.
pub fn merge_final_dataset(
    consensus: &[ConsensusRecord],
    items: &[ReviewItem],
    resolutions: &[Resolution],
    gold: &[PairRecord],
) -> Result<Vec<PairRecord>, MergeError> {
    let mut records: BTreeMap<&str, &ConsensusRecord> = BTreeMap::new();
    for r in consensus {
        if records.insert(r.record_id.as_str(), r).is_some() {
            return Err(MergeError::DuplicateRecord(r.record_id.clone()));
        }
    }
    let item_record: BTreeMap<&str, (Task, &str)> =
        items.iter().map(|i| (i.item_id.as_str(), (i.task, i.record_id.as_str()))).collect();

    let mut ordered: Vec<&Resolution> = resolutions.iter().collect();
    // deterministic regardless of arrival: the last element per item is the
    // latest decision, with reviewer and content as tie-breakers
    ordered.sort_by(|a, b| {
        a.decided_at
            .cmp(&b.decided_at)
            .then_with(|| a.reviewer_id.cmp(&b.reviewer_id))
            .then_with(|| a.final_name.cmp(&b.final_name))
            .then_with(|| a.final_explanation.cmp(&b.final_explanation))
            .then_with(|| a.final_labels.cmp(&b.final_labels))
            .then_with(|| a.additional_pairs.cmp(&b.additional_pairs))
    });
    let mut winning: BTreeMap<&str, &Resolution> = BTreeMap::new();
    for res in ordered {
        let (task, record_id) =
            *item_record.get(res.item_id.as_str()).ok_or_else(|| MergeError::UnknownItem(res.item_id.clone()))?;
        // label resolutions are applied to finished pairs, not here
        if task != Task::ExtractPair {
            continue;
        }
        if !records.contains_key(record_id) {
            return Err(MergeError::UnknownRecord { item_id: res.item_id.clone(), record_id: record_id.into() });
        }
        winning.insert(record_id, res);
    }

    let mut gold_by_comment: BTreeMap<&str, Vec<&PairRecord>> = BTreeMap::new();
    for g in gold {
        gold_by_comment.entry(g.comment_id.as_str()).or_default().push(g);
    }

    let mut out = Vec::new();
    for (record_id, record) in &records {
        if gold_by_comment.contains_key(record_id) {
            continue;
        }
        if let Some(res) = winning.get(record_id) {
            for (i, cand) in res.candidates().into_iter().enumerate() {
                let mut p = PairRecord::new(pair_id(record_id, i), *record_id, cand);
                if i == 0 {
                    p.channel_labels = res.final_labels.clone();
                }
                p.provenance = Some(Provenance::HumanResolved);
                out.push(p);
            }
        } else {
            for p in record.pairs.iter().filter(|p| !p.is_void()) {
                let mut p = p.clone();
                p.provenance = Some(Provenance::AutoConsensus);
                out.push(p);
            }
        }
    }
    for pairs in gold_by_comment.values() {
        for g in pairs.iter().filter(|g| !g.is_void()) {
            let mut g = (*g).clone();
            g.provenance = Some(Provenance::Gold);
            out.push(g);
        }
    }
    out.sort_by(|a, b| a.comment_id.cmp(&b.comment_id).then_with(|| a.pair_id.cmp(&b.pair_id)));
    Ok(out)
}
