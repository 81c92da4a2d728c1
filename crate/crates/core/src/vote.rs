//! Ensemble outputs: one vote per annotator for one record.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::codebook::Channel;
use crate::corpus::Candidate;

/// Annotation task an ensemble is asked to perform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ExtractPair,
    SemanticExplain,
    VisualClassify,
    PhoneticClassify,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::ExtractPair, Task::SemanticExplain, Task::VisualClassify, Task::PhoneticClassify];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::ExtractPair => "extract_pair",
            Task::SemanticExplain => "semantic_explain",
            Task::VisualClassify => "visual_classify",
            Task::PhoneticClassify => "phonetic_classify",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.as_str() == s)
    }

    /// Channel a classification task labels, if any.
    pub fn channel(self) -> Option<Channel> {
        match self {
            Task::VisualClassify => Some(Channel::Visual),
            Task::PhoneticClassify => Some(Channel::Phonetic),
            Task::SemanticExplain => Some(Channel::Semantic),
            Task::ExtractPair => None,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Structured content of one vote.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VoteValue {
    /// Extracted name-explanation candidates for a comment.
    Pairs { pairs: Vec<Candidate> },
    /// A category id; `None` means "no association".
    Label { label: Option<String>, explanation: Option<String> },
    /// Free text such as a generated explanation.
    Text { text: Option<String> },
}

/// A parsed vote with annotator attribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAnnotation {
    pub annotator_id: String,
    pub value: VoteValue,
    /// Backend output the value was parsed from.
    pub raw_text: String,
    #[serde(default)]
    pub retry_count: u32,
    #[serde(default)]
    pub repaired: bool,
}

/// An annotator that produced no usable vote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationFailure {
    pub annotator_id: String,
    pub reason: String,
    #[serde(default)]
    pub raw_text: Option<String>,
}

/// All outputs of an ensemble for one record, ordered by annotator id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteSet {
    pub record_id: String,
    pub task: Task,
    pub votes: Vec<RawAnnotation>,
    #[serde(default)]
    pub failures: Vec<AnnotationFailure>,
}

impl VoteSet {
    /// Builds a vote set, sorting votes and failures by annotator id so that
    /// arrival order never matters.
    pub fn new(
        record_id: impl Into<String>,
        task: Task,
        mut votes: Vec<RawAnnotation>,
        mut failures: Vec<AnnotationFailure>,
    ) -> Self {
        votes.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
        failures.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
        Self { record_id: record_id.into(), task, votes, failures }
    }

    /// Number of annotators consulted.
    pub fn ensemble_size(&self) -> usize {
        self.votes.len() + self.failures.len()
    }

    /// At least half the ensemble (rounded up) failed.
    pub fn ensemble_failed(&self) -> bool {
        2 * self.failures.len() >= self.ensemble_size()
    }
}
