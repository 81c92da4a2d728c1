//! The three-channel category framework and label validation.
//!
//! Semantic categories are `C1`–`C31`, phonetic `PC1`–`PC3`, visual
//! `VC1`–`VC7`. "No relation" and "no visual association" are not categories:
//! they are represented by the absence of a label.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Encoding dimension of a name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Semantic,
    Phonetic,
    Visual,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Semantic, Channel::Phonetic, Channel::Visual];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Semantic => "semantic",
            Channel::Phonetic => "phonetic",
            Channel::Visual => "visual",
        }
    }

    /// Number of categories the shipped framework defines for the channel.
    pub fn expected_count(self) -> usize {
        match self {
            Channel::Semantic => 31,
            Channel::Phonetic => 3,
            Channel::Visual => 7,
        }
    }

    /// Channel implied by an id prefix (`C`, `PC`, `VC`) followed by digits.
    pub fn from_id(id: &str) -> Option<Channel> {
        let (channel, digits) = if let Some(d) = id.strip_prefix("PC") {
            (Channel::Phonetic, d)
        } else if let Some(d) = id.strip_prefix("VC") {
            (Channel::Visual, d)
        } else {
            (Channel::Semantic, id.strip_prefix('C')?)
        };
        let valid = !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) && !digits.starts_with('0');
        valid.then_some(channel)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One category of the framework.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: String,
    pub channel: Channel,
    pub name: String,
    pub definition: String,
    /// Strategy → level-1 → level-2 → subcategory for semantic categories;
    /// empty for phonetic and visual ones.
    #[serde(default)]
    pub level_path: Vec<String>,
    #[serde(default)]
    pub examples: Vec<String>,
    /// False when the hierarchy above the subcategory is reconstructed
    /// rather than confirmed.
    #[serde(default = "default_true")]
    pub path_verified: bool,
}

fn default_true() -> bool {
    true
}

/// A single problem found while validating a codebook.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodebookIssue {
    DuplicateId(String),
    MalformedId(String),
    ChannelMismatch { id: String, declared: Channel },
    CountMismatch { channel: Channel, found: usize, expected: usize },
    LevelPath { id: String },
}

impl fmt::Display for CodebookIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodebookIssue::DuplicateId(id) => write!(f, "duplicate id {id}"),
            CodebookIssue::MalformedId(id) => write!(f, "malformed id {id:?}"),
            CodebookIssue::ChannelMismatch { id, declared } => {
                write!(f, "{id} declared as {declared} but its prefix says otherwise")
            }
            CodebookIssue::CountMismatch { channel, found, expected } => {
                write!(f, "{channel} count {found} ≠ {expected}")
            }
            CodebookIssue::LevelPath { id } => write!(f, "{id} has a level path inconsistent with its channel"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodebookError {
    #[error("codebook validation failed: {}", join_issues(.0))]
    Invalid(Vec<CodebookIssue>),
}

fn join_issues(issues: &[CodebookIssue]) -> String {
    let parts: Vec<String> = issues.iter().map(|i| format!("{i}")).collect();
    parts.join("; ")
}

/// Immutable, validated category framework.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Codebook {
    version: String,
    categories: BTreeMap<String, Category>,
}

impl Codebook {
    /// Validates ids, channels, level paths and per-channel counts, reporting
    /// every offender at once.
    pub fn new(version: impl Into<String>, categories: Vec<Category>) -> Result<Self, CodebookError> {
        let mut issues = Vec::new();
        let mut map = BTreeMap::new();
        let mut counts = BTreeMap::new();
        for cat in categories {
            match Channel::from_id(&cat.id) {
                None => issues.push(CodebookIssue::MalformedId(cat.id.clone())),
                Some(ch) if ch != cat.channel => {
                    issues.push(CodebookIssue::ChannelMismatch { id: cat.id.clone(), declared: cat.channel })
                }
                Some(_) => {}
            }
            let path_ok = match cat.channel {
                Channel::Semantic => !cat.level_path.is_empty(),
                Channel::Phonetic | Channel::Visual => cat.level_path.is_empty(),
            };
            if !path_ok {
                issues.push(CodebookIssue::LevelPath { id: cat.id.clone() });
            }
            if map.contains_key(&cat.id) {
                issues.push(CodebookIssue::DuplicateId(cat.id.clone()));
                continue;
            }
            *counts.entry(cat.channel).or_insert(0usize) += 1;
            map.insert(cat.id.clone(), cat);
        }
        for ch in Channel::ALL {
            let found = counts.get(&ch).copied().unwrap_or(0);
            if found != ch.expected_count() {
                issues.push(CodebookIssue::CountMismatch { channel: ch, found, expected: ch.expected_count() });
            }
        }
        if issues.is_empty() {
            Ok(Self { version: version.into(), categories: map })
        } else {
            Err(CodebookError::Invalid(issues))
        }
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn get(&self, id: &str) -> Option<&Category> {
        self.categories.get(id)
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn categories(&self) -> impl Iterator<Item = &Category> {
        self.categories.values()
    }

    pub fn channel(&self, channel: Channel) -> impl Iterator<Item = &Category> {
        self.categories.values().filter(move |c| c.channel == channel)
    }

    /// Checks a (possibly absent) label against a channel.
    pub fn validate_label(&self, channel: Channel, label: Option<&str>) -> Result<ValidatedLabel<'_>, LabelRejection> {
        let Some(id) = label else {
            return match channel {
                Channel::Semantic => Err(LabelRejection::MissingSemantic),
                Channel::Phonetic | Channel::Visual => Ok(ValidatedLabel::NoAssociation),
            };
        };
        match self.categories.get(id) {
            Some(cat) if cat.channel == channel => Ok(ValidatedLabel::Category(cat)),
            Some(cat) => Err(LabelRejection::WrongChannel { id: id.into(), expected: channel, actual: cat.channel }),
            None => Err(LabelRejection::Unknown { id: id.into(), channel }),
        }
    }

    /// Validates every entry of a channel → id map.
    pub fn validate_labels(&self, labels: &BTreeMap<Channel, String>) -> Result<(), LabelRejection> {
        labels.iter().try_for_each(|(ch, id)| self.validate_label(*ch, Some(id)).map(|_| ()))
    }
}

/// Outcome of a successful [`Codebook::validate_label`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidatedLabel<'a> {
    Category(&'a Category),
    NoAssociation,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelRejection {
    #[error("unknown {channel} category {id}")]
    Unknown { id: String, channel: Channel },
    #[error("{id} is a {actual} category, expected {expected}")]
    WrongChannel { id: String, expected: Channel, actual: Channel },
    #[error("semantic channel requires a category")]
    MissingSemantic,
}
