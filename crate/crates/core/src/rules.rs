//! Deterministic correction rules and the surface-form equivalence policy.
//!
//! Rules 3, 4 and 6 of the extraction error table are mechanical and run here
//! after consensus. Rules 1 and 2 run on the input side
//! ([`crate::corpus::preprocess`]); rules 5, 7 and 8 need judgment and are
//! carried by prompt guidance and human review.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Candidate, PairRecord};
use crate::text;

/// How closely two strings agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchClass {
    Exact,
    Minor,
    Different,
}

/// Normalization applied before deciding that two outputs differ only in
/// surface form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalencePolicy {
    /// Tokens removed before comparison, e.g. the copula 是.
    pub fillers: Vec<String>,
    /// Compare ASCII letters case-insensitively.
    #[serde(default = "yes")]
    pub fold_ascii_case: bool,
}

fn yes() -> bool {
    true
}

impl Default for EquivalencePolicy {
    fn default() -> Self {
        Self { fillers: alloc::vec!["是".to_string(), "的".to_string()], fold_ascii_case: true }
    }
}

impl EquivalencePolicy {
    pub fn with_fillers<I, S>(fillers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { fillers: fillers.into_iter().map(Into::into).collect(), fold_ascii_case: true }
    }

    /// Drops whitespace, punctuation, quotation marks and filler tokens, and
    /// folds full-width forms.
    pub fn normalize(&self, s: &str) -> String {
        let mut out: String = s
            .chars()
            .map(text::fold_width)
            .filter(|c| !c.is_whitespace() && !text::is_punctuation(*c))
            .map(|c| if self.fold_ascii_case { c.to_ascii_lowercase() } else { c })
            .collect();
        for filler in self.fillers.iter().filter(|f| !f.is_empty()) {
            let filler: String = filler.chars().map(text::fold_width).collect();
            if out.contains(filler.as_str()) {
                out = out.replace(filler.as_str(), "");
            }
        }
        out
    }

    /// Normalized optional string; empty results collapse to `None`.
    pub fn normalize_opt(&self, s: Option<&str>) -> Option<String> {
        s.map(|s| self.normalize(s)).filter(|s| !s.is_empty())
    }

    pub fn compare(&self, a: Option<&str>, b: Option<&str>) -> MatchClass {
        canonical_equivalence(self, a, b)
    }

    /// Canonical form of a candidate used as a vote key.
    pub fn canonical_candidate(&self, c: &Candidate) -> Candidate {
        Candidate { name: self.normalize_opt(c.name.as_deref()), explanation: self.normalize_opt(c.explanation.as_deref()) }
    }
}

/// Classifies a pair of optional strings as exact, minor or different.
/// Null matches only null.
pub fn canonical_equivalence(policy: &EquivalencePolicy, a: Option<&str>, b: Option<&str>) -> MatchClass {
    match (a, b) {
        (None, None) => MatchClass::Exact,
        (None, Some(_)) | (Some(_), None) => MatchClass::Different,
        (Some(a), Some(b)) if a == b => MatchClass::Exact,
        (Some(a), Some(b)) => {
            if policy.normalize(a) == policy.normalize(b) {
                MatchClass::Minor
            } else {
                MatchClass::Different
            }
        }
    }
}

/// Correction applied by a rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleAction {
    None,
    NullName,
    NullExplanation,
    NullBoth,
    KeepFullDropNested,
}

/// One fired rule, for the audit log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub rule_id: u8,
    pub pair_id: String,
    pub action: RuleAction,
    pub note: String,
}

/// Rule 3 trigger: a name of exactly one character.
pub fn is_single_character(name: &str) -> bool {
    name.trim().chars().count() == 1
}

/// Rule 4 trigger: a name without any Han character.
pub fn is_purely_foreign(name: &str) -> bool {
    !text::contains_han(name)
}

fn survives_local_rules(name: &str) -> bool {
    !is_single_character(name) && !is_purely_foreign(name)
}

/// Applies rules 3 → 4 → 6 to one pair. `siblings` are all pairs extracted
/// from the same comment in extraction order (the pair itself may be among
/// them and is skipped by id).
pub fn apply_post_rules(pair: &PairRecord, siblings: &[PairRecord]) -> (PairRecord, Vec<RuleOutcome>) {
    let mut out = pair.clone();
    let mut outcomes = Vec::new();
    let Some(name) = out.name.clone() else {
        return (out, outcomes);
    };

    if is_single_character(&name) {
        out.name = None;
        out.explanation = None;
        outcomes.push(RuleOutcome {
            rule_id: 3,
            pair_id: out.pair_id.clone(),
            action: RuleAction::NullBoth,
            note: alloc::format!("single-character name {name:?}"),
        });
        return (out, outcomes);
    }
    if is_purely_foreign(&name) {
        out.name = None;
        out.explanation = None;
        outcomes.push(RuleOutcome {
            rule_id: 4,
            pair_id: out.pair_id.clone(),
            action: RuleAction::NullBoth,
            note: alloc::format!("purely foreign name {name:?}"),
        });
        return (out, outcomes);
    }

    let own_position = siblings.iter().position(|s| s.pair_id == pair.pair_id);
    let trimmed = name.trim();
    for (i, sib) in siblings.iter().enumerate() {
        if sib.pair_id == pair.pair_id {
            continue;
        }
        let Some(other) = sib.name.as_deref().map(str::trim) else { continue };
        if !survives_local_rules(other) {
            continue;
        }
        let nested = other != trimmed && other.contains(trimmed);
        // identical repeats: the first occurrence is the one kept
        let repeated = other == trimmed && own_position.is_some_and(|own| i < own);
        if nested || repeated {
            out.name = None;
            out.explanation = None;
            outcomes.push(RuleOutcome {
                rule_id: 6,
                pair_id: out.pair_id.clone(),
                action: RuleAction::KeepFullDropNested,
                note: alloc::format!("{trimmed:?} redundant with {other:?} ({})", sib.pair_id),
            });
            break;
        }
    }
    (out, outcomes)
}

/// Runs [`apply_post_rules`] over every pair of one comment and drops pairs
/// left with neither name nor explanation.
pub fn apply_comment_rules(pairs: &[PairRecord]) -> (Vec<PairRecord>, Vec<RuleOutcome>) {
    let mut kept = Vec::new();
    let mut log = Vec::new();
    for pair in pairs {
        let (p, outcomes) = apply_post_rules(pair, pairs);
        log.extend(outcomes);
        if !p.is_void() {
            kept.push(p);
        }
    }
    (kept, log)
}
