//! Majority voting with a consistency score.
//!
//! Votes are canonicalized before counting so that outputs differing only in
//! surface form count as the same vote. The winning class is the modal
//! canonical vote; ties are broken by a seeded uniform draw over the tied
//! classes. Consistency is `100 · max_count / N`, except that a modal count
//! of one (all outputs distinct) reports 0.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::review::{ReviewContext, ReviewItem, ReviewReason, ReviewStatus};
use crate::rules::EquivalencePolicy;
use crate::vote::{Task, VoteSet, VoteValue};

/// Canonical key of a vote. Pair lists are compared as sets of normalized
/// candidates.
pub type CanonicalVote = VoteValue;

/// Canonical form used for counting.
pub fn canonicalize(value: &VoteValue, policy: &EquivalencePolicy) -> CanonicalVote {
    match value {
        VoteValue::Pairs { pairs } => {
            let mut canon: Vec<_> =
                pairs.iter().map(|c| policy.canonical_candidate(c)).filter(|c| !c.is_empty()).collect();
            canon.sort();
            VoteValue::Pairs { pairs: canon }
        }
        // explanations attached to a label do not split the vote
        VoteValue::Label { label, .. } => VoteValue::Label { label: label.clone(), explanation: None },
        VoteValue::Text { text } => VoteValue::Text { text: policy.normalize_opt(text.as_deref()) },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConsensusError {
    #[error("record {0}: no usable votes, consensus impossible")]
    NoUsableVotes(String),
}

/// Vote counts over canonical classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyResult {
    pub record_id: String,
    pub task: Task,
    /// Ensemble arity N, including annotators that failed.
    pub ensemble_size: usize,
    pub counts: BTreeMap<CanonicalVote, usize>,
    pub max_count: usize,
    pub argmax_set: BTreeSet<CanonicalVote>,
    /// Smallest raw vote in each class; independent of vote order.
    pub representatives: BTreeMap<CanonicalVote, VoteValue>,
    /// Votes folded into a class although their raw form differs from the
    /// representative, for auditing the equivalence policy.
    pub minor_merges: usize,
}

impl TallyResult {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Counts canonical votes.
pub fn tally(votes: &VoteSet, policy: &EquivalencePolicy) -> Result<TallyResult, ConsensusError> {
    if votes.votes.is_empty() {
        return Err(ConsensusError::NoUsableVotes(votes.record_id.clone()));
    }
    let mut counts: BTreeMap<CanonicalVote, usize> = BTreeMap::new();
    let mut members: BTreeMap<CanonicalVote, BTreeSet<&VoteValue>> = BTreeMap::new();
    for v in &votes.votes {
        let key = canonicalize(&v.value, policy);
        *counts.entry(key.clone()).or_default() += 1;
        members.entry(key).or_default().insert(&v.value);
    }
    let max_count = counts.values().copied().max().unwrap_or(0);
    let argmax_set = counts.iter().filter(|(_, &n)| n == max_count).map(|(k, _)| k.clone()).collect();
    let representatives = members
        .iter()
        .map(|(k, raws)| (k.clone(), (*raws.iter().next().expect("non-empty class")).clone()))
        .collect();
    let minor_merges = members.values().map(|raws| raws.len() - 1).sum();
    Ok(TallyResult {
        record_id: votes.record_id.clone(),
        task: votes.task,
        ensemble_size: votes.ensemble_size().max(votes.votes.len()),
        counts,
        max_count,
        argmax_set,
        representatives,
        minor_merges,
    })
}

/// Aggregated label of one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub record_id: String,
    pub task: Task,
    /// Representative raw vote of the winning class.
    pub label: VoteValue,
    /// Reported consistency: 0 when every vote is distinct.
    pub consistency: u8,
    /// `100 · max_count / N` before the all-distinct mapping, in basis points
    /// of a percent (hundredths), so 20% is 2000.
    pub raw_consistency_bp: u32,
    pub max_count: usize,
    pub ensemble_size: usize,
    pub tie_broken: bool,
    pub seed_used: Option<u64>,
}

/// Consistency reported for a modal count out of `n` annotators.
pub fn consistency_score(max_count: usize, n: usize) -> u8 {
    if max_count < 2 || n == 0 {
        return 0;
    }
    // round half up to an integer percentage
    ((200 * max_count + n) / (2 * n)).min(100) as u8
}

/// Picks the final label. A unique modal class wins outright; otherwise the
/// label is drawn uniformly from the tied classes with `seed`.
pub fn decide(tally: &TallyResult, seed: u64) -> ConsensusResult {
    let tied: Vec<&CanonicalVote> = tally.argmax_set.iter().collect();
    let (winner, tie_broken, seed_used) = if tied.len() == 1 {
        (tied[0], false, None)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = rng.random_range(0..tied.len());
        (tied[idx], true, Some(seed))
    };
    let n = tally.ensemble_size;
    ConsensusResult {
        record_id: tally.record_id.clone(),
        task: tally.task,
        label: tally.representatives[winner].clone(),
        consistency: consistency_score(tally.max_count, n),
        raw_consistency_bp: (10_000 * tally.max_count).checked_div(n).unwrap_or(0) as u32,
        max_count: tally.max_count,
        ensemble_size: n,
        tie_broken,
        seed_used,
    }
}

/// Per-record tie seed derived from a run seed, so draws are independent
/// across records and reproducible across runs and platforms.
pub fn record_seed(run_seed: u64, record_id: &str) -> u64 {
    // FNV-1a over the id, then a splitmix64 finalizer
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in record_id.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = run_seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Routes a sub-threshold result to human review. The boundary is strict:
/// a record exactly at the threshold is accepted.
pub fn flag_for_review(result: &ConsensusResult, votes: &VoteSet, threshold: u8) -> Option<ReviewItem> {
    if result.consistency >= threshold {
        return None;
    }
    Some(ReviewItem {
        item_id: review_item_id(result.task, &result.record_id),
        record_id: result.record_id.clone(),
        task: result.task,
        votes: votes.clone(),
        provisional: Some(result.clone()),
        context: ReviewContext::default(),
        reason: ReviewReason::LowConsistency,
        status: ReviewStatus::Pending,
    })
}

/// Review item for a record whose ensemble failed or produced no usable vote.
pub fn failed_review_item(votes: &VoteSet) -> ReviewItem {
    ReviewItem {
        item_id: review_item_id(votes.task, &votes.record_id),
        record_id: votes.record_id.clone(),
        task: votes.task,
        votes: votes.clone(),
        provisional: None,
        context: ReviewContext::default(),
        reason: ReviewReason::EnsembleFailed,
        status: ReviewStatus::Pending,
    }
}

pub fn review_item_id(task: Task, record_id: &str) -> String {
    alloc::format!("{}:{}", task.as_str(), record_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Candidate;
    use crate::vote::RawAnnotation;
    use alloc::format;
    use alloc::vec;

    fn text_votes(values: &[&str]) -> VoteSet {
        let votes = values
            .iter()
            .enumerate()
            .map(|(i, v)| RawAnnotation {
                annotator_id: format!("m{i}"),
                value: VoteValue::Pairs { pairs: vec![Candidate::new(Some(v), None)] },
                raw_text: String::from(*v),
                retry_count: 0,
                repaired: false,
            })
            .collect();
        VoteSet::new("r1", Task::ExtractPair, votes, vec![])
    }

    fn key(name: &str) -> CanonicalVote {
        VoteValue::Pairs { pairs: vec![Candidate::new(Some(name), None)] }
    }

    #[test]
    fn tally_counts() {
        let t = tally(&text_votes(&["A", "A", "A", "B", "C"]), &EquivalencePolicy::default()).unwrap();
        assert_eq!(t.counts[&key("a")], 3);
        assert_eq!(t.counts[&key("b")], 1);
        assert_eq!(t.max_count, 3);
        assert_eq!(t.argmax_set.len(), 1);
        assert_eq!(t.total(), 5);
    }

    #[test]
    fn tally_tie() {
        let t = tally(&text_votes(&["A", "A", "B", "B", "C"]), &EquivalencePolicy::default()).unwrap();
        assert_eq!(t.max_count, 2);
        assert_eq!(t.argmax_set, [key("a"), key("b")].into_iter().collect());
    }

    #[test]
    fn surface_variants_share_a_vote() {
        let vs = text_votes(&["「景明」取自「春和景明」", "景明取自春和景明", "景明是取自春和景明"]);
        let t = tally(&vs, &EquivalencePolicy::default()).unwrap();
        assert_eq!(t.counts.len(), 1);
        assert_eq!(t.max_count, 3);
        assert_eq!(t.minor_merges, 2);
    }

    #[test]
    fn decide_examples() {
        let p = EquivalencePolicy::default();
        let d = decide(&tally(&text_votes(&["A"; 5]), &p).unwrap(), 0);
        assert_eq!((d.consistency, d.tie_broken), (100, false));
        let d = decide(&tally(&text_votes(&["A", "A", "A", "B", "C"]), &p).unwrap(), 0);
        assert_eq!(d.label, key("A"));
        assert_eq!(d.consistency, 60);
        let d = decide(&tally(&text_votes(&["A", "B", "C", "D", "E"]), &p).unwrap(), 7);
        assert_eq!(d.consistency, 0);
        assert_eq!(d.raw_consistency_bp, 2000);
        assert!(d.tie_broken);
        assert_eq!(d.seed_used, Some(7));
    }

    #[test]
    fn failures_count_toward_arity() {
        let mut vs = text_votes(&["A", "A", "A"]);
        vs.failures.push(crate::vote::AnnotationFailure { annotator_id: "x".into(), reason: "t".into(), raw_text: None });
        vs.failures.push(crate::vote::AnnotationFailure { annotator_id: "y".into(), reason: "t".into(), raw_text: None });
        let d = decide(&tally(&vs, &EquivalencePolicy::default()).unwrap(), 0);
        assert_eq!(d.consistency, 60);
    }

    #[test]
    fn zero_votes_is_an_error() {
        let vs = VoteSet::new("r", Task::ExtractPair, vec![], vec![]);
        assert!(tally(&vs, &EquivalencePolicy::default()).is_err());
    }

    #[test]
    fn review_threshold_is_strict() {
        let p = EquivalencePolicy::default();
        let vs = text_votes(&["A"; 5]);
        let full = decide(&tally(&vs, &p).unwrap(), 0);
        assert!(flag_for_review(&full, &vs, 100).is_none());
        let vs60 = text_votes(&["A", "A", "A", "B", "C"]);
        let sixty = decide(&tally(&vs60, &p).unwrap(), 0);
        let item = flag_for_review(&sixty, &vs60, 100).unwrap();
        assert_eq!(item.votes, vs60);
        let vs80 = text_votes(&["A", "A", "A", "A", "C"]);
        let eighty = decide(&tally(&vs80, &p).unwrap(), 0);
        assert!(flag_for_review(&eighty, &vs80, 80).is_none());
    }

    #[test]
    fn consistency_domain_general_n() {
        assert_eq!(consistency_score(2, 3), 67);
        assert_eq!(consistency_score(1, 3), 0);
        assert_eq!(consistency_score(4, 4), 100);
    }

    #[test]
    fn record_seed_is_stable() {
        assert_eq!(record_seed(42, "c1"), record_seed(42, "c1"));
        assert_ne!(record_seed(42, "c1"), record_seed(42, "c2"));
        assert_ne!(record_seed(42, "c1"), record_seed(43, "c1"));
    }
}
