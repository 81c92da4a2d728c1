//! Dataset-level profiles: channel combinations and engagement.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::chisq::{chi_square_gof, ChiSquareError, ChiSquareResult};
use super::linalg::Matrix;
use super::nb::{nb_regression, with_intercept, NbFit, NbOptions};
use super::vif::vif;
use crate::codebook::Channel;
use crate::corpus::PairRecord;
use crate::rules::EquivalencePolicy;

/// Which channels a pair uses. Every classified pair has a semantic label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    SemanticOnly,
    SemanticPhonetic,
    SemanticVisual,
    SemanticPhoneticVisual,
}

impl Pattern {
    pub const ALL: [Pattern; 4] =
        [Pattern::SemanticOnly, Pattern::SemanticPhonetic, Pattern::SemanticVisual, Pattern::SemanticPhoneticVisual];

    pub fn of(pair: &PairRecord) -> Option<Pattern> {
        let has = |c| pair.channel_labels.contains_key(&c);
        if !has(Channel::Semantic) {
            return None;
        }
        Some(match (has(Channel::Phonetic), has(Channel::Visual)) {
            (false, false) => Pattern::SemanticOnly,
            (true, false) => Pattern::SemanticPhonetic,
            (false, true) => Pattern::SemanticVisual,
            (true, true) => Pattern::SemanticPhoneticVisual,
        })
    }

    pub fn channel_count(self) -> u8 {
        match self {
            Pattern::SemanticOnly => 1,
            Pattern::SemanticPhonetic | Pattern::SemanticVisual => 2,
            Pattern::SemanticPhoneticVisual => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::SemanticOnly => "semantic_only",
            Pattern::SemanticPhonetic => "semantic_phonetic",
            Pattern::SemanticVisual => "semantic_visual",
            Pattern::SemanticPhoneticVisual => "semantic_phonetic_visual",
        }
    }
}

/// One unit of the name-frequency regression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameFrequency {
    pub canonical_name: String,
    pub frequency: u64,
    pub channel_count: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationStats {
    /// Counts in [`Pattern::ALL`] order.
    pub counts: [u64; 4],
    pub fractions: [f64; 4],
    pub classified: u64,
    pub unclassified: u64,
    /// Uniform goodness of fit over the four patterns.
    pub h1: ChiSquareResult,
    /// Semantic+phonetic against semantic+visual.
    pub h2: Option<ChiSquareResult>,
    /// Name frequency on channel count.
    pub h3: Option<NbFit>,
    pub h3_error: Option<String>,
    pub h3_units: usize,
    /// Semantic, phonetic, visual presence; empty if undefined.
    pub vif: Vec<f64>,
    pub vif_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("no pair carries a semantic label")]
    EmptyProfile,
    #[error(transparent)]
    ChiSquare(#[from] ChiSquareError),
}

/// Per unique canonical name: how often it occurs, and the channel count
/// most of its occurrences use (ties go to the smaller count).
pub fn name_frequencies(pairs: &[PairRecord], policy: &EquivalencePolicy) -> Vec<NameFrequency> {
    let mut by_name: BTreeMap<String, [u64; 4]> = BTreeMap::new();
    for p in pairs {
        let (Some(pattern), Some(name)) = (Pattern::of(p), policy.normalize_opt(p.name.as_deref())) else {
            continue;
        };
        by_name.entry(name).or_default()[pattern.channel_count() as usize] += 1;
    }
    by_name
        .into_iter()
        .map(|(canonical_name, hist)| {
            let frequency = hist.iter().sum();
            let mut best = 1u8;
            for k in 2..=3u8 {
                if hist[k as usize] > hist[best as usize] {
                    best = k;
                }
            }
            NameFrequency { canonical_name, frequency, channel_count: best }
        })
        .collect()
}

pub fn combination_profile(
    pairs: &[PairRecord],
    policy: &EquivalencePolicy,
    nb: &NbOptions,
) -> Result<CombinationStats, ProfileError> {
    let mut counts = [0u64; 4];
    let mut unclassified = 0u64;
    let mut presence: Vec<f64> = Vec::new();
    for p in pairs {
        match Pattern::of(p) {
            Some(pat) => {
                counts[pat as usize] += 1;
                presence.extend([
                    1.0,
                    f64::from(u8::from(matches!(pat, Pattern::SemanticPhonetic | Pattern::SemanticPhoneticVisual))),
                    f64::from(u8::from(matches!(pat, Pattern::SemanticVisual | Pattern::SemanticPhoneticVisual))),
                ]);
            }
            None => unclassified += 1,
        }
    }
    let classified: u64 = counts.iter().sum();
    if classified == 0 {
        return Err(ProfileError::EmptyProfile);
    }
    let fractions = counts.map(|c| c as f64 / classified as f64);
    let h1 = chi_square_gof(&counts, None)?;
    let h2 = chi_square_gof(&[counts[1], counts[2]], None).ok();

    let freqs = name_frequencies(pairs, policy);
    let h3_units = freqs.len();
    let x = with_intercept(&[freqs.iter().map(|f| f64::from(f.channel_count)).collect()]);
    let y: Vec<u64> = freqs.iter().map(|f| f.frequency).collect();
    let (h3, h3_error) = match nb_regression(&x, &y, nb) {
        Ok(fit) => (Some(fit), None),
        Err(e) => (None, Some(alloc::format!("{e}"))),
    };

    let (vif, vif_error) = match Matrix::new(classified as usize, 3, presence).map(|m| vif(&m)) {
        Ok(Ok(v)) => (v, None),
        Ok(Err(e)) => (Vec::new(), Some(alloc::format!("{e}"))),
        Err(e) => (Vec::new(), Some(alloc::format!("{e}"))),
    };

    Ok(CombinationStats {
        counts,
        fractions,
        classified,
        unclassified,
        h1,
        h2,
        h3,
        h3_error,
        h3_units,
        vif,
        vif_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementReport {
    pub viral_threshold: u64,
    /// Distinct labelled comments joined to a like count.
    pub comments: usize,
    pub viral_comments: usize,
    pub zero_like_fraction: f64,
    /// Category id → total likes of viral comments carrying it.
    pub category_likes: BTreeMap<String, u64>,
    /// Top categories by viral likes, ties by id.
    pub ranking: Vec<(String, u64)>,
    /// Pairs whose comment has no like count.
    pub unjoined_pairs: usize,
}

/// Likes per category over comments at or above `viral_threshold`. A
/// comment contributes its likes once per category, however many of its
/// pairs carry that category.
pub fn engagement_profile(
    pairs: &[PairRecord],
    likes: &BTreeMap<String, u64>,
    viral_threshold: u64,
    top_k: usize,
) -> EngagementReport {
    let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
    let mut comments: BTreeSet<&str> = BTreeSet::new();
    let mut unjoined = 0usize;
    let mut category_likes: BTreeMap<String, u64> = BTreeMap::new();
    for p in pairs {
        let Some(&l) = likes.get(&p.comment_id) else {
            unjoined += 1;
            continue;
        };
        comments.insert(p.comment_id.as_str());
        if l < viral_threshold {
            continue;
        }
        for cat in p.channel_labels.values() {
            if seen.insert((p.comment_id.as_str(), cat.as_str())) {
                *category_likes.entry(cat.clone()).or_default() += l;
            }
        }
    }
    let viral = comments.iter().filter(|c| likes[**c] >= viral_threshold).count();
    let zeros = comments.iter().filter(|c| likes[**c] == 0).count();
    let mut ranking: Vec<(String, u64)> = category_likes.iter().map(|(k, v)| (k.clone(), *v)).collect();
    ranking.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranking.truncate(top_k);
    EngagementReport {
        viral_threshold,
        comments: comments.len(),
        viral_comments: viral,
        zero_like_fraction: if comments.is_empty() { 0.0 } else { zeros as f64 / comments.len() as f64 },
        category_likes,
        ranking,
        unjoined_pairs: unjoined,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{pair_id, Candidate};
    use alloc::format;
    use alloc::vec;

    fn pair(comment: &str, name: &str, labels: &[(Channel, &str)]) -> PairRecord {
        let mut p = PairRecord::new(pair_id(comment, 0), comment, Candidate::new(Some(name), None));
        for (c, l) in labels {
            p.channel_labels.insert(*c, String::from(*l));
        }
        p
    }

    #[test]
    fn one_pair_per_pattern() {
        use Channel::*;
        let pairs = vec![
            pair("a", "甲", &[(Semantic, "C1")]),
            pair("b", "乙", &[(Semantic, "C1"), (Phonetic, "PC1")]),
            pair("c", "丙", &[(Semantic, "C1"), (Visual, "VC1")]),
            pair("d", "丁", &[(Semantic, "C1"), (Phonetic, "PC1"), (Visual, "VC1")]),
        ];
        let s = combination_profile(&pairs, &EquivalencePolicy::default(), &NbOptions::default()).unwrap();
        assert_eq!(s.fractions, [0.25; 4]);
        assert_eq!(s.h1.statistic, 0.0);
    }

    #[test]
    fn semantic_only_degenerate() {
        let pairs: Vec<_> = (0..5).map(|i| pair(&format!("c{i}"), "甲", &[(Channel::Semantic, "C2")])).collect();
        let s = combination_profile(&pairs, &EquivalencePolicy::default(), &NbOptions::default()).unwrap();
        assert_eq!(s.fractions[0], 1.0);
        assert!(s.h2.is_none());
    }

    #[test]
    fn unlabeled_pairs_give_empty_profile() {
        let pairs = vec![pair("a", "甲", &[])];
        assert_eq!(
            combination_profile(&pairs, &EquivalencePolicy::default(), &NbOptions::default()).unwrap_err(),
            ProfileError::EmptyProfile
        );
    }

    #[test]
    fn modal_channel_count_ties_go_low() {
        use Channel::*;
        let pairs = vec![
            pair("a", "甲", &[(Semantic, "C1")]),
            pair("b", "甲", &[(Semantic, "C1"), (Visual, "VC2")]),
            pair("c", "乙", &[(Semantic, "C1"), (Visual, "VC2")]),
        ];
        let f = name_frequencies(&pairs, &EquivalencePolicy::default());
        assert_eq!(f[0], NameFrequency { canonical_name: "乙".into(), frequency: 1, channel_count: 2 });
        assert_eq!(f[1], NameFrequency { canonical_name: "甲".into(), frequency: 2, channel_count: 1 });
    }

    #[test]
    fn engagement_threshold() {
        let pairs = vec![
            pair("a", "甲", &[(Channel::Semantic, "C16")]),
            pair("b", "乙", &[(Channel::Semantic, "C16")]),
            pair("c", "丙", &[(Channel::Semantic, "C3")]),
        ];
        let likes: BTreeMap<String, u64> = [("a", 1500), ("b", 200), ("c", 3)].map(|(k, v)| (k.into(), v)).into();
        let r = engagement_profile(&pairs, &likes, 1000, 10);
        assert_eq!(r.viral_comments, 1);
        assert_eq!(r.category_likes["C16"], 1500);
        let all = engagement_profile(&pairs, &likes, 0, 10);
        assert_eq!(all.category_likes["C16"], 1700);
        assert_eq!(all.category_likes["C3"], 3);
    }

    #[test]
    fn comment_counted_once_per_category() {
        let mut second = pair("a", "乙", &[(Channel::Semantic, "C16")]);
        second.pair_id = pair_id("a", 1);
        let pairs = vec![pair("a", "甲", &[(Channel::Semantic, "C16")]), second];
        let likes: BTreeMap<String, u64> = [("a".into(), 2000)].into();
        assert_eq!(engagement_profile(&pairs, &likes, 1000, 5).category_likes["C16"], 2000);
    }
}
