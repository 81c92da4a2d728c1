//! Statistics and trade-off reports over finished datasets.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crowdlabel_core::evaluation::{tradeoff_report, RoundStats, TradeoffTable};
use crowdlabel_core::stats::{
    chi_square_gof, combination_profile, engagement_profile, ks_two_sample, ChiSquareResult, CombinationStats,
    EngagementReport, KsResult, NbOptions, Pattern,
};
use crowdlabel_core::{CommentRecord, EquivalencePolicy, PairRecord};
use serde::{Deserialize, Serialize};

use crate::io::{read_json, read_jsonl};
use crate::{Error, Result};

/// Full profile from labelled pairs.
pub fn combinations_from_pairs(pairs: &Path, policy: &EquivalencePolicy) -> Result<CombinationStats> {
    let pairs: Vec<PairRecord> = read_jsonl(pairs)?;
    Ok(combination_profile(&pairs, policy, &NbOptions::default())?)
}

/// Distribution tests only, from the four pattern counts in
/// [`Pattern::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountTests {
    pub counts: [u64; 4],
    pub h1: ChiSquareResult,
    pub h2: ChiSquareResult,
}

pub fn combinations_from_counts(counts: [u64; 4]) -> Result<CountTests> {
    let h1 = chi_square_gof(&counts, None).map_err(|e| Error::Invalid(e.to_string()))?;
    let h2 = chi_square_gof(&[counts[1], counts[2]], None).map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(CountTests { counts, h1, h2 })
}

pub fn parse_counts(s: &str) -> Result<[u64; 4]> {
    let v: Vec<u64> = s
        .split(',')
        .map(|x| x.trim().parse::<u64>().map_err(|_| Error::Invalid(format!("invalid count {x:?}"))))
        .collect::<Result<_>>()?;
    v.try_into().map_err(|v: Vec<u64>| Error::Invalid(format!("expected 4 counts, got {}", v.len())))
}

fn chi_line(out: &mut String, label: &str, r: &ChiSquareResult) {
    let _ = writeln!(
        out,
        "{label}: chi2 = {:.2}, df = {}, p = {:.3e}, Cramer's V = {:.3}",
        r.statistic, r.df, r.p_value, r.cramers_v
    );
}

pub fn render_count_tests(t: &CountTests) -> String {
    let mut s = String::new();
    let total: u64 = t.counts.iter().sum();
    for (p, c) in Pattern::ALL.iter().zip(t.counts) {
        let _ = writeln!(s, "{:<26} {:>8} {:>7.2}%", p.as_str(), c, 100.0 * c as f64 / total.max(1) as f64);
    }
    chi_line(&mut s, "uniform over patterns", &t.h1);
    chi_line(&mut s, "phonetic vs visual", &t.h2);
    s
}

pub fn render_combinations(c: &CombinationStats) -> String {
    let mut s = String::new();
    for (i, p) in Pattern::ALL.iter().enumerate() {
        let _ = writeln!(s, "{:<26} {:>8} {:>7.2}%", p.as_str(), c.counts[i], 100.0 * c.fractions[i]);
    }
    let _ = writeln!(s, "classified {} / unclassified {}", c.classified, c.unclassified);
    chi_line(&mut s, "uniform over patterns", &c.h1);
    if let Some(h2) = &c.h2 {
        chi_line(&mut s, "phonetic vs visual", h2);
    }
    match (&c.h3, &c.h3_error) {
        (Some(fit), _) => {
            let _ = writeln!(
                s,
                "frequency ~ channel count over {} names: beta = {:.4} (SE {:.4}, p = {:.3e}), IRR = {:.4}, theta = {:.4}",
                c.h3_units, fit.coefficients[1], fit.std_errors[1], fit.p_values[1], fit.rate_ratios[1], fit.dispersion
            );
        }
        (None, Some(e)) => {
            let _ = writeln!(s, "frequency model not fitted: {e}");
        }
        (None, None) => {}
    }
    if c.vif.is_empty() {
        let _ = writeln!(s, "VIF undefined: {}", c.vif_error.as_deref().unwrap_or("unknown"));
    } else {
        let v: Vec<String> = c.vif.iter().map(|x| format!("{x:.3}")).collect();
        let _ = writeln!(s, "VIF (semantic, phonetic, visual) = ({})", v.join(", "));
    }
    s
}

pub fn engagement(pairs: &Path, comments: &Path, viral_threshold: u64, top_k: usize) -> Result<EngagementReport> {
    let pairs: Vec<PairRecord> = read_jsonl(pairs)?;
    let comments: Vec<CommentRecord> = read_jsonl(comments)?;
    let likes: BTreeMap<String, u64> = comments.into_iter().map(|c| (c.comment_id, c.like_count)).collect();
    Ok(engagement_profile(&pairs, &likes, viral_threshold, top_k))
}

pub fn render_engagement(r: &EngagementReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} comments, {} at or above {} likes, {:.1}% with zero likes",
        r.comments,
        r.viral_comments,
        r.viral_threshold,
        100.0 * r.zero_like_fraction
    );
    for (i, (cat, likes)) in r.ranking.iter().enumerate() {
        let _ = writeln!(s, "{:>3}. {:<6} {:>10}", i + 1, cat, likes);
    }
    if r.unjoined_pairs > 0 {
        let _ = writeln!(s, "{} pairs had no matching comment", r.unjoined_pairs);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsField {
    LikeCount,
    PostedAt,
}

impl std::str::FromStr for KsField {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "like_count" => Ok(KsField::LikeCount),
            "posted_at" => Ok(KsField::PostedAt),
            other => Err(Error::Invalid(format!("unknown field {other:?}; expected like_count or posted_at"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Representativeness {
    pub field: KsField,
    pub test: KsResult,
}

/// Two-sample KS test comparing a sample of comments with its population.
pub fn representativeness(sample: &Path, population: &Path, fields: &[KsField]) -> Result<Vec<Representativeness>> {
    let a: Vec<CommentRecord> = read_jsonl(sample)?;
    let b: Vec<CommentRecord> = read_jsonl(population)?;
    let col = |v: &[CommentRecord], f: KsField| -> Vec<f64> {
        v.iter()
            .map(|c| match f {
                KsField::LikeCount => c.like_count as f64,
                KsField::PostedAt => c.posted_at as f64,
            })
            .collect()
    };
    fields
        .iter()
        .map(|&f| {
            let test = ks_two_sample(&col(&a, f), &col(&b, f)).map_err(|e| Error::Invalid(e.to_string()))?;
            Ok(Representativeness { field: f, test })
        })
        .collect()
}

pub fn render_representativeness(r: &[Representativeness]) -> String {
    let mut s = String::new();
    for t in r {
        let _ = writeln!(
            s,
            "{:?}: D = {:.4}, p = {:.4} ({:?}, n = {} vs {})",
            t.field, t.test.d_statistic, t.test.p_value, t.test.method, t.test.n1, t.test.n2
        );
    }
    s
}

/// Trade-off table from a JSON array of rounds.
pub fn tradeoff(rounds: &Path, records: Option<u64>, seconds_per_record: f64) -> Result<TradeoffTable> {
    let rounds: Vec<RoundStats> = read_json(rounds)?;
    Ok(tradeoff_report(&rounds, records.map(|n| (n, seconds_per_record))))
}
