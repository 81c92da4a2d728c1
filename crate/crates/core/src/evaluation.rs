//! Gold-standard scoring, two-rater agreement and round trade-off tables.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Candidate;
use crate::rules::{EquivalencePolicy, MatchClass};

/// Pipeline output for one gold-aligned record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalUnit {
    pub record_id: String,
    /// Consensus consistency; 0 for records whose ensemble failed.
    pub consistency: u8,
    /// Final pairs after rules and review.
    pub pairs: Vec<Candidate>,
    /// Pairs before human review, when the record was reviewed.
    #[serde(default)]
    pub provisional: Option<Vec<Candidate>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    CorrectExact,
    CorrectMinor,
    Incorrect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub correct_exact: usize,
    pub correct_minor: usize,
    pub incorrect: usize,
}

impl OutcomeCounts {
    pub fn add(&mut self, o: Outcome) {
        match o {
            Outcome::CorrectExact => self.correct_exact += 1,
            Outcome::CorrectMinor => self.correct_minor += 1,
            Outcome::Incorrect => self.incorrect += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.correct_exact + self.correct_minor + self.incorrect
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub exact_match_rate: f64,
    pub minor_accept_rate: f64,
    pub overall_accuracy: f64,
    /// Consistency score → outcome counts.
    pub contingency: BTreeMap<u8, OutcomeCounts>,
    /// Share of records that review moved from incorrect to correct.
    pub corrected_by_review: f64,
    pub outcomes: BTreeMap<String, Outcome>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("ids do not align with gold: missing from output {missing:?}, not in gold {extra:?}")]
    IdMismatch { missing: Vec<String>, extra: Vec<String> },
    #[error("duplicate record id {0}")]
    DuplicateId(String),
}

/// Classes a predicted pair list against the gold list. Order is ignored;
/// a different number of pairs is incorrect, otherwise the worst field
/// comparison decides.
pub fn classify(pred: &[Candidate], gold: &[Candidate], policy: &EquivalencePolicy) -> Outcome {
    let keep = |c: &&Candidate| !c.is_empty();
    let mut p: Vec<&Candidate> = pred.iter().filter(keep).collect();
    let mut g: Vec<&Candidate> = gold.iter().filter(keep).collect();
    if p.len() != g.len() {
        return Outcome::Incorrect;
    }
    p.sort_by_cached_key(|c| policy.canonical_candidate(c));
    g.sort_by_cached_key(|c| policy.canonical_candidate(c));
    let mut worst = MatchClass::Exact;
    for (a, b) in p.iter().zip(&g) {
        for m in [
            policy.compare(a.name.as_deref(), b.name.as_deref()),
            policy.compare(a.explanation.as_deref(), b.explanation.as_deref()),
        ] {
            worst = worst.max(m);
        }
    }
    match worst {
        MatchClass::Exact => Outcome::CorrectExact,
        MatchClass::Minor => Outcome::CorrectMinor,
        MatchClass::Different => Outcome::Incorrect,
    }
}

/// Scores output against gold keyed by record id.
pub fn score_against_gold(
    results: &[EvalUnit],
    gold: &BTreeMap<String, Vec<Candidate>>,
    policy: &EquivalencePolicy,
) -> Result<EvalReport, EvalError> {
    let mut by_id: BTreeMap<&str, &EvalUnit> = BTreeMap::new();
    for r in results {
        if by_id.insert(r.record_id.as_str(), r).is_some() {
            return Err(EvalError::DuplicateId(r.record_id.clone()));
        }
    }
    let pred_ids: BTreeSet<&str> = by_id.keys().copied().collect();
    let gold_ids: BTreeSet<&str> = gold.keys().map(String::as_str).collect();
    if pred_ids != gold_ids {
        return Err(EvalError::IdMismatch {
            missing: gold_ids.difference(&pred_ids).map(|s| String::from(*s)).collect(),
            extra: pred_ids.difference(&gold_ids).map(|s| String::from(*s)).collect(),
        });
    }

    let mut total = OutcomeCounts::default();
    let mut contingency: BTreeMap<u8, OutcomeCounts> = BTreeMap::new();
    let mut outcomes = BTreeMap::new();
    let mut corrected = 0usize;
    for (id, unit) in &by_id {
        let g = &gold[*id];
        let o = classify(&unit.pairs, g, policy);
        total.add(o);
        contingency.entry(unit.consistency).or_default().add(o);
        if let Some(prov) = &unit.provisional {
            if o != Outcome::Incorrect && classify(prov, g, policy) == Outcome::Incorrect {
                corrected += 1;
            }
        }
        outcomes.insert(String::from(*id), o);
    }
    let n = total.total();
    let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    Ok(EvalReport {
        n,
        exact_match_rate: rate(total.correct_exact),
        minor_accept_rate: rate(total.correct_minor),
        overall_accuracy: rate(total.correct_exact + total.correct_minor),
        contingency,
        corrected_by_review: rate(corrected),
        outcomes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub p_observed: f64,
    pub p_expected: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum KappaError {
    #[error("label lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no items to compare")]
    Empty,
    #[error("kappa undefined: chance agreement is 1 but observed agreement is {p_observed}")]
    Undefined { p_observed: f64 },
}

/// Two-rater Cohen's kappa over the empirical confusion matrix.
pub fn cohens_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<KappaResult, KappaError> {
    if a.len() != b.len() {
        return Err(KappaError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n == 0 {
        return Err(KappaError::Empty);
    }
    let mut ma: BTreeMap<&T, usize> = BTreeMap::new();
    let mut mb: BTreeMap<&T, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
        agree += usize::from(x == y);
    }
    let nf = n as f64;
    let p_o = agree as f64 / nf;
    // integer numerator keeps p_e exact enough to detect the degenerate case
    let pe_num: u128 = ma.iter().map(|(k, ca)| *ca as u128 * mb.get(k).copied().unwrap_or(0) as u128).sum();
    let pe_den = (n as u128) * (n as u128);
    let p_e = pe_num as f64 / pe_den as f64;
    let kappa = if pe_num == pe_den {
        if agree == n {
            1.0
        } else {
            return Err(KappaError::Undefined { p_observed: p_o });
        }
    } else {
        (p_o - p_e) / (1.0 - p_e)
    };
    Ok(KappaResult { kappa, p_observed: p_o, p_expected: p_e, n })
}

/// One iteration of the pipeline for the trade-off table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub label: String,
    pub accuracy_pct: Option<f64>,
    pub hours: Option<f64>,
    pub human_effort: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffTable {
    pub rows: Vec<RoundStats>,
}

/// Hours needed to annotate `n` records by hand at `secs_per_record`.
pub fn manual_baseline_hours(n: u64, secs_per_record: f64) -> f64 {
    n as f64 * secs_per_record / 3600.0
}

/// Trade-off table; when `manual` is `(n, secs)`, a manual baseline row is
/// prepended.
pub fn tradeoff_report(rounds: &[RoundStats], manual: Option<(u64, f64)>) -> TradeoffTable {
    let mut rows = Vec::with_capacity(rounds.len() + 1);
    if let Some((n, secs)) = manual {
        if !rounds.is_empty() {
            rows.push(RoundStats {
                label: String::from("Manual"),
                accuracy_pct: None,
                hours: Some(manual_baseline_hours(n, secs)),
                human_effort: String::from("full"),
            });
        }
    }
    rows.extend(rounds.iter().cloned());
    TradeoffTable { rows }
}

impl TradeoffTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Aligned plain-text table.
    pub fn render(&self) -> String {
        if self.rows.is_empty() {
            return String::new();
        }
        let cells: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.label.clone(),
                    r.accuracy_pct.map_or_else(|| String::from("-"), |a| format!("{a:.2}%")),
                    r.hours.map_or_else(|| String::from("-"), |h| format!("{h:.1}")),
                    r.human_effort.clone(),
                ]
            })
            .collect();
        let header = ["round", "accuracy", "hours", "human effort"];
        let mut widths = header.map(|h| h.chars().count());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |cols: [&str; 4]| {
            for (i, (c, w)) in cols.iter().zip(widths).enumerate() {
                let pad = w - c.chars().count();
                if i > 0 {
                    out.push_str("  ");
                }
                out.push_str(c);
                if i < 3 {
                    out.extend(core::iter::repeat_n(' ', pad));
                }
            }
            out.push('\n');
        };
        line(header);
        for row in &cells {
            line([&row[0], &row[1], &row[2], &row[3]]);
        }
        out
    }

    /// One `key=value` line per row.
    pub fn machine_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "round={} accuracy_pct={} hours={} human_effort={}",
                r.label,
                r.accuracy_pct.map_or_else(|| String::from("na"), |a| format!("{a:.2}")),
                r.hours.map_or_else(|| String::from("na"), |h| format!("{h:.1}")),
                r.human_effort
            );
        }
        out
    }
}
