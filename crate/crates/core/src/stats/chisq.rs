//! Pearson chi-square tests with Cramér's V.

use alloc::vec::Vec;

use libm::sqrt;
use serde::{Deserialize, Serialize};

use super::special::chi2_sf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiSquareMode {
    GoodnessOfFit,
    Independence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub cramers_v: f64,
    pub mode: ChiSquareMode,
    pub n: u64,
    pub observed: Vec<u64>,
    pub expected: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChiSquareError {
    #[error("expected count is zero in cell {0}")]
    ZeroExpected(usize),
    #[error("expected count is zero in cell ({0}, {1})")]
    ZeroExpectedCell(usize, usize),
    #[error("need at least two categories, got {0}")]
    TooFewCells(usize),
    #[error("observed and expected lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no observations")]
    Empty,
    #[error("table rows have unequal lengths")]
    Ragged,
    #[error("expected count in cell {0} is not a finite non-negative number")]
    InvalidExpected(usize),
}

/// Goodness-of-fit test. `expected` gives relative weights (counts or
/// probabilities) and is rescaled to the observed total; `None` means
/// uniform.
pub fn chi_square_gof(observed: &[u64], expected: Option<&[f64]>) -> Result<ChiSquareResult, ChiSquareError> {
    let k = observed.len();
    if k < 2 {
        return Err(ChiSquareError::TooFewCells(k));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(ChiSquareError::Empty);
    }
    let weights: Vec<f64> = match expected {
        Some(e) if e.len() != k => return Err(ChiSquareError::LengthMismatch(k, e.len())),
        Some(e) => e.to_vec(),
        None => alloc::vec![1.0; k],
    };
    if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
        return Err(ChiSquareError::InvalidExpected(i));
    }
    if let Some(i) = weights.iter().position(|w| *w == 0.0) {
        return Err(ChiSquareError::ZeroExpected(i));
    }
    let wsum: f64 = weights.iter().sum();
    let exp: Vec<f64> = weights.iter().map(|w| w / wsum * n as f64).collect();
    let statistic = pearson(observed.iter().copied().zip(exp.iter().copied()));
    let df = k - 1;
    Ok(ChiSquareResult {
        statistic,
        df,
        p_value: chi2_sf(statistic, df as f64),
        cramers_v: cramers_v(statistic, n, df),
        mode: ChiSquareMode::GoodnessOfFit,
        n,
        observed: observed.to_vec(),
        expected: exp,
    })
}

/// Test of independence on an r × c contingency table, without continuity
/// correction. `observed` and `expected` in the result are row-major.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<ChiSquareResult, ChiSquareError> {
    let r = table.len();
    let c = table.first().map_or(0, Vec::len);
    if table.iter().any(|row| row.len() != c) {
        return Err(ChiSquareError::Ragged);
    }
    if r < 2 || c < 2 {
        return Err(ChiSquareError::TooFewCells(r.min(c)));
    }
    let rows: Vec<u64> = table.iter().map(|row| row.iter().sum()).collect();
    let cols: Vec<u64> = (0..c).map(|j| table.iter().map(|row| row[j]).sum()).collect();
    let n: u64 = rows.iter().sum();
    if n == 0 {
        return Err(ChiSquareError::Empty);
    }
    let mut expected = Vec::with_capacity(r * c);
    for (i, ri) in rows.iter().enumerate() {
        for (j, cj) in cols.iter().enumerate() {
            let e = *ri as f64 * *cj as f64 / n as f64;
            if e == 0.0 {
                return Err(ChiSquareError::ZeroExpectedCell(i, j));
            }
            expected.push(e);
        }
    }
    let observed: Vec<u64> = table.iter().flatten().copied().collect();
    let statistic = pearson(observed.iter().copied().zip(expected.iter().copied()));
    let df = (r - 1) * (c - 1);
    Ok(ChiSquareResult {
        statistic,
        df,
        p_value: chi2_sf(statistic, df as f64),
        cramers_v: cramers_v(statistic, n, (r - 1).min(c - 1)),
        mode: ChiSquareMode::Independence,
        n,
        observed,
        expected,
    })
}

fn pearson(cells: impl Iterator<Item = (u64, f64)>) -> f64 {
    cells
        .map(|(o, e)| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum()
}

fn cramers_v(statistic: f64, n: u64, dim: usize) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    sqrt(statistic / (n as f64 * dim as f64)).clamp(0.0, 1.0)
}
