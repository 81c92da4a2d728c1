//! Variance inflation factors.
//!
//! Column j is regressed on the remaining columns as given, with no
//! intercept added. R² is centered when the remaining columns include a
//! constant column and uncentered otherwise, the convention of the common
//! statistics packages. Exact collinearity yields +∞.

use alloc::vec::Vec;

use super::linalg::{dot, residual, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum VifError {
    #[error("need more rows than columns (n = {n}, p = {p})")]
    TooFewRows { n: usize, p: usize },
    #[error("design has no columns")]
    NoColumns,
    #[error("column {0} is all zeros")]
    ZeroColumn(usize),
}

fn is_constant(col: &[f64]) -> bool {
    col.first().is_some_and(|&c| c != 0.0 && col.iter().all(|&v| v == c))
}

pub fn vif(design: &Matrix) -> Result<Vec<f64>, VifError> {
    let (n, p) = (design.rows(), design.cols());
    if p == 0 {
        return Err(VifError::NoColumns);
    }
    if n <= p {
        return Err(VifError::TooFewRows { n, p });
    }
    let cols: Vec<Vec<f64>> = (0..p).map(|j| design.column(j)).collect();
    if let Some(j) = cols.iter().position(|c| c.iter().all(|v| *v == 0.0)) {
        return Err(VifError::ZeroColumn(j));
    }
    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        let others: Vec<Vec<f64>> = cols.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, c)| c.clone()).collect();
        let y = &cols[j];
        let centered = others.iter().any(|c| is_constant(c));
        let sst = if centered {
            let mean = y.iter().sum::<f64>() / n as f64;
            y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        } else {
            dot(y, y)
        };
        let r = residual(y, &others);
        let ssr = dot(&r, &r);
        // a column that the others reproduce exactly
        let v = if sst == 0.0 || ssr <= 1e-12 * dot(y, y) { f64::INFINITY } else { sst / ssr };
        out.push(v);
    }
    Ok(out)
}
