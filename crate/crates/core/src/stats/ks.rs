//! Two-sample Kolmogorov–Smirnov test.

use alloc::vec;

use libm::sqrt;
use serde::{Deserialize, Serialize};

use super::special::kolmogorov_sf;

/// Per-side sample size from which the asymptotic distribution is used.
pub const ASYMPTOTIC_MIN_N: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsMethod {
    Exact,
    Asymptotic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d_statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub method: KsMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum KsError {
    #[error("sample {0} is empty")]
    EmptySample(u8),
    #[error("sample {0} contains NaN")]
    NotANumber(u8),
}

/// Two-sided test of whether `x` and `y` share a distribution.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<KsResult, KsError> {
    for (i, s) in [(1u8, x), (2u8, y)] {
        if s.is_empty() {
            return Err(KsError::EmptySample(i));
        }
        if s.iter().any(|v| v.is_nan()) {
            return Err(KsError::NotANumber(i));
        }
    }
    let d_num = d_numerator(x, y);
    let (n1, n2) = (x.len(), y.len());
    let d = d_num as f64 / (n1 as f64 * n2 as f64);
    let (p_value, method) = if n1 >= ASYMPTOTIC_MIN_N && n2 >= ASYMPTOTIC_MIN_N {
        let en = sqrt(n1 as f64 * n2 as f64 / (n1 + n2) as f64);
        (kolmogorov_sf(en * d), KsMethod::Asymptotic)
    } else {
        (exact_sf(n1, n2, d_num), KsMethod::Exact)
    };
    Ok(KsResult { d_statistic: d, p_value, n1, n2, method })
}

/// max over thresholds of |c1·n2 − c2·n1|, where c1 and c2 count sample
/// points ≤ the threshold. D is this divided by n1·n2.
fn d_numerator(x: &[f64], y: &[f64]) -> u128 {
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n1, n2) = (a.len() as i128, b.len() as i128);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best: i128 = 0;
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(p), Some(q)) => p.min(*q),
            (Some(p), None) => *p,
            (None, Some(q)) => *q,
            (None, None) => unreachable!(),
        };
        // consume every point equal to t on both sides before comparing
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        best = best.max((i as i128 * n2 - j as i128 * n1).abs());
    }
    best as u128
}

/// P(D ≥ observed) under the null, by counting lattice paths that stay
/// strictly inside the band |i·n2 − j·n1| < d_num. Each cell holds the
/// fraction of monotone paths to it that never left the band, which keeps
/// magnitudes in [0, 1].
fn exact_sf(n1: usize, n2: usize, d_num: u128) -> f64 {
    let inside = |i: usize, j: usize| ((i as i128 * n2 as i128) - (j as i128 * n1 as i128)).unsigned_abs() < d_num;
    let mut row = vec![0.0f64; n2 + 1];
    for i in 0..=n1 {
        for j in 0..=n2 {
            row[j] = if !inside(i, j) {
                0.0
            } else if i == 0 && j == 0 {
                1.0
            } else {
                let t = (i + j) as f64;
                let up = if i > 0 { row[j] * i as f64 / t } else { 0.0 };
                let left = if j > 0 { row[j - 1] * j as f64 / t } else { 0.0 };
                up + left
            };
        }
    }
    (1.0 - row[n2]).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn statistic_examples() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap().d_statistic, 0.0);
        assert_eq!(ks_two_sample(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]).unwrap().d_statistic, 1.0);
        assert_eq!(ks_two_sample(&[1.0, 3.0], &[2.0, 4.0]).unwrap().d_statistic, 0.5);
    }

    #[test]
    fn identical_samples_have_p_one() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap().p_value, 1.0);
    }

    #[test]
    fn exact_small_sample_p_values() {
        // reference values from the exact null distribution
        let r = ks_two_sample(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!((r.p_value - 0.1).abs() < 1e-12, "{}", r.p_value);
        let r = ks_two_sample(&[1.0, 3.0], &[2.0, 4.0]).unwrap();
        assert!((r.p_value - 1.0).abs() < 1e-12, "{}", r.p_value);
        assert_eq!(r.method, KsMethod::Exact);
    }

    #[test]
    fn exact_reference_unequal_sizes() {
        let x = [0.1, 0.5, 0.9, 1.3, 2.2, 2.8, 3.1, 4.0];
        let y = [0.7, 1.9, 2.5, 3.3, 3.9, 4.4, 5.0, 5.8, 6.1, 7.2];
        let r = ks_two_sample(&x, &y).unwrap();
        assert!((r.d_statistic - 0.575).abs() < 1e-12);
        assert!((r.p_value - 0.07043283513871751).abs() < 1e-10, "{}", r.p_value);
    }

    #[test]
    fn asymptotic_reference() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = (0..50).map(|i| i as f64 * 0.45 + 1.3).collect();
        let r = ks_two_sample(&x, &y).unwrap();
        assert_eq!(r.method, KsMethod::Asymptotic);
        assert!((r.d_statistic - 0.18).abs() < 1e-12);
        assert!((r.p_value - 0.46755799912056417).abs() < 1e-9, "{}", r.p_value);
    }

    #[test]
    fn empty_sample_rejected() {
        assert_eq!(ks_two_sample(&[], &[1.0]), Err(KsError::EmptySample(1)));
        assert_eq!(ks_two_sample(&[1.0], &[]), Err(KsError::EmptySample(2)));
    }
}
