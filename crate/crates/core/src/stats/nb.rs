//! Negative-binomial (NB2) regression with a log link.
//!
//! Variance is `μ + μ²/θ`. β is fitted by iteratively reweighted least
//! squares at fixed θ, and θ by a one-dimensional search on ln θ at fixed β;
//! the two alternate until the log-likelihood settles. Each half-step is kept
//! only if it does not lower the log-likelihood, so the trace is monotone.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, fabs, lgamma, log, sqrt};
use serde::{Deserialize, Serialize};

use super::linalg::{cholesky, cholesky_inverse, cholesky_solve, dot, Matrix};
use super::special::normal_two_sided;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbOptions {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Relative log-likelihood change that counts as converged.
    pub tol: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl Default for NbOptions {
    fn default() -> Self {
        Self { max_outer: 100, max_inner: 100, tol: 1e-8, theta_min: 1e-6, theta_max: 1e8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub z_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub rate_ratios: Vec<f64>,
    /// θ in `Var = μ + μ²/θ`.
    pub dispersion: f64,
    pub log_likelihood: f64,
    /// Log-likelihood after each outer iteration, starting with the initial
    /// fit.
    pub ll_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub n: usize,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NbError {
    #[error("design has {rows} rows but y has {y} values")]
    DimensionMismatch { rows: usize, y: usize },
    #[error("need more observations than parameters (n = {n}, p = {p})")]
    TooFewObservations { n: usize, p: usize },
    #[error("design row {0} is not finite")]
    NonFinite(usize),
    #[error("design matrix is rank deficient")]
    Singular,
}

struct Problem<'a> {
    x: &'a Matrix,
    y: Vec<f64>,
    ln_y_fact: f64,
}

impl Problem<'_> {
    fn mu(&self, beta: &[f64]) -> Vec<f64> {
        self.x.mul_vec(beta).into_iter().map(|eta| exp(eta.clamp(-700.0, 700.0))).collect()
    }

    fn ll_mu(&self, mu: &[f64], theta: f64) -> f64 {
        let lt = log(theta);
        let lg_t = lgamma(theta);
        let mut s = -self.ln_y_fact;
        for (&y, &m) in self.y.iter().zip(mu) {
            let l_tm = log(theta + m);
            s += lgamma(y + theta) - lg_t + theta * (lt - l_tm);
            if y > 0.0 {
                s += y * (log(m) - l_tm);
            }
        }
        s
    }

    fn ll(&self, beta: &[f64], theta: f64) -> f64 {
        self.ll_mu(&self.mu(beta), theta)
    }

    /// Weighted least-squares step from working weights and responses.
    fn wls(&self, mu: &[f64], eta: &[f64], theta: f64) -> Option<Vec<f64>> {
        let p = self.x.cols();
        let mut xtwx = Matrix::zeros(p, p);
        let mut xtwz = vec![0.0; p];
        for i in 0..self.x.rows() {
            let m = mu[i].max(1e-300);
            let w = m / (1.0 + m / theta);
            let z = eta[i] + (self.y[i] - m) / m;
            let row = self.x.row(i);
            for a in 0..p {
                xtwz[a] += w * row[a] * z;
                for b in 0..=a {
                    let v = xtwx.get(a, b) + w * row[a] * row[b];
                    xtwx.set(a, b, v);
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx.set(b, a, xtwx.get(a, b));
            }
        }
        let l = cholesky(&xtwx)?;
        Some(cholesky_solve(&l, &xtwz))
    }

    /// IRLS at fixed θ with step halving; never returns a worse β.
    fn fit_beta(&self, beta: Vec<f64>, theta: f64, opts: &NbOptions) -> Result<(Vec<f64>, f64), NbError> {
        let mut beta = beta;
        let mut ll = self.ll(&beta, theta);
        for _ in 0..opts.max_inner {
            let eta = self.x.mul_vec(&beta);
            let mu: Vec<f64> = eta.iter().map(|e| exp(e.clamp(-700.0, 700.0))).collect();
            let mut cand = self.wls(&mu, &eta, theta).ok_or(NbError::Singular)?;
            let mut cand_ll = self.ll(&cand, theta);
            let mut halvings = 0;
            while !(cand_ll >= ll) && halvings < 40 {
                cand = cand.iter().zip(&beta).map(|(c, b)| 0.5 * (c + b)).collect();
                cand_ll = self.ll(&cand, theta);
                halvings += 1;
            }
            if !(cand_ll >= ll) {
                break;
            }
            let change = cand_ll - ll;
            beta = cand;
            ll = cand_ll;
            if change <= opts.tol * fabs(ll).max(1.0) {
                break;
            }
        }
        Ok((beta, ll))
    }

    /// Golden-section search for θ on ln θ around the current value.
    fn fit_theta(&self, beta: &[f64], theta: f64, opts: &NbOptions) -> (f64, f64) {
        let mu = self.mu(beta);
        let f = |t: f64| self.ll_mu(&mu, exp(t));
        let (tmin, tmax) = (log(opts.theta_min), log(opts.theta_max));
        let t0 = log(theta);
        let (mut a, mut b) = ((t0 - 4.0).max(tmin), (t0 + 4.0).min(tmax));
        let g = (sqrt(5.0) - 1.0) / 2.0;
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        while b - a > 1e-10 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = f(d);
            }
        }
        let t = 0.5 * (a + b);
        (exp(t), f(t))
    }
}

fn initial_beta(prob: &Problem<'_>) -> Result<Vec<f64>, NbError> {
    let mu: Vec<f64> = prob.y.iter().map(|y| y + 0.1).collect();
    let eta: Vec<f64> = mu.iter().map(|m| log(*m)).collect();
    // a very large θ makes the first step a Poisson step
    prob.wls(&mu, &eta, 1e12).ok_or(NbError::Singular)
}

fn moment_theta(y: &[f64], mu: &[f64], opts: &NbOptions) -> f64 {
    let num: f64 = mu.iter().map(|m| m * m).sum();
    let den: f64 = y.iter().zip(mu).map(|(y, m)| (y - m) * (y - m) - m).sum();
    let t = if den > 0.0 { num / den } else { opts.theta_max };
    t.clamp(opts.theta_min, opts.theta_max)
}

/// Maximum-likelihood NB2 fit. The design should carry its own intercept
/// column.
pub fn nb_regression(design: &Matrix, y: &[u64], opts: &NbOptions) -> Result<NbFit, NbError> {
    let (n, p) = (design.rows(), design.cols());
    if n != y.len() {
        return Err(NbError::DimensionMismatch { rows: n, y: y.len() });
    }
    if n <= p || p == 0 {
        return Err(NbError::TooFewObservations { n, p });
    }
    if let Some(i) = (0..n).find(|&i| design.row(i).iter().any(|v| !v.is_finite())) {
        return Err(NbError::NonFinite(i));
    }
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let ln_y_fact = yf.iter().map(|v| lgamma(v + 1.0)).sum();
    let prob = Problem { x: design, y: yf, ln_y_fact };

    let mut diagnostics = Vec::new();
    let beta0 = initial_beta(&prob)?;
    let mut theta = moment_theta(&prob.y, &prob.mu(&beta0), opts);
    let (mut beta, mut ll) = prob.fit_beta(beta0, theta, opts)?;
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_outer {
        iterations += 1;
        let prev = ll;
        let (t_new, ll_t) = prob.fit_theta(&beta, theta, opts);
        if ll_t >= ll {
            theta = t_new;
            ll = ll_t;
        }
        let (b_new, ll_b) = prob.fit_beta(beta.clone(), theta, opts)?;
        if ll_b >= ll {
            beta = b_new;
            ll = ll_b;
        }
        debug_assert!(ll >= prev, "log-likelihood decreased: {prev} -> {ll}");
        trace.push(ll);
        if fabs(ll - prev) <= opts.tol * fabs(prev).max(1e-300) {
            converged = true;
            break;
        }
    }
    if !converged {
        diagnostics.push(format!("no convergence after {iterations} outer iterations"));
    }
    if theta >= opts.theta_max * 0.999 {
        diagnostics.push(String::from("dispersion at upper bound: no overdispersion relative to Poisson"));
    }
    if theta <= opts.theta_min * 1.001 {
        diagnostics.push(String::from("dispersion at lower bound"));
    }
    if beta.iter().any(|b| fabs(*b) > 30.0) {
        diagnostics.push(String::from("coefficient magnitude above 30: possible separation"));
    }

    let (std_errors, z_values, p_values) = wald(&prob, &beta, theta);
    if std_errors.iter().any(|s| !s.is_finite()) {
        diagnostics.push(String::from("observed information not positive definite"));
    }
    Ok(NbFit {
        rate_ratios: beta.iter().map(|b| exp(*b)).collect(),
        coefficients: beta,
        std_errors,
        z_values,
        p_values,
        dispersion: theta,
        log_likelihood: ll,
        ll_trace: trace,
        converged,
        iterations,
        n,
        diagnostics,
    })
}

/// Wald statistics from the observed information of β at fixed θ.
fn wald(prob: &Problem<'_>, beta: &[f64], theta: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let p = beta.len();
    let mu = prob.mu(beta);
    let mut info = Matrix::zeros(p, p);
    for i in 0..prob.x.rows() {
        let (m, y) = (mu[i], prob.y[i]);
        let w = theta * m * (y + theta) / ((m + theta) * (m + theta));
        let row = prob.x.row(i);
        for a in 0..p {
            for b in 0..p {
                info.set(a, b, info.get(a, b) + w * row[a] * row[b]);
            }
        }
    }
    let Some(l) = cholesky(&info) else {
        return (vec![f64::NAN; p], vec![f64::NAN; p], vec![f64::NAN; p]);
    };
    let cov = cholesky_inverse(&l);
    let se: Vec<f64> = (0..p).map(|j| sqrt(cov.get(j, j))).collect();
    let z: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b / s).collect();
    let pv = z.iter().map(|z| normal_two_sided(*z)).collect();
    (se, z, pv)
}

/// Design with an intercept column followed by the given covariates.
pub fn with_intercept(covariates: &[Vec<f64>]) -> Matrix {
    let n = covariates.first().map_or(0, Vec::len);
    let p = covariates.len() + 1;
    let mut m = Matrix::zeros(n, p);
    for i in 0..n {
        m.set(i, 0, 1.0);
        for (j, c) in covariates.iter().enumerate() {
            m.set(i, j + 1, c[i]);
        }
    }
    m
}

/// Mean of μ̂ over the rows of `design`.
pub fn fitted_mean(design: &Matrix, fit: &NbFit) -> f64 {
    let s: f64 = (0..design.rows()).map(|i| exp(dot(design.row(i), &fit.coefficients))).sum();
    s / design.rows() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_ratio_identity() {
        assert!((exp(-1.44) - 0.23692775868212176).abs() < 1e-15);
        assert_eq!(format!("{:.2}", exp(-1.44)), "0.24");
    }

    #[test]
    fn intercept_only_matches_sample_mean() {
        let y = [0u64, 1, 1, 2, 3, 5, 8, 0, 0, 13, 2, 1];
        let x = Matrix::new(y.len(), 1, vec![1.0; y.len()]).unwrap();
        let fit = nb_regression(&x, &y, &NbOptions::default()).unwrap();
        let mean = y.iter().sum::<u64>() as f64 / y.len() as f64;
        assert!(fit.converged, "{:?}", fit.diagnostics);
        assert!((fit.rate_ratios[0] - mean).abs() < 1e-6 * mean, "{} vs {mean}", fit.rate_ratios[0]);
        assert!(fit.ll_trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = Matrix::new(2, 2, vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(matches!(nb_regression(&x, &[1, 2], &NbOptions::default()), Err(NbError::TooFewObservations { .. })));
        assert!(matches!(nb_regression(&x, &[1], &NbOptions::default()), Err(NbError::DimensionMismatch { .. })));
    }

    #[test]
    fn all_zero_counts_do_not_converge_silently() {
        let x = Matrix::new(5, 1, vec![1.0; 5]).unwrap();
        let fit = nb_regression(&x, &[0; 5], &NbOptions::default()).unwrap();
        assert!(!fit.converged || !fit.diagnostics.is_empty(), "{fit:?}");
    }
}
