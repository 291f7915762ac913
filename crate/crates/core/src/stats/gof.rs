//! Reference distributions and goodness-of-fit reports.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::factorial::ln_factorial;

use super::summary::EmpiricalDistribution;
use crate::error::{Error, Result};

/// Outcome of one statistical check; `pass ⇔ value ≤ threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub n: usize,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl TestReport {
    pub fn new(name: impl Into<String>, value: f64, threshold: f64, n: usize) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
            n,
            notes: Vec::new(),
        }
    }

    /// A report that did not run to a meaningful value.
    pub fn degenerate(name: impl Into<String>, n: usize, why: impl Into<String>) -> Self {
        let mut r = Self::new(name, f64::INFINITY, 0.0, n);
        r.pass = false;
        r.notes.push(why.into());
        r
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

/// Asymptotic 95% point of the one-sample Kolmogorov–Smirnov statistic.
pub fn ks_threshold(n: usize) -> f64 {
    1.358 / (n as f64).sqrt()
}

/// `λ^n e^{-λ} / n!`, evaluated in log space.
pub fn poisson_pmf(lambda: f64, n: u64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid("lambda", format!("{lambda} must be positive and finite")));
    }
    Ok((n as f64 * lambda.ln() - lambda - ln_factorial(n)).exp())
}

/// `(1/2) Σ_n |p̂(n) - Poisson(λ)(n)|`, including the Poisson mass beyond
/// the sampled range.
pub fn total_variation_poisson(emp: &EmpiricalDistribution, lambda: f64, threshold: f64) -> Result<TestReport> {
    let hist = emp
        .histogram()
        .ok_or_else(|| Error::invalid("samples", "total variation needs non-negative integer samples"))?;
    let n = emp.len();
    if n == 0 {
        return Ok(TestReport::degenerate("tv_poisson", 0, "no samples"));
    }
    let top = (hist.len() as f64).max(lambda + 20.0 * lambda.sqrt() + 20.0) as u64;
    let mut tv = 0.0;
    let mut mass = 0.0;
    for k in 0..=top {
        let p = poisson_pmf(lambda, k)?;
        let q = hist.get(k as usize).map_or(0.0, |&c| c as f64 / n as f64);
        tv += (p - q).abs();
        mass += p;
    }
    tv += (1.0 - mass).max(0.0);
    Ok(TestReport::new("tv_poisson", 0.5 * tv, threshold, n).with_note(format!("lambda = {lambda}")))
}

pub fn normal_cdf(x: f64, mu: f64, sigma: f64) -> f64 {
    0.5 * erfc(-(x - mu) / (sigma * std::f64::consts::SQRT_2))
}

/// One-sample KS statistic `sup_x |F_n(x) - Φ((x - μ)/σ)|`, correct with ties.
pub fn ks_statistic(samples: &[f64], mu: f64, sigma: f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j < xs.len() && xs[j] == xs[i] {
            j += 1;
        }
        let f = normal_cdf(xs[i], mu, sigma);
        d = d.max((j as f64 / n - f).abs()).max((f - i as f64 / n).abs());
        i = j;
    }
    d
}

/// KS test against `Normal(mu, sigma²)`; `threshold` defaults to the
/// asymptotic 95% point. Degenerate input yields a failing report.
pub fn ks_normal(samples: &[f64], mu: f64, sigma: f64, threshold: Option<f64>) -> TestReport {
    let n = samples.len();
    if n < 10 {
        return TestReport::degenerate("ks_normal", n, format!("need at least 10 samples, got {n}"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
        return TestReport::degenerate("ks_normal", n, format!("degenerate reference: mu = {mu}, sigma = {sigma}"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return TestReport::degenerate("ks_normal", n, "non-finite samples");
    }
    let mut r = TestReport::new("ks_normal", ks_statistic(samples, mu, sigma), threshold.unwrap_or(ks_threshold(n)), n);
    if samples.iter().all(|&x| x == samples[0]) {
        r.notes.push("constant samples".into());
    }
    r
}

/// Lindeberg ratio `Σ_m E[Y_m²; |Y_m| > ε·s] / s²` with `s² = Σ_m E[Y_m²]`.
///
/// `cells[m]` holds realizations of the centred cell variable `Y_m`.
pub fn lindeberg_diagnostic(cells: &[Vec<f64>], eps: f64) -> f64 {
    let second = |ys: &[f64], cut: f64| {
        if ys.is_empty() {
            return 0.0;
        }
        ys.iter().filter(|y| y.abs() > cut).map(|y| y * y).sum::<f64>() / ys.len() as f64
    };
    let total: f64 = cells.iter().map(|c| second(c, -1.0)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let cut = eps * total.sqrt();
    cells.iter().map(|c| second(c, cut)).sum::<f64>() / total
}
