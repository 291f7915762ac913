use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Streaming count, mean and central sums `M2..M4`, mergeable in any order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn new() -> Self {
        Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            ..Default::default()
        }
    }

    pub fn from_samples<I: IntoIterator<Item = f64>>(it: I) -> Self {
        let mut s = Self::new();
        for x in it {
            s.push(x);
        }
        s
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term1;
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn merge(&self, other: &Summary) -> Summary {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        let d2 = d * d;
        let mean = self.mean + d * nb / n;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3 + other.m3 + d2 * d * na * nb * (na - nb) / (n * n) + 3.0 * d * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d * (na * other.m3 - nb * self.m3) / n;
        Summary {
            n: self.n + other.n,
            mean,
            m2,
            m3,
            m4,
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n as f64 - 1.0)).max(0.0)
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        (self.variance() / self.n as f64).sqrt()
    }

    /// Sample skewness `g1`; zero for degenerate data.
    pub fn skewness(&self) -> f64 {
        if self.m2 <= 0.0 {
            return 0.0;
        }
        (self.n as f64).sqrt() * self.m3 / self.m2.powf(1.5)
    }

    /// Excess kurtosis `g2`.
    pub fn excess_kurtosis(&self) -> f64 {
        if self.m2 <= 0.0 {
            return 0.0;
        }
        self.n as f64 * self.m4 / (self.m2 * self.m2) - 3.0
    }

    /// Population central moment of order `k ≤ 4`.
    pub fn central_moment(&self, k: u32) -> Result<f64> {
        let n = self.n as f64;
        match k {
            0 => Ok(1.0),
            1 => Ok(0.0),
            2 => Ok(self.m2 / n),
            3 => Ok(self.m3 / n),
            4 => Ok(self.m4 / n),
            _ => Err(Error::invalid("k", "streaming moments stop at order 4; use the raw samples")),
        }
    }

    /// Raw moment `E[X^k]` for `k ≤ 4`.
    pub fn raw_moment(&self, k: u32) -> Result<f64> {
        let mu = self.mean;
        let c2 = self.central_moment(2)?;
        let c3 = self.central_moment(3)?;
        let c4 = self.central_moment(4)?;
        match k {
            0 => Ok(1.0),
            1 => Ok(mu),
            2 => Ok(c2 + mu * mu),
            3 => Ok(c3 + 3.0 * mu * c2 + mu.powi(3)),
            4 => Ok(c4 + 4.0 * mu * c3 + 6.0 * mu * mu * c2 + mu.powi(4)),
            _ => Err(Error::invalid("k", "streaming moments stop at order 4; use the raw samples")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    Raw,
    Central,
}

/// Moment of order `k ≤ 4`.
pub fn moments(emp: &EmpiricalDistribution, k: u32, kind: MomentKind) -> Result<f64> {
    match kind {
        MomentKind::Raw => emp.summary.raw_moment(k),
        MomentKind::Central => emp.summary.central_moment(k),
    }
}

/// A mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub value: f64,
    pub std_err: f64,
}

impl PointEstimate {
    pub fn from_samples<I: IntoIterator<Item = f64>>(it: I) -> Self {
        let s = Summary::from_samples(it);
        Self {
            value: s.mean,
            std_err: s.std_err(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            value: self.value * c,
            std_err: self.std_err * c.abs(),
        }
    }
}

/// Ensemble samples with their streaming summary.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub samples: Vec<f64>,
    pub summary: Summary,
}

impl EmpiricalDistribution {
    pub fn new(samples: Vec<f64>) -> Self {
        let summary = Summary::from_samples(samples.iter().cloned());
        Self { samples, summary }
    }

    pub fn from_counts(counts: &[u64]) -> Self {
        Self::new(counts.iter().map(|&c| c as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_integer_valued(&self) -> bool {
        self.samples.iter().all(|x| x.fract() == 0.0 && *x >= 0.0)
    }

    /// Frequencies of `0, 1, …, max` for non-negative integer samples.
    pub fn histogram(&self) -> Option<Vec<u64>> {
        if !self.is_integer_valued() {
            return None;
        }
        let top = self.samples.iter().cloned().fold(0.0, f64::max) as usize;
        let mut h = vec![0u64; top + 1];
        for &x in &self.samples {
            h[x as usize] += 1;
        }
        Some(h)
    }

    /// Empirical `P(X ≥ t)`.
    pub fn tail(&self, t: f64) -> f64 {
        if self.samples.is_empty() {
            return f64::NAN;
        }
        self.samples.iter().filter(|&&x| x >= t).count() as f64 / self.samples.len() as f64
    }

    pub fn merge(&self, other: &EmpiricalDistribution) -> EmpiricalDistribution {
        let mut samples = self.samples.clone();
        samples.extend_from_slice(&other.samples);
        EmpiricalDistribution {
            samples,
            summary: self.summary.merge(&other.summary),
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W, column: &str) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([column])?;
        for x in &self.samples {
            wr.write_record([format_sample(*x)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Shortest round-trip formatting, so CSVs are byte-stable.
pub fn format_sample(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(xs: &[f64]) -> (f64, f64, f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let c = |k: i32| xs.iter().map(|x| (x - m).powi(k)).sum::<f64>();
        (m, c(2), c(3), c(4))
    }

    #[test]
    fn matches_two_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1009) as f64 / 13.0).collect();
        let s = Summary::from_samples(xs.iter().cloned());
        let (m, c2, c3, c4) = naive(&xs);
        assert!((s.mean - m).abs() < 1e-12 * m.abs());
        assert!((s.m2 - c2).abs() < 1e-10 * c2);
        assert!((s.m3 - c3).abs() < 1e-8 * c2.powf(1.5));
        assert!((s.m4 - c4).abs() < 1e-10 * c4);
    }

    #[test]
    fn constant_has_zero_variance() {
        let s = Summary::from_samples(std::iter::repeat(2.5).take(50));
        assert_eq!(s.variance(), 0.0);
        assert_eq!(s.skewness(), 0.0);
        let e = EmpiricalDistribution::new(vec![3.0; 10]);
        assert_eq!(moments(&e, 2, MomentKind::Central).unwrap(), 0.0);
        assert_eq!(moments(&e, 2, MomentKind::Raw).unwrap(), 9.0);
        assert!(moments(&e, 5, MomentKind::Raw).is_err());
    }

    #[test]
    fn histogram_and_tail() {
        let e = EmpiricalDistribution::from_counts(&[0, 2, 2, 1, 0, 0]);
        assert_eq!(e.histogram().unwrap(), vec![3, 1, 2]);
        assert_eq!(e.tail(1.0), 0.5);
        assert_eq!(e.tail(0.0), 1.0);
        assert!(EmpiricalDistribution::new(vec![0.5]).histogram().is_none());
    }

    proptest! {
        #[test]
        fn merge_equals_concatenation(a in proptest::collection::vec(-100.0f64..100.0, 1..60),
                                      b in proptest::collection::vec(-100.0f64..100.0, 1..60)) {
            let sa = Summary::from_samples(a.iter().cloned());
            let sb = Summary::from_samples(b.iter().cloned());
            let all = Summary::from_samples(a.iter().chain(&b).cloned());
            let m = sa.merge(&sb);
            let close = |x: f64, y: f64, scale: f64| (x - y).abs() <= 1e-12 * scale.max(1.0);
            prop_assert_eq!(m.n, all.n);
            prop_assert!(close(m.mean, all.mean, all.mean.abs()));
            prop_assert!(close(m.m2, all.m2, all.m2));
            prop_assert!(close(m.m3, all.m3, all.m2.powf(1.5)));
            prop_assert!(close(m.m4, all.m4, all.m4));
            prop_assert!(m.variance() >= 0.0);
        }
    }
}
