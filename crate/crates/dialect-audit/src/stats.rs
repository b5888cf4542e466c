//! Significance tests, effect sizes, and bootstrap intervals over bias
//! samples. The independent test is Welch's unequal-variance form; bootstrap
//! intervals are percentile intervals with linear-interpolation quantiles.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

/// Result of a t-test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: f64,
    pub n: usize,
    pub kind: TestKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    OneSampleT,
    IndependentT,
}

/// A bootstrap percentile interval around the sample mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalResult {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub resamples: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n-1 denominator).
fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Two-sided p-value from Student's t with the given degrees of freedom.
fn two_sided_p(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    2.0 * dist.cdf(-t.abs())
}

/// One-sample t-test of the mean against `mu0`.
pub fn one_sample_t(samples: &[f64], mu0: f64) -> Result<TestResult> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Stats(format!("one_sample_t needs n >= 2, got {n}")));
    }
    let var = variance(samples);
    if var == 0.0 {
        return Err(Error::Stats(
            "zero variance: every sample is identical; report the exact sign instead of a t-test"
                .into(),
        ));
    }
    let df = (n - 1) as f64;
    let t = (mean(samples) - mu0) / (var / n as f64).sqrt();
    Ok(TestResult { statistic: t, p_value: two_sided_p(t, df), df, n, kind: TestKind::OneSampleT })
}

/// Welch's unequal-variance two-sample t-test with Welch-Satterthwaite df.
pub fn independent_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let (na, nb) = (a.len(), b.len());
    if na < 2 || nb < 2 {
        return Err(Error::Stats(format!(
            "independent_t needs n >= 2 in each group, got {na} and {nb}"
        )));
    }
    let (va, vb) = (variance(a), variance(b));
    if va == 0.0 && vb == 0.0 {
        return Err(Error::Stats("zero variance in both groups".into()));
    }
    let sa = va / na as f64;
    let sb = vb / nb as f64;
    let t = (mean(a) - mean(b)) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa.powi(2) / (na as f64 - 1.0) + sb.powi(2) / (nb as f64 - 1.0));
    Ok(TestResult { statistic: t, p_value: two_sided_p(t, df), df, n: na + nb, kind: TestKind::IndependentT })
}

/// One-sample Cohen's d: (mean - mu0) / sd.
pub fn cohens_d_one_sample(samples: &[f64], mu0: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Stats("cohens_d needs n >= 2".into()));
    }
    let var = variance(samples);
    if var == 0.0 {
        return Err(Error::Stats("zero variance".into()));
    }
    Ok((mean(samples) - mu0) / var.sqrt())
}

/// Two-sample Cohen's d with pooled standard deviation.
pub fn cohens_d_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (a.len(), b.len());
    if na < 2 || nb < 2 {
        return Err(Error::Stats("cohens_d needs n >= 2 in each group".into()));
    }
    let pooled = ((na as f64 - 1.0) * variance(a) + (nb as f64 - 1.0) * variance(b))
        / (na + nb - 2) as f64;
    if pooled == 0.0 {
        return Err(Error::Stats("zero pooled variance".into()));
    }
    Ok((mean(a) - mean(b)) / pooled.sqrt())
}

/// Quantile of a sorted slice with linear interpolation between order
/// statistics (position q * (n - 1)).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty() && (0.0..=1.0).contains(&q));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Percentile bootstrap interval for the mean. Deterministic given the RNG.
pub fn bootstrap_ci<R: Rng>(
    samples: &[f64],
    level: f64,
    resamples: usize,
    rng: &mut R,
) -> Result<IntervalResult> {
    if samples.is_empty() {
        return Err(Error::Stats("bootstrap_ci needs n >= 1".into()));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::Stats(format!("level must be in (0,1), got {level}")));
    }
    if resamples < 1000 {
        return Err(Error::Stats(format!("resamples must be >= 1000, got {resamples}")));
    }
    let n = samples.len();
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += samples[rng.gen_range(0..n)];
        }
        means.push(sum / n as f64);
    }
    means.sort_by(|x, y| x.partial_cmp(y).expect("no NaN in resample means"));
    let alpha = (1.0 - level) / 2.0;
    Ok(IntervalResult {
        mean: mean(samples),
        lo: quantile(&means, alpha),
        hi: quantile(&means, 1.0 - alpha),
        level,
        resamples,
    })
}
