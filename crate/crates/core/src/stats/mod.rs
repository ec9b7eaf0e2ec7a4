//! Uncertainty quantification for benchmark numbers.
//!
//! Proportions (compile rates) get Wilson score intervals, means (CodeBLEU)
//! get normal intervals `mean ± z·sd/√n`, and pairs of rates are compared with
//! a pooled two-proportion z-test.

pub mod normal;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error("successes ({successes}) exceed trials ({n})")]
    SuccessesExceedTrials { successes: u64, n: u64 },
    #[error("confidence level {0} is outside (0, 1)")]
    BadConfidence(f64),
    #[error("standard deviation {0} is negative or not finite")]
    BadStandardDeviation(f64),
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    Wilson,
    NormalMean,
}

impl IntervalMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            IntervalMethod::Wilson => "wilson",
            IntervalMethod::NormalMean => "normal_mean",
        }
    }
}

/// A point estimate bracketed by a confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
    pub method: IntervalMethod,
}

impl IntervalEstimate {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Two-sided critical value for a confidence level, e.g. 1.95996… at 0.95.
pub fn critical_value(confidence: f64) -> Result<f64, StatsError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::BadConfidence(confidence));
    }
    Ok(normal::quantile(1.0 - (1.0 - confidence) / 2.0))
}

/// Wilson score interval for `successes` out of `n` trials.
pub fn wilson_interval(successes: u64, n: u64, confidence: f64) -> Result<IntervalEstimate, StatsError> {
    if n == 0 {
        return Err(StatsError::EmptySample);
    }
    if successes > n {
        return Err(StatsError::SuccessesExceedTrials { successes, n });
    }
    let z = critical_value(confidence)?;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * libm::sqrt(p * (1.0 - p) / nf + z2 / (4.0 * nf * nf));

    // The bounds touch 0 and 1 exactly at the extremes; pin them so rounding
    // in `center - half` cannot leak outside [0, 1].
    let lower = if successes == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let upper = if successes == n { 1.0 } else { (center + half).clamp(p, 1.0) };
    Ok(IntervalEstimate { point: p, lower, upper, confidence, method: IntervalMethod::Wilson })
}

/// Normal-approximation interval for a mean: `mean ± z·sd/√n`.
pub fn normal_mean_ci(mean: f64, sd: f64, n: u64, confidence: f64) -> Result<IntervalEstimate, StatsError> {
    if n == 0 {
        return Err(StatsError::EmptySample);
    }
    if !sd.is_finite() || sd < 0.0 {
        return Err(StatsError::BadStandardDeviation(sd));
    }
    let z = critical_value(confidence)?;
    let half = z * sd / libm::sqrt(n as f64);
    Ok(IntervalEstimate {
        point: mean,
        lower: mean - half,
        upper: mean + half,
        confidence,
        method: IntervalMethod::NormalMean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuityCorrection {
    #[default]
    None,
    /// Shrinks |p̂1 − p̂2| by ½(1/n1 + 1/n2), floored at zero.
    Yates,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZTestResult {
    pub z: f64,
    pub p_two_sided: f64,
    pub pooled_proportion: f64,
    /// Set when the pooled proportion is 0 or 1 and the statistic is undefined.
    pub degenerate: bool,
}

/// Pooled two-proportion z-test of `s1/n1` against `s2/n2`.
pub fn two_proportion_z(
    s1: u64,
    n1: u64,
    s2: u64,
    n2: u64,
    correction: ContinuityCorrection,
) -> Result<ZTestResult, StatsError> {
    for (s, n) in [(s1, n1), (s2, n2)] {
        if n == 0 {
            return Err(StatsError::EmptySample);
        }
        if s > n {
            return Err(StatsError::SuccessesExceedTrials { successes: s, n });
        }
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (s1 + s2) as f64 / (n1f + n2f);
    if s1 + s2 == 0 || s1 + s2 == n1 + n2 {
        return Ok(ZTestResult { z: 0.0, p_two_sided: 1.0, pooled_proportion: pooled, degenerate: true });
    }
    let mut diff = s1 as f64 / n1f - s2 as f64 / n2f;
    if correction == ContinuityCorrection::Yates {
        let shrink = 0.5 * (1.0 / n1f + 1.0 / n2f);
        let magnitude = (diff.abs() - shrink).max(0.0);
        diff = if diff < 0.0 { -magnitude } else { magnitude };
    }
    let se = libm::sqrt(pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f));
    let z = diff / se;
    let p = (2.0 * (1.0 - normal::cdf(z.abs()))).clamp(0.0, 1.0);
    Ok(ZTestResult { z, p_two_sided: p, pooled_proportion: pooled, degenerate: false })
}

/// Descriptive summary of a score sample with a normal CI for its mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub n: u64,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator; 0 for a single score).
    pub sd: f64,
    pub interval: IntervalEstimate,
    pub min: f64,
    pub max: f64,
}

pub fn aggregate_scores(scores: &[f64], confidence: f64) -> Result<ScoreSummary, StatsError> {
    if scores.is_empty() {
        return Err(StatsError::EmptySample);
    }
    // Welford's single-pass update.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for (i, &x) in scores.iter().enumerate() {
        if !x.is_finite() {
            return Err(StatsError::NonFiniteScore(i));
        }
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
        min = min.min(x);
        max = max.max(x);
    }
    let n = scores.len() as u64;
    let sd = if n > 1 { libm::sqrt(m2 / (n - 1) as f64) } else { 0.0 };
    let interval = normal_mean_ci(mean, sd, n, confidence)?;
    Ok(ScoreSummary { n, mean, sd, interval, min, max })
}
