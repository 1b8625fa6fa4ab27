//! Run metrics: best-so-far curves, percentile-bootstrap confidence
//! intervals, and the normalized area under the progress curve.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::playground::Polarity;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("samples must be non-empty")]
    EmptySamples,
    #[error("confidence level must be in (0, 1), got {0}")]
    BadLevel(f64),
    #[error("resamples must be positive")]
    ZeroResamples,
}

/// Running extremum of a score sequence in the improving direction. Output
/// length equals input length.
pub fn best_so_far_curve(scores: &[f64], polarity: Polarity) -> Vec<f64> {
    let mut best = None;
    scores
        .iter()
        .map(|&score| {
            let incumbent = match best {
                None => score,
                Some(current) => polarity.better(current, score),
            };
            best = Some(incumbent);
            incumbent
        })
        .collect()
}

/// Percentile bootstrap CI of the mean: resample with replacement, take the
/// `(1-level)/2` and `(1+level)/2` empirical quantiles of the resampled
/// means. Seeded and reproducible: indices are drawn sequentially from
/// ChaCha8 seeded with `seed`, and the quantile at `q` is the sorted value
/// at index `floor(q * resamples)` (clamped).
pub fn bootstrap_ci(
    samples: &[f64],
    level: f64,
    resamples: u32,
    seed: u64,
) -> Result<(f64, f64), MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricsError::BadLevel(level));
    }
    if resamples == 0 {
        return Err(MetricsError::ZeroResamples);
    }
    let n = samples.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(resamples as usize);
    for _ in 0..resamples {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += samples[rng.random_range(0..n)];
        }
        means.push(sum / n as f64);
    }
    means.sort_by(f64::total_cmp);
    let quantile = |q: f64| -> f64 {
        let idx = ((means.len() as f64) * q).floor() as usize;
        means[idx.min(means.len() - 1)]
    };
    Ok((quantile((1.0 - level) / 2.0), quantile((1.0 + level) / 2.0)))
}

/// Time-averaged progress toward the curve's final best, where progress at
/// step i is `(best_i - best_0) / (best_last - best_0)`. A flat curve (no
/// improvement) is 1 by convention: all eventual gains were realized
/// immediately. Returns NaN for an empty curve.
pub fn normalized_auc(curve: &[f64]) -> f64 {
    if curve.is_empty() {
        return f64::NAN;
    }
    let first = curve[0];
    let last = curve[curve.len() - 1];
    if last == first {
        return 1.0;
    }
    let total: f64 = curve
        .iter()
        .map(|&value| (value - first) / (last - first))
        .sum();
    total / curve.len() as f64
}

/// Median; for an even count, the mean of the two middle values.
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Cross-run aggregate: mean best score, its bootstrap CI, and the median
/// normalized AUC of the per-run progress curves.
#[derive(Debug, Clone, PartialEq)]
pub struct RunAggregate {
    pub mean_best: f64,
    pub ci: (f64, f64),
    pub median_nauc: f64,
}

pub fn aggregate(
    best_scores: &[f64],
    curves: &[Vec<f64>],
    level: f64,
    resamples: u32,
    seed: u64,
) -> Result<RunAggregate, MetricsError> {
    if best_scores.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    let mean_best = best_scores.iter().sum::<f64>() / best_scores.len() as f64;
    let ci = bootstrap_ci(best_scores, level, resamples, seed)?;
    let naucs: Vec<f64> = curves
        .iter()
        .map(|curve| normalized_auc(curve))
        .filter(|v| !v.is_nan())
        .collect();
    let median_nauc = if naucs.is_empty() { 1.0 } else { median(&naucs) };
    Ok(RunAggregate {
        mean_best,
        ci,
        median_nauc,
    })
}
