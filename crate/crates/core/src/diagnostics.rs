//! Moments, convergence traces and distribution-distance measures.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, AbcError, Result};
use crate::model::PosteriorSummary;
use crate::sampler::{ParticleSet, RunTrace};

/// Weighted mean and population variance of a particle set.
pub fn posterior_stats(pset: &ParticleSet) -> Result<(f64, f64)> {
    if pset.len() < 2 {
        return Err(AbcError::VarianceUndefined(pset.len()));
    }
    let mean: f64 = pset
        .values()
        .iter()
        .zip(pset.weights())
        .map(|(x, w)| w * x)
        .sum();
    let variance: f64 = pset
        .values()
        .iter()
        .zip(pset.weights())
        .map(|(x, w)| w * (x - mean) * (x - mean))
        .sum();
    Ok((mean, variance))
}

/// Unweighted population moments of a sample.
pub fn sample_moments(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.len() < 2 {
        return Err(AbcError::VarianceUndefined(xs.len()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let variance = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok((mean, variance))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub mean: f64,
    pub variance: f64,
}

/// Posterior moments per checkpoint alongside the analytic reference variance.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTrace {
    pub points: Vec<TracePoint>,
    pub reference_variance: f64,
}

impl ConvergenceTrace {
    pub fn final_variance(&self) -> Option<f64> {
        self.points.last().map(|p| p.variance)
    }
}

pub fn build_trace(trace: &RunTrace, oracle: &PosteriorSummary) -> Result<ConvergenceTrace> {
    if trace.checkpoints.is_empty() {
        return Err(invalid("run trace has no checkpoints"));
    }
    let points = trace
        .checkpoints
        .iter()
        .map(|cp| {
            posterior_stats(&cp.particles).map(|(mean, variance)| TracePoint {
                iteration: cp.iteration,
                mean,
                variance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTrace {
        points,
        reference_variance: oracle.variance,
    })
}

/// Kolmogorov-Smirnov distance between the sample's empirical CDF and
/// Normal(oracle.mean, oracle.variance).
pub fn ks_statistic(samples: &[f64], oracle: &PosteriorSummary) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("KS statistic needs at least one sample"));
    }
    let normal = Normal::new(oracle.mean, oracle.variance.sqrt())
        .map_err(|e| invalid(format!("bad oracle: {e}")))?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = normal.cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(d.clamp(0.0, 1.0))
}

/// Asymptotic one-sample Kolmogorov critical value `sqrt(-ln(alpha/2)/2) / sqrt(n)`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Batch-means standard error of the mean of `f(x)` along a correlated chain.
pub fn batch_means_se(xs: &[f64], n_batches: usize, f: impl Fn(f64) -> f64) -> Result<f64> {
    if n_batches < 2 || xs.len() < 2 * n_batches {
        return Err(invalid("batch means needs >= 2 batches of >= 2 samples"));
    }
    let size = xs.len() / n_batches;
    let means: Vec<f64> = xs
        .chunks_exact(size)
        .take(n_batches)
        .map(|c| c.iter().map(|&x| f(x)).sum::<f64>() / size as f64)
        .collect();
    let k = means.len() as f64;
    let grand = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (k - 1.0);
    Ok((var / k).sqrt())
}

/// Equal-width histogram; returns `(lo, hi, count)` per bin.
pub fn histogram(xs: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if xs.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in xs {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| (lo + b as f64 * width, lo + (b + 1) as f64 * width, c))
        .collect()
}
