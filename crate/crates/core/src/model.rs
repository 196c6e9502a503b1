//! The known-variance Gaussian mean problem: simulator, summary, distance and
//! the exact conjugate posterior used as ground truth.

use crate::error::{invalid, Result};
use crate::rng::RandomStream;

/// Inference problem for the mean of a Gaussian with known variance.
///
/// `tau2 = f64::INFINITY` encodes the flat improper prior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianModelSpec {
    mu0: f64,
    tau2: f64,
    sigma2: f64,
    n: usize,
    ybar: f64,
}

impl GaussianModelSpec {
    pub fn new(mu0: f64, tau2: f64, sigma2: f64, n: usize, ybar: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(invalid(format!(
                "sigma2 must be finite and > 0, got {sigma2}"
            )));
        }
        if n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        if !(tau2 > 0.0) {
            return Err(invalid(format!("tau2 must be > 0 or +inf, got {tau2}")));
        }
        if !mu0.is_finite() || !ybar.is_finite() {
            return Err(invalid("mu0 and ybar must be finite"));
        }
        Ok(Self {
            mu0,
            tau2,
            sigma2,
            n,
            ybar,
        })
    }

    /// Flat-prior model from a stored summary.
    pub fn flat(ybar: f64, n: usize, sigma2: f64) -> Result<Self> {
        Self::new(0.0, f64::INFINITY, sigma2, n, ybar)
    }

    /// Build from a raw observation vector; `n` and `ybar` are taken from `y`.
    pub fn from_observations(y: &[f64], sigma2: f64, mu0: f64, tau2: f64) -> Result<Self> {
        let ybar = summarize(y)?;
        Self::new(mu0, tau2, sigma2, y.len(), ybar)
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }
    pub fn tau2(&self) -> f64 {
        self.tau2
    }
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
    pub fn n(&self) -> usize {
        self.n
    }
    /// Observed summary statistic.
    pub fn ybar(&self) -> f64 {
        self.ybar
    }
    pub fn is_flat(&self) -> bool {
        self.tau2.is_infinite()
    }
}

/// Normal posterior summary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub variance: f64,
}

/// Bounded uniform used for initial particles and as the flat-prior stand-in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformPrior {
    lo: f64,
    hi: f64,
}

impl UniformPrior {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!(
                "uniform prior needs finite lo < hi, got ({lo}, {hi})"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }
    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.lo && theta <= self.hi
    }

    pub fn density(&self, theta: f64) -> f64 {
        if self.contains(theta) {
            1.0 / (self.hi - self.lo)
        } else {
            0.0
        }
    }

    pub fn sample(&self, rng: &mut RandomStream) -> f64 {
        rng.next_uniform_in(self.lo, self.hi)
    }
}

impl Default for UniformPrior {
    fn default() -> Self {
        Self {
            lo: -15.0,
            hi: 15.0,
        }
    }
}

/// Arithmetic mean of the observations.
pub fn summarize(y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(invalid("cannot summarize an empty observation vector"));
    }
    Ok(y.iter().sum::<f64>() / y.len() as f64)
}

/// Exact conjugate posterior for the model's mean.
pub fn analytic_posterior(spec: &GaussianModelSpec) -> PosteriorSummary {
    let n = spec.n as f64;
    if spec.is_flat() {
        return PosteriorSummary {
            mean: spec.ybar,
            variance: spec.sigma2 / n,
        };
    }
    let precision = 1.0 / spec.tau2 + n / spec.sigma2;
    PosteriorSummary {
        mean: (spec.mu0 / spec.tau2 + n * spec.ybar / spec.sigma2) / precision,
        variance: 1.0 / precision,
    }
}

/// Draw `n` observations from Normal(theta, sigma2) and return their mean.
#[inline]
pub fn simulate_summary(theta: f64, spec: &GaussianModelSpec, rng: &mut RandomStream) -> f64 {
    let sd = spec.sigma2.sqrt();
    let mut sum = 0.0;
    for _ in 0..spec.n {
        sum += theta + sd * rng.next_standard_normal();
    }
    sum / spec.n as f64
}

#[inline]
pub fn distance(s_sim: f64, s_obs: f64) -> f64 {
    (s_sim - s_obs).abs()
}
