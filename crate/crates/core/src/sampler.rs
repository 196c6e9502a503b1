//! Rejection ABC, ABC-MCMC and the two ABC-PRC variants.
//!
//! The PRC samplers follow the same loop: draw an initial pool from the
//! uniform prior, then for each tolerance `eps_t` pick candidates from the
//! pool (uniformly, or proportional to the current weights), keep a candidate
//! once its simulated summary lands within `eps_t` of the observed one, and
//! perturb the accepted set to form the next pool. Checkpoints store the
//! accepted particles before perturbation.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;

use crate::error::{invalid, AbcError, Result};
use crate::kernel::{corrected_weights, GaussianKernel, PerturbationKernel};
use crate::model::{distance, simulate_summary, GaussianModelSpec, UniformPrior};
use crate::rng::RandomStream;

pub const DEFAULT_MAX_SIM_CALLS: u64 = 10_000_000;
pub const DEFAULT_CHECKPOINT_COUNT: usize = 20;

/// Particle values with normalized, nonnegative weights at iteration `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    values: Vec<f64>,
    weights: Vec<f64>,
    iteration: usize,
}

impl ParticleSet {
    /// Build a set from raw nonnegative weights; they are normalized here.
    pub fn new(values: Vec<f64>, weights: Vec<f64>, iteration: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("a particle set needs at least one particle"));
        }
        if values.len() != weights.len() {
            return Err(invalid(format!(
                "{} values but {} weights",
                values.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(invalid(format!(
                "weights must be finite and >= 0, found {w}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(AbcError::DegenerateWeight(
                "all particle weights are zero".into(),
            ));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            values,
            weights,
            iteration,
        })
    }

    pub fn equally_weighted(values: Vec<f64>, iteration: usize) -> Result<Self> {
        let n = values.len();
        Self::new(values, vec![1.0; n], iteration)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }
}

/// Per-iteration acceptance thresholds `eps_1..eps_T`.
#[derive(Clone, Debug, PartialEq)]
pub struct ToleranceSchedule {
    epsilons: Vec<f64>,
}

impl ToleranceSchedule {
    /// Entries must be > 0 (`+inf` is allowed). An increasing step only logs a
    /// warning.
    pub fn new(epsilons: Vec<f64>) -> Result<Self> {
        if epsilons.is_empty() {
            return Err(invalid("tolerance schedule is empty"));
        }
        if let Some((i, e)) = epsilons.iter().enumerate().find(|(_, e)| !(**e > 0.0)) {
            return Err(invalid(format!("tolerance {} must be > 0, got {e}", i + 1)));
        }
        let schedule = Self { epsilons };
        if !schedule.is_nonincreasing() {
            warn!("tolerance schedule is not nonincreasing");
        }
        Ok(schedule)
    }

    pub fn constant(epsilon: f64, len: usize) -> Result<Self> {
        Self::new(vec![epsilon; len])
    }

    /// Ten iterations at each of 10, 5, 2, 1, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01.
    pub fn paper_2007() -> Self {
        const LEVELS: [f64; 10] = [10.0, 5.0, 2.0, 1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01];
        Self {
            epsilons: LEVELS
                .iter()
                .flat_map(|&e| std::iter::repeat_n(e, 10))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.epsilons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epsilons.is_empty()
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    /// Tolerance for 1-based iteration `t`.
    pub fn epsilon(&self, t: usize) -> f64 {
        self.epsilons[t - 1]
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.epsilons.windows(2).all(|w| w[1] <= w[0])
    }
}

/// How the accept-until-N loop is executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    /// One sequential stream, consumed in slot order.
    #[default]
    Sequential,
    /// Slot `i` of iteration `t` owns the stream `path ++ [t, i]` derived from
    /// the caller's stream; output does not depend on the thread count.
    PerSlot,
}

#[derive(Clone, Debug)]
pub struct SamplerConfig<K = GaussianKernel> {
    pub n_particles: usize,
    pub prior: UniformPrior,
    pub kernel: K,
    pub schedule: ToleranceSchedule,
    pub seed: u64,
    pub max_sim_calls_per_iteration: u64,
    pub checkpoint_count: usize,
    pub execution: Execution,
}

impl<K: PerturbationKernel> SamplerConfig<K> {
    pub fn new(n_particles: usize, kernel: K, schedule: ToleranceSchedule, seed: u64) -> Self {
        Self {
            n_particles,
            prior: UniformPrior::default(),
            kernel,
            schedule,
            seed,
            max_sim_calls_per_iteration: DEFAULT_MAX_SIM_CALLS,
            checkpoint_count: DEFAULT_CHECKPOINT_COUNT,
            execution: Execution::Sequential,
        }
    }

    /// The root stream `derive(seed, [])`.
    pub fn stream(&self) -> RandomStream {
        RandomStream::derive(self.seed, &[])
    }

    fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(invalid("n_particles must be >= 1"));
        }
        if self.max_sim_calls_per_iteration == 0 {
            return Err(invalid("max_sim_calls_per_iteration must be >= 1"));
        }
        if self.checkpoint_count == 0 {
            return Err(invalid("checkpoint_count must be >= 1"));
        }
        Ok(())
    }
}

/// Accepted particles recorded at one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub iteration: usize,
    pub epsilon: f64,
    pub particles: ParticleSet,
    /// Distance of the simulated summary that earned each acceptance.
    pub distances: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcceptanceTally {
    pub iteration: usize,
    pub epsilon: f64,
    pub accepted: u64,
    pub proposed: u64,
}

impl AcceptanceTally {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub checkpoints: Vec<Checkpoint>,
    pub sim_call_count: u64,
    pub acceptance_counts: Vec<AcceptanceTally>,
}

impl RunTrace {
    pub fn final_checkpoint(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }

    pub fn tally(&self, iteration: usize) -> Option<&AcceptanceTally> {
        self.acceptance_counts
            .iter()
            .find(|a| a.iteration == iteration)
    }
}

/// Iterations at which the accepted set is recorded: `count` points spread
/// evenly over `1..=iterations` (ties rounded to even), clamped to
/// `iterations`, always ending at the last iteration.
pub fn checkpoint_iterations(iterations: usize, count: usize) -> Vec<usize> {
    let count = count.min(iterations);
    if count <= 1 {
        return vec![iterations];
    }
    let step = (iterations - 1) as f64 / (count - 1) as f64;
    let mut points: Vec<usize> = (0..count)
        .map(|k| (1.0 + k as f64 * step).round_ties_even() as usize)
        .collect();
    points.dedup();
    points
}

/// Draw `count` values with replacement, proportional to the set's weights.
pub fn resample(pset: &ParticleSet, count: usize, rng: &mut RandomStream) -> Result<Vec<f64>> {
    let picker = weighted_picker(pset.weights())?;
    Ok((0..count)
        .map(|_| pset.values[picker.sample(rng)])
        .collect())
}

fn weighted_picker(weights: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(weights).map_err(|e| AbcError::DegenerateWeight(e.to_string()))
}

/// Output of [`abc_rejection`].
#[derive(Clone, Debug, PartialEq)]
pub struct RejectionSample {
    pub particles: ParticleSet,
    pub distances: Vec<f64>,
    pub sim_calls: u64,
}

/// Plain rejection ABC: draw from the prior until `n_accept` simulated
/// summaries fall within `eps`.
pub fn abc_rejection(
    spec: &GaussianModelSpec,
    prior: &UniformPrior,
    eps: f64,
    n_accept: usize,
    guard: u64,
    rng: &mut RandomStream,
) -> Result<RejectionSample> {
    if !(eps > 0.0) {
        return Err(invalid(format!("eps must be > 0, got {eps}")));
    }
    if n_accept == 0 {
        return Err(invalid("n_accept must be >= 1"));
    }
    let mut values = Vec::with_capacity(n_accept);
    let mut distances = Vec::with_capacity(n_accept);
    let mut calls = 0u64;
    while values.len() < n_accept {
        if calls >= guard {
            return Err(AbcError::BudgetExceeded {
                iteration: 1,
                epsilon: eps,
                calls,
                limit: guard,
            });
        }
        calls += 1;
        let theta = prior.sample(rng);
        let d = distance(simulate_summary(theta, spec, rng), spec.ybar());
        if d <= eps {
            values.push(theta);
            distances.push(d);
        }
    }
    Ok(RejectionSample {
        particles: ParticleSet::equally_weighted(values, 1)?,
        distances,
        sim_calls: calls,
    })
}

/// Output of [`abc_mcmc`].
#[derive(Clone, Debug, PartialEq)]
pub struct McmcChain {
    /// State after each step; the initial value is not included.
    pub states: Vec<f64>,
    pub sim_calls: u64,
    pub accepted: u64,
}

/// ABC-MCMC: a Metropolis-Hastings chain whose likelihood term is replaced by
/// the indicator `distance <= eps`. Rejected proposals repeat the current state.
pub fn abc_mcmc<K: PerturbationKernel>(
    spec: &GaussianModelSpec,
    prior: &UniformPrior,
    kernel: &K,
    eps: f64,
    chain_len: usize,
    init: f64,
    rng: &mut RandomStream,
) -> Result<McmcChain> {
    if !prior.contains(init) {
        return Err(invalid(format!(
            "initial state {init} outside prior bounds [{}, {}]",
            prior.lo(),
            prior.hi()
        )));
    }
    if !(eps > 0.0) {
        return Err(invalid(format!("eps must be > 0, got {eps}")));
    }
    let mut theta = init;
    let mut states = Vec::with_capacity(chain_len);
    let (mut sim_calls, mut accepted) = (0u64, 0u64);
    for _ in 0..chain_len {
        let proposal = kernel.perturb(theta, rng);
        if prior.contains(proposal) {
            sim_calls += 1;
            let d = distance(simulate_summary(proposal, spec, rng), spec.ybar());
            if d <= eps {
                let ratio = prior.density(proposal) * kernel.density(theta, proposal)
                    / (prior.density(theta) * kernel.density(proposal, theta));
                if ratio >= 1.0 || rng.next_uniform() < ratio {
                    theta = proposal;
                    accepted += 1;
                }
            }
        }
        states.push(theta);
    }
    Ok(McmcChain {
        states,
        sim_calls,
        accepted,
    })
}

/// Variance of a Gaussian posterior raised to the `t`-th power and renormalized.
pub fn power_posterior_reference(base_variance: f64, t: u32) -> Result<f64> {
    if t == 0 {
        return Err(invalid("power must be >= 1"));
    }
    if !(base_variance > 0.0) {
        return Err(invalid(format!(
            "base variance must be > 0, got {base_variance}"
        )));
    }
    Ok(base_variance / f64::from(t))
}

/// The simplified ABC-PRC sampler with equal weights throughout.
pub fn abc_prc_uncorrected<K: PerturbationKernel>(
    spec: &GaussianModelSpec,
    config: &SamplerConfig<K>,
    rng: &mut RandomStream,
) -> Result<RunTrace> {
    run_prc(spec, config, rng, false)
}

/// ABC-PRC with reciprocal kernel-density weights on the perturbed pool.
pub fn abc_prc_corrected<K: PerturbationKernel>(
    spec: &GaussianModelSpec,
    config: &SamplerConfig<K>,
    rng: &mut RandomStream,
) -> Result<RunTrace> {
    run_prc(spec, config, rng, true)
}

struct Accepted {
    value: f64,
    distance: f64,
    next: f64,
}

fn run_prc<K: PerturbationKernel>(
    spec: &GaussianModelSpec,
    config: &SamplerConfig<K>,
    rng: &mut RandomStream,
    corrected: bool,
) -> Result<RunTrace> {
    config.validate()?;
    let n = config.n_particles;
    let iterations = config.schedule.len();
    let record_at = checkpoint_iterations(iterations, config.checkpoint_count);

    let mut pool: Vec<f64> = match config.execution {
        Execution::Sequential => (0..n).map(|_| config.prior.sample(rng)).collect(),
        Execution::PerSlot => {
            let base = rng.provenance().clone();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut s = slot_stream(&base.master_seed, &base.path, 0, i);
                    config.prior.sample(&mut s)
                })
                .collect()
        }
    };
    let mut weights = vec![1.0; n];

    let mut trace = RunTrace {
        checkpoints: Vec::with_capacity(record_at.len()),
        sim_call_count: 0,
        acceptance_counts: Vec::with_capacity(iterations),
    };
    let mut next_record = record_at.iter().peekable();

    for t in 1..=iterations {
        let eps = config.schedule.epsilon(t);
        let last = t == iterations;
        let picker = weighted_picker(&weights)?;
        let (accepted, calls) = match config.execution {
            Execution::Sequential => {
                accept_sequential(spec, config, &pool, &picker, t, eps, !last, rng)?
            }
            Execution::PerSlot => {
                accept_per_slot(spec, config, &pool, &picker, t, eps, !last, rng)?
            }
        };

        trace.sim_call_count += calls;
        trace.acceptance_counts.push(AcceptanceTally {
            iteration: t,
            epsilon: eps,
            accepted: n as u64,
            proposed: calls,
        });

        if next_record.peek() == Some(&&t) {
            next_record.next();
            trace.checkpoints.push(Checkpoint {
                iteration: t,
                epsilon: eps,
                particles: ParticleSet::equally_weighted(
                    accepted.iter().map(|a| a.value).collect(),
                    t,
                )?,
                distances: accepted.iter().map(|a| a.distance).collect(),
            });
        }

        if !last {
            pool = accepted.iter().map(|a| a.next).collect();
            if corrected {
                let sources: Vec<f64> = accepted.iter().map(|a| a.value).collect();
                weights = corrected_weights(&pool, &sources, &config.kernel)?;
            }
        }
    }
    Ok(trace)
}

fn slot_stream(master_seed: &u64, base: &[u64], t: usize, slot: usize) -> RandomStream {
    let mut path = Vec::with_capacity(base.len() + 2);
    path.extend_from_slice(base);
    path.push(t as u64);
    path.push(slot as u64);
    RandomStream::derive(*master_seed, &path)
}

fn budget_error(t: usize, eps: f64, calls: u64, limit: u64) -> AbcError {
    AbcError::BudgetExceeded {
        iteration: t,
        epsilon: eps,
        calls,
        limit,
    }
}

#[allow(clippy::too_many_arguments)]
fn accept_sequential<K: PerturbationKernel>(
    spec: &GaussianModelSpec,
    config: &SamplerConfig<K>,
    pool: &[f64],
    picker: &WeightedIndex<f64>,
    t: usize,
    eps: f64,
    perturb: bool,
    rng: &mut RandomStream,
) -> Result<(Vec<Accepted>, u64)> {
    let limit = config.max_sim_calls_per_iteration;
    let mut calls = 0u64;
    let mut accepted = Vec::with_capacity(config.n_particles);
    while accepted.len() < config.n_particles {
        if calls >= limit {
            return Err(budget_error(t, eps, calls, limit));
        }
        calls += 1;
        let theta = pool[picker.sample(rng)];
        let d = distance(simulate_summary(theta, spec, rng), spec.ybar());
        if d <= eps {
            accepted.push(Accepted {
                value: theta,
                distance: d,
                next: theta,
            });
        }
    }
    if perturb {
        for a in accepted.iter_mut() {
            a.next = config.kernel.perturb(a.value, rng);
        }
    }
    Ok((accepted, calls))
}

// Calls are flushed to the shared counter in chunks to keep contention low.
const CALL_FLUSH: u64 = 1024;

#[allow(clippy::too_many_arguments)]
fn accept_per_slot<K: PerturbationKernel>(
    spec: &GaussianModelSpec,
    config: &SamplerConfig<K>,
    pool: &[f64],
    picker: &WeightedIndex<f64>,
    t: usize,
    eps: f64,
    perturb: bool,
    rng: &RandomStream,
) -> Result<(Vec<Accepted>, u64)> {
    let limit = config.max_sim_calls_per_iteration;
    let base = rng.provenance();
    let total = AtomicU64::new(0);
    let abort = AtomicBool::new(false);

    let accepted = (0..config.n_particles)
        .into_par_iter()
        .map(|i| {
            let mut s = slot_stream(&base.master_seed, &base.path, t, i);
            let mut pending = 0u64;
            loop {
                if pending == CALL_FLUSH {
                    let seen = total.fetch_add(pending, Ordering::Relaxed) + pending;
                    pending = 0;
                    if seen > limit || abort.load(Ordering::Relaxed) {
                        abort.store(true, Ordering::Relaxed);
                        return Err(budget_error(t, eps, seen, limit));
                    }
                }
                pending += 1;
                let theta = pool[picker.sample(&mut s)];
                let d = distance(simulate_summary(theta, spec, &mut s), spec.ybar());
                if d <= eps {
                    total.fetch_add(pending, Ordering::Relaxed);
                    let next = if perturb {
                        config.kernel.perturb(theta, &mut s)
                    } else {
                        theta
                    };
                    return Ok(Accepted {
                        value: theta,
                        distance: d,
                        next,
                    });
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let calls = total.load(Ordering::Relaxed);
    if calls > limit {
        return Err(budget_error(t, eps, calls, limit));
    }
    Ok((accepted, calls))
}

#[cfg(test)]
mod tests {
    use super::*;

    const YBAR: f64 = 4.786624;

    fn paper_spec() -> GaussianModelSpec {
        GaussianModelSpec::flat(YBAR, 10, 9.0).unwrap()
    }

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
    }

    #[test]
    fn particle_set_normalizes() {
        let p = ParticleSet::new(vec![1.0, 2.0], vec![1.0, 3.0], 0).unwrap();
        assert_eq!(p.weights(), &[0.25, 0.75]);
        assert!(ParticleSet::new(vec![], vec![], 0).is_err());
        assert!(ParticleSet::new(vec![1.0], vec![1.0, 2.0], 0).is_err());
        assert!(ParticleSet::new(vec![1.0], vec![-1.0], 0).is_err());
        assert!(matches!(
            ParticleSet::new(vec![1.0, 2.0], vec![0.0, 0.0], 0),
            Err(AbcError::DegenerateWeight(_))
        ));
    }

    #[test]
    fn schedule_validation() {
        assert!(ToleranceSchedule::new(vec![]).is_err());
        assert!(ToleranceSchedule::new(vec![1.0, 0.0]).is_err());
        assert!(ToleranceSchedule::new(vec![1.0, f64::NAN]).is_err());
        // increasing is allowed, only warned about
        let s = ToleranceSchedule::new(vec![0.1, 0.5]).unwrap();
        assert!(!s.is_nonincreasing());
        assert!(ToleranceSchedule::new(vec![f64::INFINITY]).is_ok());
    }

    #[test]
    fn paper_schedule_layout() {
        let s = ToleranceSchedule::paper_2007();
        assert_eq!(s.len(), 100);
        assert_eq!(s.epsilon(1), 10.0);
        assert_eq!(s.epsilon(10), 10.0);
        assert_eq!(s.epsilon(11), 5.0);
        assert_eq!(s.epsilon(55), 0.2);
        assert_eq!(s.epsilon(100), 0.01);
        assert!(s.is_nonincreasing());
    }

    #[test]
    fn checkpoint_layout() {
        assert_eq!(checkpoint_iterations(5, 20), vec![1, 2, 3, 4, 5]);
        assert_eq!(checkpoint_iterations(7, 1), vec![7]);
        let pts = checkpoint_iterations(100, 20);
        assert_eq!(pts.len(), 20);
        assert_eq!(pts[0], 1);
        assert_eq!(*pts.last().unwrap(), 100);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
        // R: round(seq(1, 100, length = 20))
        assert_eq!(&pts[..5], &[1, 6, 11, 17, 22]);
        for t in 1..60 {
            for c in 1..30 {
                let p = checkpoint_iterations(t, c);
                assert_eq!(*p.last().unwrap(), t);
                assert_eq!(p.len(), c.min(t));
                assert!(p.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn resample_examples() {
        let mut rng = RandomStream::derive(1, &[]);
        let one = ParticleSet::equally_weighted(vec![3.5], 0).unwrap();
        assert!(resample(&one, 50, &mut rng)
            .unwrap()
            .iter()
            .all(|&v| v == 3.5));

        let skew = ParticleSet::new(vec![1.0, 2.0], vec![1.0, 0.0], 0).unwrap();
        assert_eq!(resample(&skew, 100, &mut rng).unwrap(), vec![1.0; 100]);

        let p = ParticleSet::new(vec![1.0, 2.0], vec![0.25, 0.75], 0).unwrap();
        let draws = resample(&p, 100_000, &mut rng).unwrap();
        let freq = draws.iter().filter(|&&v| v == 2.0).count() as f64 / 1e5;
        // binomial se ~ 0.00137
        assert!((freq - 0.75).abs() < 0.01, "freq = {freq}");
    }

    #[test]
    fn rejection_with_infinite_eps_is_prior() {
        let prior = UniformPrior::default();
        let mut rng = RandomStream::derive(3, &[]);
        let out = abc_rejection(
            &paper_spec(),
            &prior,
            f64::INFINITY,
            20_000,
            1 << 30,
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.sim_calls, 20_000);
        let (m, v) = moments(out.particles.values());
        assert!(out.particles.values().iter().all(|&x| prior.contains(x)));
        // U(-15,15): mean 0, variance 75
        assert!(m.abs() < 4.0 * (75.0f64 / 20_000.0).sqrt());
        assert!((v - 75.0).abs() < 3.0);
    }

    #[test]
    fn rejection_budget_guard() {
        let mut rng = RandomStream::derive(3, &[]);
        let err = abc_rejection(
            &paper_spec(),
            &UniformPrior::default(),
            1e-9,
            10,
            500,
            &mut rng,
        )
        .unwrap_err();
        match err {
            AbcError::BudgetExceeded { calls, limit, .. } => {
                assert_eq!(calls, 500);
                assert_eq!(limit, 500);
            }
            e => panic!("unexpected {e:?}"),
        }
        assert!(abc_rejection(
            &paper_spec(),
            &UniformPrior::default(),
            0.0,
            10,
            5,
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn rejection_tight_eps_matches_oracle() {
        let mut rng = RandomStream::derive(17, &[]);
        let out = abc_rejection(
            &paper_spec(),
            &UniformPrior::default(),
            0.01,
            5000,
            u64::MAX,
            &mut rng,
        )
        .unwrap();
        assert!(out.distances.iter().all(|&d| d <= 0.01));
        let (m, v) = moments(out.particles.values());
        assert!((m - YBAR).abs() < 0.1, "mean {m}");
        assert!((v - 0.9).abs() < 0.15, "variance {v}");
    }

    #[test]
    fn rejection_wide_eps_inflates_variance() {
        // Filtration oracle: push prior draws through the simulator and keep
        // those within eps. The ABC posterior at eps = 0.5 has variance
        // 0.9 + 0.5^2 / 3 ~ 0.983.
        let spec = paper_spec();
        let prior = UniformPrior::default();
        let mut oracle_rng = RandomStream::derive(1000, &[]);
        let mut kept = Vec::new();
        for _ in 0..1_000_000 {
            let theta = prior.sample(&mut oracle_rng);
            let s = oracle_summary(theta, &mut oracle_rng);
            if (s - YBAR).abs() <= 0.5 {
                kept.push(theta);
            }
        }
        let (_, oracle_var) = moments(&kept);

        let mut rng = RandomStream::derive(1001, &[]);
        let out = abc_rejection(&spec, &prior, 0.5, 20_000, u64::MAX, &mut rng).unwrap();
        let (_, v) = moments(out.particles.values());
        assert!(v > 0.9, "variance {v}");
        // se of a variance estimate ~ v * sqrt(2/n)
        let se =
            (oracle_var * (2.0 / kept.len() as f64).sqrt()).hypot(v * (2.0f64 / 20_000.0).sqrt());
        assert!(
            (v - oracle_var).abs() < 4.0 * se,
            "{v} vs oracle {oracle_var}"
        );
    }

    // Separate summary simulator for the oracle: one draw from N(theta, sigma2/n).
    fn oracle_summary(theta: f64, rng: &mut RandomStream) -> f64 {
        theta + (0.9f64).sqrt() * rng.next_standard_normal()
    }

    #[test]
    fn mcmc_rejects_bad_init() {
        let k = GaussianKernel::new(1.0).unwrap();
        let mut rng = RandomStream::derive(1, &[]);
        assert!(abc_mcmc(
            &paper_spec(),
            &UniformPrior::default(),
            &k,
            0.1,
            10,
            20.0,
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn mcmc_infinite_eps_explores_prior() {
        let k = GaussianKernel::new(25.0).unwrap();
        let prior = UniformPrior::default();
        let mut rng = RandomStream::derive(8, &[]);
        let chain = abc_mcmc(
            &paper_spec(),
            &prior,
            &k,
            f64::INFINITY,
            200_000,
            0.0,
            &mut rng,
        )
        .unwrap();
        assert!(chain.states.iter().all(|&x| prior.contains(x)));
        let (m, v) = moments(&chain.states);
        assert!(m.abs() < 1.0, "mean {m}");
        assert!((v - 75.0).abs() < 6.0, "variance {v}");
    }

    #[test]
    fn power_posterior_examples() {
        assert_eq!(power_posterior_reference(0.9, 1).unwrap(), 0.9);
        assert_eq!(power_posterior_reference(0.9, 2).unwrap(), 0.45);
        assert!((power_posterior_reference(0.9, 10).unwrap() - 0.09).abs() < 1e-15);
        assert!(power_posterior_reference(0.9, 0).is_err());
    }

    fn small_config(xi2: f64, schedule: ToleranceSchedule, seed: u64) -> SamplerConfig {
        SamplerConfig::new(200, GaussianKernel::new(xi2).unwrap(), schedule, seed)
    }

    #[test]
    fn prc_infinite_eps_single_iteration_is_prior_sample() {
        let cfg = small_config(
            0.01,
            ToleranceSchedule::new(vec![f64::INFINITY]).unwrap(),
            5,
        );
        let trace = abc_prc_corrected(&paper_spec(), &cfg, &mut cfg.stream()).unwrap();
        assert_eq!(trace.checkpoints.len(), 1);
        assert_eq!(trace.sim_call_count, 200);
        let values = trace.checkpoints[0].particles.values();
        assert!(values.iter().all(|&x| UniformPrior::default().contains(x)));
        let uncorrected = abc_prc_uncorrected(&paper_spec(), &cfg, &mut cfg.stream()).unwrap();
        assert_eq!(uncorrected, trace);
    }

    #[test]
    fn prc_budget_names_iteration() {
        let mut cfg = small_config(0.1, ToleranceSchedule::new(vec![10.0, 1e-9]).unwrap(), 5);
        cfg.max_sim_calls_per_iteration = 5_000;
        for execution in [Execution::Sequential, Execution::PerSlot] {
            cfg.execution = execution;
            match abc_prc_uncorrected(&paper_spec(), &cfg, &mut cfg.stream()) {
                Err(AbcError::BudgetExceeded {
                    iteration, epsilon, ..
                }) => {
                    assert_eq!(iteration, 2);
                    assert_eq!(epsilon, 1e-9);
                }
                other => panic!("expected budget error, got {other:?}"),
            }
        }
    }

    #[test]
    fn prc_trace_invariants() {
        let schedule = ToleranceSchedule::new(vec![5.0, 2.0, 1.0, 0.5, 0.5, 0.2]).unwrap();
        for corrected in [false, true] {
            for execution in [Execution::Sequential, Execution::PerSlot] {
                let mut cfg = small_config(0.5, schedule.clone(), 77);
                cfg.execution = execution;
                cfg.checkpoint_count = 4;
                let trace = if corrected {
                    abc_prc_corrected(&paper_spec(), &cfg, &mut cfg.stream())
                } else {
                    abc_prc_uncorrected(&paper_spec(), &cfg, &mut cfg.stream())
                }
                .unwrap();
                let iters: Vec<usize> = trace.checkpoints.iter().map(|c| c.iteration).collect();
                assert_eq!(iters, checkpoint_iterations(6, 4));
                for cp in &trace.checkpoints {
                    assert_eq!(cp.particles.len(), 200);
                    assert_eq!(cp.distances.len(), 200);
                    assert!(cp
                        .distances
                        .iter()
                        .all(|&d| d <= schedule.epsilon(cp.iteration)));
                }
                assert_eq!(trace.acceptance_counts.len(), 6);
                let total: u64 = trace.acceptance_counts.iter().map(|a| a.proposed).sum();
                assert_eq!(total, trace.sim_call_count);
            }
        }
    }

    #[test]
    fn per_slot_is_thread_count_independent() {
        let schedule = ToleranceSchedule::new(vec![5.0, 1.0, 0.5]).unwrap();
        let mut cfg = small_config(0.1, schedule, 9);
        cfg.execution = Execution::PerSlot;
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| abc_prc_corrected(&paper_spec(), &cfg, &mut cfg.stream()).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(one, run(8));
    }
}
