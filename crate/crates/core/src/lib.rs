//! Likelihood-free inference for the mean of a Gaussian with known variance.
//!
//! Provides rejection ABC, ABC-MCMC, the equal-weight ABC-PRC sequential
//! sampler and a kernel-weighted ABC-PRC variant, together with the exact
//! conjugate posterior used to measure their bias.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod model;
pub mod rng;
pub mod sampler;

pub use error::{AbcError, Result};
pub use kernel::{corrected_weights, kernel_density, GaussianKernel, PerturbationKernel};
pub use model::{
    analytic_posterior, distance, simulate_summary, summarize, GaussianModelSpec, PosteriorSummary,
    UniformPrior,
};
pub use rng::RandomStream;
pub use sampler::{
    abc_mcmc, abc_prc_corrected, abc_prc_uncorrected, abc_rejection, power_posterior_reference,
    resample, Execution, ParticleSet, RunTrace, SamplerConfig, ToleranceSchedule,
};
