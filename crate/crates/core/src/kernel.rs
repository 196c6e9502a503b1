//! Perturbation kernels and the reciprocal kernel-density weight correction.

use rayon::prelude::*;

use crate::error::{invalid, AbcError, Result};
use crate::rng::RandomStream;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// A transition kernel `K(x | center)` that can be sampled and evaluated.
pub trait PerturbationKernel: Sync {
    fn perturb(&self, theta: f64, rng: &mut RandomStream) -> f64;

    /// Transition density of moving from `center` to `x`.
    fn density(&self, x: f64, center: f64) -> f64;
}

/// Gaussian random-walk kernel with variance `xi2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianKernel {
    mean_offset: f64,
    xi2: f64,
    sd: f64,
}

impl GaussianKernel {
    pub fn new(xi2: f64) -> Result<Self> {
        Self::with_offset(0.0, xi2)
    }

    pub fn with_offset(mean_offset: f64, xi2: f64) -> Result<Self> {
        if !(xi2 > 0.0 && xi2.is_finite()) {
            return Err(invalid(format!(
                "kernel variance must be finite and > 0, got {xi2}"
            )));
        }
        if !mean_offset.is_finite() {
            return Err(invalid("kernel mean offset must be finite"));
        }
        Ok(Self {
            mean_offset,
            xi2,
            sd: xi2.sqrt(),
        })
    }

    pub fn xi2(&self) -> f64 {
        self.xi2
    }

    pub fn mean_offset(&self) -> f64 {
        self.mean_offset
    }
}

impl PerturbationKernel for GaussianKernel {
    #[inline]
    fn perturb(&self, theta: f64, rng: &mut RandomStream) -> f64 {
        theta + self.mean_offset + self.sd * rng.next_standard_normal()
    }

    #[inline]
    fn density(&self, x: f64, center: f64) -> f64 {
        let z = (x - center - self.mean_offset) / self.sd;
        INV_SQRT_2PI / self.sd * (-0.5 * z * z).exp()
    }
}

/// Normal(center, xi2) density at `x`.
pub fn kernel_density(x: f64, center: f64, xi2: f64) -> f64 {
    let z2 = (x - center) * (x - center) / xi2;
    INV_SQRT_2PI / xi2.sqrt() * (-0.5 * z2).exp()
}

/// Unnormalized importance weights for perturbed particles.
///
/// `W_i = 1 / sum_j K(perturbed_i | sources_j)`: each perturbed particle is
/// weighted by the reciprocal of the kernel mixture density it was drawn from.
/// Each inner sum runs in source order, so the parallel result is identical to
/// a sequential evaluation.
pub fn corrected_weights<K: PerturbationKernel>(
    perturbed: &[f64],
    sources: &[f64],
    kernel: &K,
) -> Result<Vec<f64>> {
    if sources.is_empty() {
        return Err(invalid(
            "corrected weights need at least one source particle",
        ));
    }
    perturbed
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let total: f64 = sources.iter().map(|&c| kernel.density(x, c)).sum();
            let w = 1.0 / total;
            if total > 0.0 && w.is_finite() {
                Ok(w)
            } else {
                Err(AbcError::DegenerateWeight(format!(
                    "particle {i} (value {x}) has zero kernel density under every source"
                )))
            }
        })
        .collect()
}
