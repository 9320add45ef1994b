//! Importance weights, degeneracy monitoring and resampling.

use rand::Rng;

use super::{GaussianKernel, Particle, PriorSpec, SmcError};

/// `ln Σ exp(x)` over a slice; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Unnormalised log importance weight
/// `ln p(θ) - ln Σ_j w_j K(θ | θ_j)` of a new particle against the previous population.
pub fn log_importance_weight(
    theta: &[f64],
    previous: &[Particle],
    kernel: &GaussianKernel,
    prior: &PriorSpec,
) -> Result<f64, SmcError> {
    let log_prior = prior.log_density(theta);
    if log_prior == f64::NEG_INFINITY {
        return Err(SmcError::OutsidePrior);
    }
    let terms = previous
        .iter()
        .filter(|p| p.weight > 0.0)
        .map(|p| p.weight.ln() + kernel.log_density(theta, &p.theta));
    let log_denominator = log_sum_exp(terms);
    if !log_denominator.is_finite() {
        return Err(SmcError::WeightUnderflow);
    }
    Ok(log_prior - log_denominator)
}

/// Importance weight on the natural scale (see [`log_importance_weight`]).
pub fn importance_weight(
    theta: &[f64],
    previous: &[Particle],
    kernel: &GaussianKernel,
    prior: &PriorSpec,
) -> Result<f64, SmcError> {
    log_importance_weight(theta, previous, kernel, prior).map(f64::exp)
}

/// Turns log weights into normalised weights summing to one.
pub fn normalize_log_weights(log_weights: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_weights.iter().copied());
    let mut w: Vec<f64> = log_weights.iter().map(|lw| (lw - lse).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// `1 / Σ w²` for normalised weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

const TIE_TOLERANCE: f64 = 1e-12;

/// `count` indices chosen by systematic resampling with offset `u ∈ [0, 1/count)`.
/// A point landing on a cumulative-weight boundary (to rounding) selects the next particle.
pub fn systematic_indices(weights: &[f64], count: usize, offset: f64) -> Vec<usize> {
    let n = weights.len();
    let step = 1.0 / count as f64;
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(count);
    let mut cumulative = weights[0] / total;
    let mut i = 0;
    for k in 0..count {
        let u = offset + k as f64 * step;
        while u >= cumulative - TIE_TOLERANCE && i + 1 < n {
            i += 1;
            cumulative += weights[i] / total;
        }
        out.push(i);
    }
    out
}

/// Systematic resampling; the output carries uniform weights `1/N`.
pub fn systematic_resample<R: Rng + ?Sized>(particles: &[Particle], rng: &mut R) -> Vec<Particle> {
    let n = particles.len();
    let weights: Vec<f64> = particles.iter().map(|p| p.weight).collect();
    let offset = rng.random::<f64>() / n as f64;
    systematic_indices(&weights, n, offset)
        .into_iter()
        .map(|i| Particle {
            weight: 1.0 / n as f64,
            ..particles[i].clone()
        })
        .collect()
}
