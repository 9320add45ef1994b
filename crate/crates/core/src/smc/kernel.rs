//! Gaussian random-walk transition kernel.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Particle, PriorSpec, SmcError};

/// Consecutive out-of-support draws tolerated by [`perturb`].
pub const MAX_REDRAWS: usize = 10_000;

/// Normalised-weight covariance (no small-sample correction).
pub fn weighted_covariance(particles: &[Particle]) -> DMatrix<f64> {
    let d = particles.first().map_or(0, |p| p.theta.len());
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    let mut mean = DVector::zeros(d);
    for p in particles {
        mean += DVector::from_column_slice(&p.theta) * (p.weight / total);
    }
    let mut cov = DMatrix::zeros(d, d);
    for p in particles {
        let x = DVector::from_column_slice(&p.theta) - &mean;
        cov.ger(p.weight / total, &x, &x, 1.0);
    }
    // exact symmetry
    let t = cov.transpose();
    (cov + t) * 0.5
}

/// `scale` × weighted covariance of the previous population, with a small
/// diagonal jitter when it is not strictly positive definite.
pub fn kernel_covariance(particles: &[Particle], scale: f64) -> Result<DMatrix<f64>, SmcError> {
    let live: Vec<&Particle> = particles.iter().filter(|p| p.weight > 0.0).collect();
    if live.len() < 2 || live.iter().all(|p| p.theta == live[0].theta) {
        return Err(SmcError::DegeneratePopulation);
    }
    let mut sigma = weighted_covariance(particles) * scale;
    let d = sigma.nrows();
    let min_eig = sigma.clone().symmetric_eigenvalues().min();
    if min_eig <= 0.0 {
        let jitter = 1e-12 * sigma.trace() / d as f64;
        if !(jitter > 0.0) {
            return Err(SmcError::DegeneratePopulation);
        }
        for i in 0..d {
            sigma[(i, i)] += jitter;
        }
    }
    Ok(sigma)
}

/// Multivariate normal with a fixed covariance, centred per call.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    lower: DMatrix<f64>,
    // log normalising constant: -½ (d ln 2π + ln |Σ|)
    log_norm: f64,
}

impl GaussianKernel {
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self, SmcError> {
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or(SmcError::NotPositiveDefinite)?;
        let lower = chol.unpack();
        let d = sigma.nrows() as f64;
        let log_det = 2.0 * lower.diagonal().iter().map(|x| x.ln()).sum::<f64>();
        Ok(Self {
            lower,
            log_norm: -0.5 * (d * std::f64::consts::TAU.ln() + log_det),
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn sample<R: Rng + ?Sized>(&self, center: &[f64], rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = &self.lower * z;
        center.iter().zip(step.iter()).map(|(c, s)| c + s).collect()
    }

    /// `ln N(x; center, Σ)`.
    pub fn log_density(&self, x: &[f64], center: &[f64]) -> f64 {
        let diff = DVector::from_iterator(self.dim(), x.iter().zip(center).map(|(a, b)| a - b));
        let y = self
            .lower
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        self.log_norm - 0.5 * y.norm_squared()
    }
}

/// Draws from `N(theta_star, Σ)` restricted to the prior support by redrawing.
pub fn perturb<R: Rng + ?Sized>(
    theta_star: &[f64],
    kernel: &GaussianKernel,
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<Vec<f64>, SmcError> {
    for _ in 0..MAX_REDRAWS {
        let candidate = kernel.sample(theta_star, rng);
        if prior.contains(&candidate) {
            return Ok(candidate);
        }
    }
    Err(SmcError::KernelTooWide(MAX_REDRAWS))
}
