//! Weighted posterior summaries, correlations, PCA and marginal histograms.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::smc::{Population, PriorSpec};

/// Cumulative-weight ties closer than this snap to the bracketing midpoint.
pub const QUANTILE_TIE_TOLERANCE: f64 = 1e-12;

pub const DEFAULT_BINS: usize = 40;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PosteriorError {
    #[error("empty sample")]
    Empty,
    #[error("weights must be non-negative with a positive sum")]
    InvalidWeights,
    #[error("quantile level {0} outside [0, 1]")]
    InvalidLevel(f64),
    #[error("sample rows have inconsistent dimension")]
    RaggedSample,
    #[error("correlation undefined: parameter {0} has zero variance")]
    UndefinedCorrelation(String),
}

/// Weighted quantile: the smallest sample whose cumulative weight reaches `q`.
/// When the cumulative weight equals `q` exactly, the midpoint of that sample
/// and the next one is returned.
pub fn weighted_quantile(samples: &[f64], weights: &[f64], q: f64) -> Result<f64, PosteriorError> {
    if samples.is_empty() {
        return Err(PosteriorError::Empty);
    }
    if samples.len() != weights.len() {
        return Err(PosteriorError::RaggedSample);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(PosteriorError::InvalidLevel(q));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(PosteriorError::InvalidWeights);
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&i, &j| samples[i].total_cmp(&samples[j]));
    let mut cumulative = 0.0;
    for (k, &i) in order.iter().enumerate() {
        cumulative += weights[i] / total;
        if cumulative >= q - QUANTILE_TIE_TOLERANCE {
            if (cumulative - q).abs() <= QUANTILE_TIE_TOLERANCE {
                if let Some(&next) = order[k + 1..].iter().find(|&&j| weights[j] > 0.0) {
                    return Ok(0.5 * (samples[i] + samples[next]));
                }
            }
            return Ok(samples[i]);
        }
    }
    Ok(samples[*order.last().expect("non-empty")])
}

/// Particle values in reported coordinates with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub names: Vec<String>,
    /// One row per particle.
    pub values: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl WeightedSample {
    pub fn new(
        names: Vec<String>,
        values: Vec<Vec<f64>>,
        weights: Vec<f64>,
    ) -> Result<Self, PosteriorError> {
        if values.is_empty() {
            return Err(PosteriorError::Empty);
        }
        if values.len() != weights.len() || values.iter().any(|r| r.len() != names.len()) {
            return Err(PosteriorError::RaggedSample);
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(PosteriorError::InvalidWeights);
        }
        Ok(Self {
            names,
            values,
            weights,
        })
    }

    /// Reported parameters (derived ones in place of the coordinates they replace).
    pub fn from_population(
        population: &Population,
        prior: &PriorSpec,
    ) -> Result<Self, PosteriorError> {
        Self::new(
            prior.reported_names(),
            population
                .particles
                .iter()
                .map(|p| prior.reported_values(&p.theta))
                .collect(),
            population.weights(),
        )
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }

    fn normalized_weights(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }

    /// Weighted mean; exact for a coordinate that is constant over the
    /// positive-weight particles, so that its variance is exactly zero.
    pub fn mean(&self) -> Vec<f64> {
        let w = self.normalized_weights();
        (0..self.dim())
            .map(|j| {
                let mut support = self.values.iter().zip(&w).filter(|(_, &wi)| wi > 0.0);
                let first = support.next().map_or(f64::NAN, |(r, _)| r[j]);
                if support.all(|(r, _)| r[j] == first) {
                    first
                } else {
                    self.values.iter().zip(&w).map(|(r, wi)| wi * r[j]).sum()
                }
            })
            .collect()
    }

    /// Weighted covariance with normalised weights.
    pub fn covariance(&self) -> DMatrix<f64> {
        let w = self.normalized_weights();
        let mean = self.mean();
        let d = self.dim();
        let mut cov = DMatrix::zeros(d, d);
        for (row, wi) in self.values.iter().zip(&w) {
            for a in 0..d {
                let da = row[a] - mean[a];
                for b in 0..=a {
                    cov[(a, b)] += wi * da * (row[b] - mean[b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                cov[(b, a)] = cov[(a, b)];
            }
        }
        cov
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParameterSummary {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ParameterSummary {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Median and central `nu` credible interval of every parameter.
pub fn summarize(
    sample: &WeightedSample,
    nu: f64,
) -> Result<Vec<ParameterSummary>, PosteriorError> {
    if !(0.0..=1.0).contains(&nu) {
        return Err(PosteriorError::InvalidLevel(nu));
    }
    let tail = 0.5 * (1.0 - nu);
    (0..sample.dim())
        .map(|j| {
            let col = sample.column(j);
            Ok(ParameterSummary {
                median: weighted_quantile(&col, &sample.weights, 0.5)?,
                lower: weighted_quantile(&col, &sample.weights, tail)?,
                upper: weighted_quantile(&col, &sample.weights, 1.0 - tail)?,
            })
        })
        .collect()
}

/// Weighted Pearson correlation; errors on the first zero-variance parameter.
pub fn weighted_correlation(sample: &WeightedSample) -> Result<DMatrix<f64>, PosteriorError> {
    let (corr, undefined) = correlation_with_gaps(sample);
    match undefined.first() {
        Some(&j) => Err(PosteriorError::UndefinedCorrelation(
            sample.names[j].clone(),
        )),
        None => Ok(corr),
    }
}

/// Correlation matrix plus the indices of zero-variance parameters, whose
/// off-diagonal entries are left at zero.
pub fn correlation_with_gaps(sample: &WeightedSample) -> (DMatrix<f64>, Vec<usize>) {
    let cov = sample.covariance();
    let d = cov.nrows();
    let sd: Vec<f64> = (0..d).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let undefined: Vec<usize> = (0..d).filter(|&i| !(sd[i] > 0.0)).collect();
    let corr = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else if sd[i] > 0.0 && sd[j] > 0.0 {
            (cov[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    });
    (corr, undefined)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// Descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    pub explained: Vec<f64>,
    /// Unit eigenvectors as columns, in eigenvalue order.
    pub loadings: DMatrix<f64>,
    /// `loadings[(i, k)]²`; each column sums to one.
    pub squared_loadings: DMatrix<f64>,
}

/// PCA of the weighted covariance, or of the correlation matrix when `standardize`.
pub fn weighted_pca(sample: &WeightedSample, standardize: bool) -> Pca {
    let matrix = if standardize {
        let (mut corr, undefined) = correlation_with_gaps(sample);
        for &i in &undefined {
            corr[(i, i)] = 0.0;
        }
        corr
    } else {
        sample.covariance()
    };
    pca_of_matrix(&matrix)
}

/// Eigen-decomposition of a symmetric matrix with descending eigenvalues and
/// the largest-magnitude entry of every eigenvector made positive.
pub fn pca_of_matrix(matrix: &DMatrix<f64>) -> Pca {
    let d = matrix.nrows();
    let eig = matrix.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .total_cmp(&eig.eigenvalues[i])
            .then(i.cmp(&j))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let mut loadings = DMatrix::zeros(d, d);
    for (k, &i) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        let pivot = (0..d).fold(
            0,
            |best, r| if v[r].abs() > v[best].abs() { r } else { best },
        );
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let norm = v.norm();
        for r in 0..d {
            loadings[(r, k)] = sign * v[r] / norm;
        }
    }
    let total: f64 = eigenvalues.iter().sum();
    let explained = if total > 0.0 {
        eigenvalues.iter().map(|l| l / total).collect()
    } else {
        vec![0.0; d]
    };
    let squared_loadings = loadings.map(|x| x * x);
    Pca {
        eigenvalues,
        explained,
        loadings,
        squared_loadings,
    }
}

/// Density-normalised weighted histograms of one parameter across generations.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalHistogram {
    pub name: String,
    pub edges: Vec<f64>,
    /// One row per generation, one density per bin.
    pub densities: Vec<Vec<f64>>,
}

impl MarginalHistogram {
    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }
}

/// Weighted histograms on fixed per-parameter ranges; values outside a range
/// fall in the nearest end bin.
pub fn marginal_evolution(
    samples: &[WeightedSample],
    bounds: &[(f64, f64)],
    bins: usize,
) -> Result<Vec<MarginalHistogram>, PosteriorError> {
    let first = samples.first().ok_or(PosteriorError::Empty)?;
    if bounds.len() != first.dim() || samples.iter().any(|s| s.dim() != first.dim()) {
        return Err(PosteriorError::RaggedSample);
    }
    let bins = bins.max(1);
    Ok(bounds
        .iter()
        .enumerate()
        .map(|(j, &(lo, hi))| {
            let width = (hi - lo) / bins as f64;
            let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
            let densities = samples
                .iter()
                .map(|s| {
                    let w = s.normalized_weights();
                    let mut h = vec![0.0; bins];
                    for (row, wi) in s.values.iter().zip(&w) {
                        let k = ((row[j] - lo) / width).floor();
                        let k = if k.is_nan() {
                            0
                        } else {
                            (k.max(0.0) as usize).min(bins - 1)
                        };
                        h[k] += wi;
                    }
                    h.iter().map(|m| m / width).collect()
                })
                .collect();
            MarginalHistogram {
                name: first.names[j].clone(),
                edges,
                densities,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorReport {
    pub names: Vec<String>,
    pub nu: f64,
    pub summaries: Vec<ParameterSummary>,
    pub correlation: DMatrix<f64>,
    /// Parameters whose correlations are undefined (zero variance).
    pub undefined_correlation: Vec<String>,
    pub pca: Pca,
    pub marginals: Vec<MarginalHistogram>,
}

impl PosteriorReport {
    /// Report on the last population of `history`.
    pub fn build(
        history: &[Population],
        prior: &PriorSpec,
        nu: f64,
        bins: usize,
        standardize: bool,
    ) -> Result<Self, PosteriorError> {
        let samples = history
            .iter()
            .map(|p| WeightedSample::from_population(p, prior))
            .collect::<Result<Vec<_>, _>>()?;
        let last = samples.last().ok_or(PosteriorError::Empty)?;
        let (correlation, undefined) = correlation_with_gaps(last);
        Ok(Self {
            names: last.names.clone(),
            nu,
            summaries: summarize(last, nu)?,
            correlation,
            undefined_correlation: undefined.iter().map(|&i| last.names[i].clone()).collect(),
            pca: weighted_pca(last, standardize),
            marginals: marginal_evolution(&samples, &prior.reported_bounds(), bins)?,
        })
    }

    pub fn summary(&self, name: &str) -> Option<&ParameterSummary> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.summaries[i])
    }
}
