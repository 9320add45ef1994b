//! Approximate Bayesian computation by sequential Monte Carlo.

mod kernel;
mod prior;
mod sampler;
mod schedule;
mod weights;

pub use kernel::{kernel_covariance, perturb, weighted_covariance, GaussianKernel, MAX_REDRAWS};
pub use prior::{DerivedRule, PriorEntry, PriorSpec};
pub use sampler::{
    run_smc, trial_rng, Diagnostics, EpsilonSource, OutOfSupport, Particle, Population, Sampler,
    Simulator, SimulatorError, SmcConfig, SmcOutcome, StopReason,
};
pub use schedule::{linear_quantile, next_epsilon};
pub use weights::{
    effective_sample_size, importance_weight, log_importance_weight, log_sum_exp,
    normalize_log_weights, systematic_indices, systematic_resample,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SmcError {
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("population has fewer than two distinct weighted particles")]
    DegeneratePopulation,
    #[error("kernel covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("no in-support proposal after {0} kernel draws")]
    KernelTooWide(usize),
    #[error("particle lies outside the prior support")]
    OutsidePrior,
    #[error("importance weight denominator underflowed")]
    WeightUnderflow,
    #[error("generation {generation}: only {accepted} particles accepted after {simulations} simulations")]
    BudgetExceeded {
        generation: usize,
        accepted: usize,
        simulations: usize,
    },
    #[error("generation {generation}, trial {trial}: simulation failed: {message}")]
    Simulation {
        generation: usize,
        trial: u64,
        message: String,
    },
}
