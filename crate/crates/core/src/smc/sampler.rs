use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{kernel_covariance, perturb, GaussianKernel};
use super::schedule::{linear_quantile, next_epsilon};
use super::weights::{
    effective_sample_size, log_importance_weight, normalize_log_weights, systematic_resample,
};
use super::{PriorSpec, SmcError};

pub type SimulatorError = Box<dyn std::error::Error + Send + Sync>;

/// Black-box forward model compared against fixed observations.
pub trait Simulator: Sync {
    /// Distance between data simulated at `theta` and the observations.
    ///
    /// With `bound = Some(eps)` an implementation may stop as soon as the
    /// distance is known to exceed `eps`; it then returns any value `> eps`.
    fn distance(&self, theta: &[f64], bound: Option<f64>) -> Result<f64, SimulatorError>;
}

impl<F> Simulator for F
where
    F: Fn(&[f64]) -> Result<f64, SimulatorError> + Sync,
{
    fn distance(&self, theta: &[f64], _bound: Option<f64>) -> Result<f64, SimulatorError> {
        self(theta)
    }
}

/// Handling of perturbed proposals that leave the prior box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfSupport {
    /// Redraw from the kernel until the proposal is inside the prior.
    #[default]
    Redraw,
    /// Count the proposal as a rejected trial without simulating it.
    Discard,
}

/// Which distances feed the next tolerance quantile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSource {
    /// Distances of the accepted particles.
    #[default]
    Accepted,
    /// Every distance simulated during the previous generation (disables early stopping).
    AllSimulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmcConfig {
    pub n_particles: usize,
    pub max_generations: usize,
    pub quantile_level: f64,
    pub eps_min: f64,
    pub phi_crit: f64,
    /// Resampling trigger; defaults to `n_particles / 2`.
    pub ess_threshold: Option<f64>,
    pub kernel_scale: f64,
    pub seed: u64,
    /// Simulation budget per generation; defaults to `200 · n_particles`.
    pub max_sims_per_generation: Option<usize>,
    pub out_of_support: OutOfSupport,
    pub epsilon_source: EpsilonSource,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            n_particles: 1000,
            max_generations: 20,
            quantile_level: 0.3,
            eps_min: 0.0,
            phi_crit: 0.005,
            ess_threshold: None,
            kernel_scale: 2.0,
            seed: 0,
            max_sims_per_generation: None,
            out_of_support: OutOfSupport::Redraw,
            epsilon_source: EpsilonSource::Accepted,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<(), SmcError> {
        let bad = |m: &str| Err(SmcError::InvalidConfig(m.to_string()));
        if self.n_particles < 2 {
            return bad("n_particles must be at least 2");
        }
        if self.max_generations < 1 {
            return bad("max_generations must be at least 1");
        }
        if !(self.quantile_level > 0.0 && self.quantile_level < 1.0) {
            return bad("quantile_level must lie in (0, 1)");
        }
        if !(self.eps_min >= 0.0) {
            return bad("eps_min must be non-negative");
        }
        if !(self.phi_crit > 0.0 && self.phi_crit < 1.0) {
            return bad("phi_crit must lie in (0, 1)");
        }
        if !(self.kernel_scale > 0.0) {
            return bad("kernel_scale must be positive");
        }
        if self.max_sims_per_generation() < self.n_particles {
            return bad("max_sims_per_generation must be at least n_particles");
        }
        Ok(())
    }

    pub fn ess_threshold(&self) -> f64 {
        self.ess_threshold.unwrap_or(self.n_particles as f64 / 2.0)
    }

    pub fn max_sims_per_generation(&self) -> usize {
        self.max_sims_per_generation
            .unwrap_or(200 * self.n_particles)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    /// Parameters in sampled coordinates.
    pub theta: Vec<f64>,
    pub weight: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub epsilon: f64,
    /// ESS of the importance weights before any resampling.
    pub ess: f64,
    /// `N / simulations`.
    pub acceptance_rate: f64,
    pub simulations: usize,
    /// Proposals drawn, including ones discarded without simulating.
    pub trials: usize,
    pub resampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub generation: usize,
    pub particles: Vec<Particle>,
    pub epsilon: f64,
    pub diagnostics: Diagnostics,
}

impl Population {
    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.distance).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxGenerations,
    EpsilonReached,
    LowAcceptance,
}

#[derive(Debug, Clone)]
pub struct SmcOutcome {
    pub populations: Vec<Population>,
    pub stop_reason: StopReason,
}

impl SmcOutcome {
    pub fn last(&self) -> &Population {
        self.populations.last().expect("at least one generation")
    }
}

const RESAMPLE_STREAM: u64 = u64::MAX;

/// Dedicated random stream for one trial of one generation.
pub fn trial_rng(seed: u64, generation: usize, trial: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(generation as u64).to_le_bytes());
    key[16..24].copy_from_slice(&trial.to_le_bytes());
    key[24..].copy_from_slice(b"abc-smc\0");
    ChaCha8Rng::from_seed(key)
}

struct Trial {
    theta: Vec<f64>,
    /// `None` when the proposal was discarded without a simulation.
    distance: Option<f64>,
}

/// Generation-by-generation ABC–SMC driver.
pub struct Sampler<'a, S: Simulator> {
    prior: &'a PriorSpec,
    simulator: &'a S,
    config: SmcConfig,
    workers: usize,
    populations: Vec<Population>,
    // every distance simulated in the latest generation (for EpsilonSource::AllSimulated)
    simulated_distances: Vec<f64>,
    finished: Option<StopReason>,
}

impl<'a, S: Simulator> Sampler<'a, S> {
    pub fn new(
        prior: &'a PriorSpec,
        simulator: &'a S,
        config: SmcConfig,
    ) -> Result<Self, SmcError> {
        config.validate()?;
        Ok(Self {
            prior,
            simulator,
            config,
            workers: 1,
            populations: Vec::new(),
            simulated_distances: Vec::new(),
            finished: None,
        })
    }

    /// Worker threads used for simulations. Results do not depend on it.
    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn populations(&self) -> &[Population] {
        &self.populations
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.finished
    }

    /// Runs until a termination rule fires.
    pub fn run(
        mut self,
        mut on_generation: impl FnMut(&Population),
    ) -> Result<SmcOutcome, SmcError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| SmcError::InvalidConfig(format!("thread pool: {e}")))?;
        loop {
            let reason = pool.install(|| self.step())?;
            on_generation(self.populations.last().expect("step adds a population"));
            if let Some(reason) = reason {
                return Ok(SmcOutcome {
                    populations: self.populations,
                    stop_reason: reason,
                });
            }
        }
    }

    /// Produces one more generation; returns the stop reason once the run is complete.
    pub fn step(&mut self) -> Result<Option<StopReason>, SmcError> {
        if self.finished.is_some() {
            return Ok(self.finished);
        }
        let population = if self.populations.is_empty() {
            self.initial_generation()?
        } else {
            self.next_generation()?
        };
        let cfg = &self.config;
        let d = population.diagnostics;
        log::info!(
            "generation {:>2}: eps = {:.4e}, ess = {:.1}, acceptance = {:.3}, simulations = {}",
            population.generation,
            population.epsilon,
            d.ess,
            d.acceptance_rate,
            d.simulations
        );
        let reason = if population.epsilon <= cfg.eps_min {
            Some(StopReason::EpsilonReached)
        } else if d.acceptance_rate < cfg.phi_crit {
            Some(StopReason::LowAcceptance)
        } else if population.generation >= cfg.max_generations {
            Some(StopReason::MaxGenerations)
        } else {
            None
        };
        self.populations.push(population);
        self.finished = reason;
        Ok(reason)
    }

    fn batch_size(&self) -> usize {
        8 * self.workers
    }

    fn early_stop(&self) -> bool {
        self.config.epsilon_source == EpsilonSource::Accepted
    }

    fn simulate(
        &self,
        generation: usize,
        trial: u64,
        theta: &[f64],
        bound: Option<f64>,
    ) -> Result<f64, SmcError> {
        self.simulator
            .distance(theta, bound)
            .map_err(|source| SmcError::Simulation {
                generation,
                trial,
                message: source.to_string(),
            })
    }

    fn initial_generation(&mut self) -> Result<Population, SmcError> {
        let n = self.config.n_particles;
        let budget = self.config.max_sims_per_generation();
        let prior = self.prior;
        let seed = self.config.seed;

        // pilot: n full prior simulations fix the first tolerance
        let pilot: Vec<Trial> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let theta = prior.sample(&mut trial_rng(seed, 1, i));
                let d = self.simulate(1, i, &theta, None)?;
                Ok(Trial {
                    theta,
                    distance: Some(d),
                })
            })
            .collect::<Result<_, SmcError>>()?;
        let pilot_distances: Vec<f64> = pilot.iter().filter_map(|t| t.distance).collect();
        let epsilon = linear_quantile(&pilot_distances, self.config.quantile_level);

        let mut accepted = Vec::with_capacity(n);
        let mut simulated = Vec::new();
        let mut simulations = 0;
        for t in pilot {
            let d = t.distance.expect("pilot trials are simulated");
            simulations += 1;
            simulated.push(d);
            if d <= epsilon {
                accepted.push(Particle {
                    theta: t.theta,
                    weight: 0.0,
                    distance: d,
                });
                if accepted.len() == n {
                    break;
                }
            }
        }

        let bound = self.early_stop().then_some(epsilon);
        let mut next_trial = n as u64;
        while accepted.len() < n {
            if simulations >= budget {
                return Err(SmcError::BudgetExceeded {
                    generation: 1,
                    accepted: accepted.len(),
                    simulations,
                });
            }
            let batch: Vec<Trial> = (next_trial..next_trial + self.batch_size() as u64)
                .into_par_iter()
                .map(|i| {
                    let theta = prior.sample(&mut trial_rng(seed, 1, i));
                    let d = self.simulate(1, i, &theta, bound)?;
                    Ok(Trial {
                        theta,
                        distance: Some(d),
                    })
                })
                .collect::<Result<_, SmcError>>()?;
            next_trial += batch.len() as u64;
            for t in batch {
                let d = t.distance.expect("prior trials are simulated");
                simulations += 1;
                simulated.push(d);
                if d <= epsilon {
                    accepted.push(Particle {
                        theta: t.theta,
                        weight: 0.0,
                        distance: d,
                    });
                    if accepted.len() == n || simulations >= budget {
                        break;
                    }
                }
                if simulations >= budget {
                    break;
                }
            }
        }
        let w = 1.0 / n as f64;
        accepted.iter_mut().for_each(|p| p.weight = w);
        self.simulated_distances = simulated;
        Ok(Population {
            generation: 1,
            particles: accepted,
            epsilon,
            diagnostics: Diagnostics {
                epsilon,
                ess: n as f64,
                acceptance_rate: n as f64 / simulations as f64,
                simulations,
                trials: simulations,
                resampled: false,
            },
        })
    }

    fn next_generation(&mut self) -> Result<Population, SmcError> {
        let previous = self.populations.last().expect("initial generation exists");
        let generation = previous.generation + 1;
        let n = self.config.n_particles;
        let budget = self.config.max_sims_per_generation();
        let seed = self.config.seed;
        let prior = self.prior;
        let out_of_support = self.config.out_of_support;

        let source: &[f64] = match self.config.epsilon_source {
            EpsilonSource::Accepted => &previous.distances(),
            EpsilonSource::AllSimulated => &self.simulated_distances,
        };
        let epsilon = next_epsilon(source, previous.epsilon, self.config.quantile_level);
        let sigma = kernel_covariance(&previous.particles, self.config.kernel_scale)?;
        let kernel = GaussianKernel::new(&sigma)?;

        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for p in &previous.particles {
            acc += p.weight;
            cumulative.push(acc);
        }
        let total = acc;
        let select = |u: f64| cumulative.partition_point(|&c| c <= u * total).min(n - 1);

        let bound = self.early_stop().then_some(epsilon);
        let propose = |i: u64| -> Result<Trial, SmcError> {
            let mut rng = trial_rng(seed, generation, i);
            let precursor = &previous.particles[select(rng.random::<f64>())].theta;
            let theta = match out_of_support {
                OutOfSupport::Redraw => perturb(precursor, &kernel, prior, &mut rng)?,
                OutOfSupport::Discard => {
                    let candidate = kernel.sample(precursor, &mut rng);
                    if !prior.contains(&candidate) {
                        return Ok(Trial {
                            theta: candidate,
                            distance: None,
                        });
                    }
                    candidate
                }
            };
            let d = self.simulate(generation, i, &theta, bound)?;
            Ok(Trial {
                theta,
                distance: Some(d),
            })
        };

        let mut accepted = Vec::with_capacity(n);
        let mut simulated = Vec::new();
        let (mut simulations, mut trials) = (0usize, 0usize);
        let mut next_trial = 0u64;
        'fill: while accepted.len() < n {
            if simulations >= budget {
                return Err(SmcError::BudgetExceeded {
                    generation,
                    accepted: accepted.len(),
                    simulations,
                });
            }
            let batch: Vec<Trial> = (next_trial..next_trial + self.batch_size() as u64)
                .into_par_iter()
                .map(propose)
                .collect::<Result<_, SmcError>>()?;
            next_trial += batch.len() as u64;
            for t in batch {
                trials += 1;
                let Some(d) = t.distance else { continue };
                simulations += 1;
                simulated.push(d);
                if d <= epsilon {
                    accepted.push(Particle {
                        theta: t.theta,
                        weight: 0.0,
                        distance: d,
                    });
                    if accepted.len() == n {
                        break 'fill;
                    }
                }
                if simulations >= budget {
                    continue 'fill;
                }
            }
        }

        let previous_particles = &previous.particles;
        let log_weights: Vec<f64> = accepted
            .par_iter()
            .map(|p| log_importance_weight(&p.theta, previous_particles, &kernel, prior))
            .collect::<Result<_, SmcError>>()?;
        let weights = normalize_log_weights(&log_weights);
        for (p, w) in accepted.iter_mut().zip(&weights) {
            p.weight = *w;
        }
        let ess = effective_sample_size(&weights);
        let resampled = ess < self.config.ess_threshold();
        if resampled {
            let mut rng = trial_rng(seed, generation, RESAMPLE_STREAM);
            accepted = systematic_resample(&accepted, &mut rng);
        }
        self.simulated_distances = simulated;
        Ok(Population {
            generation,
            particles: accepted,
            epsilon,
            diagnostics: Diagnostics {
                epsilon,
                ess,
                acceptance_rate: n as f64 / simulations as f64,
                simulations,
                trials,
                resampled,
            },
        })
    }
}

/// Runs ABC–SMC to completion.
pub fn run_smc<S: Simulator>(
    prior: &PriorSpec,
    simulator: &S,
    config: &SmcConfig,
    workers: usize,
) -> Result<SmcOutcome, SmcError> {
    Sampler::new(prior, simulator, config.clone())?
        .workers(workers)
        .run(|_| {})
}
