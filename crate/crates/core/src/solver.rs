//! Explicit finite-difference solver for one-dimensional capillary rise,
//! `∂t θ = ∂zz B(θ / n0)`, on a column of height `L`.
//!
//! Grid layout: node `j` sits at `z = j·dz` with `dz = L / nz`. Node 0 is the
//! wetted base; nodes `1..=nz` are updated by the FTCS scheme (node `nz` lies
//! on `z = L`); node `nz + 1` is the ghost that carries the second-order Robin
//! exchange condition at the top. Every node with `z ≤ h0` is held at `n0`.
//!
//! The observable is the trapezoidal water mass per unit base area over nodes
//! `0..=nz`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::absorption::{AbsorptionModel, BkpParams, NnParams};

/// Slack on the `[0, n0]` bound before a state is declared unstable.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid experiment setup: {0}")]
    InvalidSetup(String),
    #[error("invalid model: {0}")]
    InvalidModel(#[from] crate::absorption::AbsorptionError),
    #[error("model has zero diffusivity; no stable time step exists")]
    DegenerateModel,
    #[error("{required} time steps needed but the cap is {cap}")]
    StepCapExceeded { required: u64, cap: u64 },
    #[error("grid needs at least 8 interior nodes, got {0}")]
    TooFewNodes(usize),
    #[error("CFL safety factor must lie in (0, 1], got {0}")]
    InvalidSafety(f64),
    #[error("numerical instability at step {step}, node {node}: theta = {value}")]
    Unstable { step: u64, node: usize, value: f64 },
    #[error("temperature {0} °C outside [0, 60]")]
    TemperatureOutOfRange(f64),
    #[error("relative humidity {0} outside [0, 1]")]
    HumidityOutOfRange(f64),
    #[error("curves are defined on different time grids")]
    MismatchedTimes,
    #[error("simulated value at index {0} is zero; relative error undefined")]
    ZeroSimulatedValue(usize),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
}

/// Geometry, material and boundary data of one imbibition test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSetup {
    /// Specimen height (cm).
    pub length: f64,
    /// Immersion depth (cm).
    pub h0: f64,
    /// Duration (s).
    pub t_final: f64,
    /// Open porosity.
    pub n0: f64,
    /// log10 of the top exchange coefficient `K_w`.
    pub k_log: f64,
    /// External moisture content.
    pub theta_ext: f64,
    /// Fluid density (g/cm³).
    #[serde(default = "default_density")]
    pub rho: f64,
    /// Measurement times (s).
    pub measurement_times: Vec<f64>,
}

fn default_density() -> f64 {
    1.0
}

impl ExperimentSetup {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidSetup(m));
        if !(self.length > 0.0 && self.h0 > 0.0 && self.h0 < self.length) {
            return bad(format!(
                "need 0 < h0 < L, got h0 = {}, L = {}",
                self.h0, self.length
            ));
        }
        if !(self.t_final > 0.0) {
            return bad(format!("t_final must be positive, got {}", self.t_final));
        }
        if !(self.n0 > 0.0 && self.n0 < 1.0) {
            return bad(format!("n0 must lie in (0, 1), got {}", self.n0));
        }
        if !(self.theta_ext >= 0.0) || !self.k_log.is_finite() {
            return bad("theta_ext must be non-negative and k_log finite".into());
        }
        if !(self.rho > 0.0) {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        if self.measurement_times.is_empty() {
            return bad("no measurement times".into());
        }
        if self.measurement_times[0] <= 0.0 {
            return bad("measurement times must be positive".into());
        }
        if self.measurement_times.windows(2).any(|w| w[1] <= w[0]) {
            return bad("measurement times must be strictly increasing".into());
        }
        if *self.measurement_times.last().unwrap() > self.t_final {
            return bad("last measurement time exceeds t_final".into());
        }
        Ok(())
    }

    /// Top exchange coefficient `K_w = 10^k_log`.
    pub fn exchange_coefficient(&self) -> f64 {
        10f64.powf(self.k_log)
    }
}

/// Discretisation settings, resolved into a [`SolverGrid`] per model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Interior node count.
    pub nz: usize,
    /// CFL safety factor.
    pub safety: f64,
    /// Upper bound on the number of time steps of one solve.
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
}

fn default_max_steps() -> u64 {
    50_000_000
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            nz: 100,
            safety: 0.9,
            max_steps: default_max_steps(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverGrid {
    pub dz: f64,
    pub dt: f64,
    pub nz: usize,
    pub safety: f64,
}

/// Time series of absorbed water per unit base area (g/cm²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbibitionCurve {
    pub times: Vec<f64>,
    pub q_values: Vec<f64>,
}

impl ImbibitionCurve {
    pub fn new(times: Vec<f64>, q_values: Vec<f64>) -> Result<Self, SolverError> {
        let curve = Self { times, q_values };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.times.len() != self.q_values.len() {
            return Err(SolverError::InvalidCurve(
                "times and values differ in length".into(),
            ));
        }
        if let Some(i) = self.times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(SolverError::InvalidCurve(format!(
                "times not increasing at index {}",
                i + 1
            )));
        }
        if let Some(i) = self.q_values.iter().position(|q| !(*q >= 0.0)) {
            return Err(SolverError::InvalidCurve(format!(
                "negative or NaN value at index {i}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Saturated vapour density (g/m³) as a cubic in temperature (°C).
pub fn saturated_vapour_density(temp_celsius: f64) -> Result<f64, SolverError> {
    if !(0.0..=60.0).contains(&temp_celsius) {
        return Err(SolverError::TemperatureOutOfRange(temp_celsius));
    }
    let t = temp_celsius;
    Ok(5.018 + 0.32321 * t + 8.1847e-3 * t * t + 3.1243e-4 * t * t * t)
}

/// Water density in g/m³, used to turn vapour density into a volume fraction.
const WATER_DENSITY_G_PER_M3: f64 = 1e6;

/// External moisture content from ambient temperature and relative humidity.
pub fn external_moisture(temp_celsius: f64, rh: f64) -> Result<f64, SolverError> {
    if !(0.0..=1.0).contains(&rh) {
        return Err(SolverError::HumidityOutOfRange(rh));
    }
    Ok(saturated_vapour_density(temp_celsius)? * rh / WATER_DENSITY_G_PER_M3)
}

/// Largest CFL-stable step for `model`, scaled by `config.safety`.
pub fn stable_grid(
    setup: &ExperimentSetup,
    model: &AbsorptionModel,
    config: &GridConfig,
) -> Result<SolverGrid, SolverError> {
    setup.validate()?;
    model.validate()?;
    if config.nz < 8 {
        return Err(SolverError::TooFewNodes(config.nz));
    }
    if !(config.safety > 0.0 && config.safety <= 1.0) {
        return Err(SolverError::InvalidSafety(config.safety));
    }
    grid_unchecked(setup, model, config.nz, config.safety, config.max_steps)
}

/// As [`stable_grid`] but without the `safety ≤ 1` restriction, so that the
/// instability detection can be exercised.
pub fn grid_with_safety(
    setup: &ExperimentSetup,
    model: &AbsorptionModel,
    nz: usize,
    safety: f64,
    max_steps: u64,
) -> Result<SolverGrid, SolverError> {
    setup.validate()?;
    model.validate()?;
    if !(safety > 0.0) {
        return Err(SolverError::InvalidSafety(safety));
    }
    grid_unchecked(setup, model, nz, safety, max_steps)
}

fn grid_unchecked(
    setup: &ExperimentSetup,
    model: &AbsorptionModel,
    nz: usize,
    safety: f64,
    max_steps: u64,
) -> Result<SolverGrid, SolverError> {
    let d_max = model.cfl_diffusivity();
    if !(d_max > 0.0) {
        return Err(SolverError::DegenerateModel);
    }
    let dz = setup.length / nz as f64;
    let dt = safety * setup.n0 * dz * dz / (2.0 * d_max);
    let required = (setup.t_final / dt).ceil() as u64;
    if required > max_steps {
        return Err(SolverError::StepCapExceeded {
            required,
            cap: max_steps,
        });
    }
    Ok(SolverGrid { dz, dt, nz, safety })
}

/// Absorption function with per-model constants hoisted out of the time loop.
enum Flux {
    Nn {
        a: f64,
        b: f64,
        k: f64,
        three_b: f64,
        plateau: f64,
    },
    Bkp {
        a: f64,
        b: f64,
        g: f64,
        scale: f64,
        c2: f64,
        c1: f64,
        c0: f64,
        plateau: f64,
    },
}

impl Flux {
    fn new(model: &AbsorptionModel) -> Self {
        match *model {
            AbsorptionModel::Nn(NnParams { a, b, c }) => Flux::Nn {
                a,
                b,
                k: -2.0 * c / (3.0 * (a - b) * (a - b)),
                three_b: 3.0 * b,
                plateau: NnParams { a, b, c }.plateau(),
            },
            AbsorptionModel::Bkp(p) => {
                let BkpParams {
                    a,
                    b,
                    d_tilde,
                    alpha,
                    gamma,
                    mu,
                } = p;
                let delta = b - a;
                let g = gamma - alpha;
                Flux::Bkp {
                    a,
                    b,
                    g,
                    scale: d_tilde / mu / delta.powf(gamma),
                    c2: (alpha - 2.0) / (g + 2.0),
                    c1: -2.0 * (alpha - 1.0) * delta / (g + 1.0),
                    c0: alpha * delta * delta / g,
                    plateau: p.plateau(),
                }
            }
        }
    }
}

#[inline(always)]
fn nn_flux(s: f64, a: f64, b: f64, k: f64, three_b: f64, plateau: f64) -> f64 {
    if s < a {
        0.0
    } else if s <= b {
        let d = a - s;
        k * d * d * (a - three_b + 2.0 * s)
    } else {
        plateau
    }
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn bkp_flux(
    s: f64,
    a: f64,
    b: f64,
    g: f64,
    scale: f64,
    c2: f64,
    c1: f64,
    c0: f64,
    plateau: f64,
) -> f64 {
    if s <= a {
        0.0
    } else if s < b {
        let y = s - a;
        scale * (g * y.max(1e-300).ln()).exp() * ((c2 * y + c1) * y + c0)
    } else {
        plateau
    }
}

/// Time integrator that reports `Q` at the nearest step to each measurement time.
///
/// `observe(index, q)` is called once per measurement in order; returning
/// `false` stops the integration early.
pub fn integrate(
    setup: &ExperimentSetup,
    model: &AbsorptionModel,
    grid: &SolverGrid,
    mut observe: impl FnMut(usize, f64) -> bool,
) -> Result<(), SolverError> {
    integrate_profiles(setup, model, grid, |k, q, _| observe(k, q))
}

/// As [`integrate`], also passing the moisture profile `θ_0..θ_nz` at each
/// measurement time.
pub fn integrate_profiles(
    setup: &ExperimentSetup,
    model: &AbsorptionModel,
    grid: &SolverGrid,
    observe: impl FnMut(usize, f64, &[f64]) -> bool,
) -> Result<(), SolverError> {
    setup.validate()?;
    model.validate()?;
    // one monomorphised time loop per family
    match Flux::new(model) {
        Flux::Nn {
            a,
            b,
            k,
            three_b,
            plateau,
        } => run(
            setup,
            grid,
            move |s| nn_flux(s, a, b, k, three_b, plateau),
            observe,
        ),
        Flux::Bkp {
            a,
            b,
            g,
            scale,
            c2,
            c1,
            c0,
            plateau,
        } => run(
            setup,
            grid,
            move |s| bkp_flux(s, a, b, g, scale, c2, c1, c0, plateau),
            observe,
        ),
    }
}

fn run(
    setup: &ExperimentSetup,
    grid: &SolverGrid,
    absorption_fn: impl Fn(f64) -> f64,
    mut observe: impl FnMut(usize, f64, &[f64]) -> bool,
) -> Result<(), SolverError> {
    let n = grid.nz;
    let n0 = setup.n0;
    let lambda = grid.dt / (grid.dz * grid.dz);
    let robin = 2.0 * setup.exchange_coefficient() * grid.dz;
    let robin_source = robin * setup.theta_ext;
    let robin_denominator = 3.0 + robin;
    let half_mass = setup.rho * grid.dz / 2.0;

    // nodes 0..=n+1; the saturated base block is 0..=wet_top
    let wet_top = ((0..=n)
        .take_while(|&j| j as f64 * grid.dz <= setup.h0 * (1.0 + 1e-12))
        .count())
    .saturating_sub(1);
    let mut theta = vec![0.0; n + 2];
    theta[..=wet_top].iter_mut().for_each(|t| *t = n0);
    theta[n + 1] = (4.0 * theta[n] - theta[n - 1] + robin_source) / robin_denominator;
    let mut next = theta.clone();
    let mut absorption = vec![0.0; n + 2];

    let mass = |theta: &[f64]| {
        let inner: f64 = theta[1..n].iter().sum();
        half_mass * (theta[0] + 2.0 * inner + theta[n])
    };

    let targets: Vec<u64> = setup
        .measurement_times
        .iter()
        .map(|t| (t / grid.dt).round() as u64)
        .collect();
    let hi = n0 + BOUND_SLACK;
    let inv_n0 = 1.0 / n0;
    let b_of = |t: f64| absorption_fn((t * inv_n0).clamp(0.0, 1.0));
    for j in 0..=wet_top {
        absorption[j] = b_of(theta[j]);
    }
    // Nodes above `front` are dry. B vanishes at zero saturation, so their
    // updates are exact zeros and can be skipped.
    let mut front = wet_top;
    let mut step: u64 = 0;
    for (index, &target) in targets.iter().enumerate() {
        while step < target {
            let ghost_b = b_of(theta[n + 1]);
            let upper = if ghost_b != 0.0 {
                n
            } else {
                (front + 1).min(n)
            };
            let lo = wet_top + 1;
            for (b, &t) in absorption[lo..=upper].iter_mut().zip(&theta[lo..=upper]) {
                *b = b_of(t);
            }
            absorption[upper + 1] = if upper == n { ghost_b } else { 0.0 };
            let mut in_bounds = true;
            for ((out, &t), w) in next[lo..=upper]
                .iter_mut()
                .zip(&theta[lo..=upper])
                .zip(absorption[lo - 1..=upper + 1].windows(3))
            {
                let v = t + lambda * (w[2] - 2.0 * w[1] + w[0]);
                in_bounds &= v >= -BOUND_SLACK && v <= hi;
                *out = v;
            }
            if !in_bounds {
                let node = (lo..=upper)
                    .find(|&j| !(next[j] >= -BOUND_SLACK && next[j] <= hi))
                    .expect("offending node");
                return Err(SolverError::Unstable {
                    step: step + 1,
                    node,
                    value: next[node],
                });
            }
            if let Some(j) = (front + 1..=upper).rev().find(|&j| next[j] != 0.0) {
                front = j;
            }
            next[n + 1] = (4.0 * theta[n] - theta[n - 1] + robin_source) / robin_denominator;
            std::mem::swap(&mut theta, &mut next);
            step += 1;
        }
        if !observe(index, mass(&theta), &theta[..=n]) {
            return Ok(());
        }
    }
    Ok(())
}

/// Runs the solver and collects the imbibition curve at the measurement times.
pub fn simulate(
    setup: &ExperimentSetup,
    model: &AbsorptionModel,
    grid: &SolverGrid,
) -> Result<ImbibitionCurve, SolverError> {
    let mut q_values = Vec::with_capacity(setup.measurement_times.len());
    integrate(setup, model, grid, |_, q| {
        q_values.push(q);
        true
    })?;
    Ok(ImbibitionCurve {
        times: setup.measurement_times.clone(),
        q_values,
    })
}

/// Mean relative squared error between a simulated and an observed curve,
/// normalised by the simulated values.
pub fn discrepancy(sim: &ImbibitionCurve, obs: &ImbibitionCurve) -> Result<f64, SolverError> {
    if sim.times != obs.times || sim.q_values.len() != obs.q_values.len() {
        return Err(SolverError::MismatchedTimes);
    }
    let mut acc = DiscrepancyAccumulator::new(sim.len());
    for (k, (&q_num, &q_obs)) in sim.q_values.iter().zip(&obs.q_values).enumerate() {
        acc.push(k, q_num, q_obs)?;
    }
    Ok(acc.value())
}

/// Running form of [`discrepancy`], so that a simulation can stop as soon as
/// the partial sum exceeds a tolerance. Terms are non-negative, so a partial
/// value above the tolerance proves the full value is above it too.
#[derive(Debug, Clone)]
pub struct DiscrepancyAccumulator {
    sum: f64,
    count: usize,
}

impl DiscrepancyAccumulator {
    pub fn new(count: usize) -> Self {
        Self { sum: 0.0, count }
    }

    pub fn push(&mut self, index: usize, q_num: f64, q_obs: f64) -> Result<(), SolverError> {
        if q_num == 0.0 {
            return Err(SolverError::ZeroSimulatedValue(index));
        }
        let r = (q_num - q_obs) / q_num;
        self.sum += r * r;
        Ok(())
    }

    /// Current value of the mean; equals the full discrepancy once every term is in.
    pub fn value(&self) -> f64 {
        self.sum / self.count as f64
    }
}
