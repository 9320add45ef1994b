//! Glue between named parameter vectors, the forward solver and the sampler.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::absorption::{AbsorptionError, AbsorptionModel, BkpParams, NnParams};
use crate::smc::{PriorSpec, Simulator, SimulatorError};
use crate::solver::{
    integrate, stable_grid, DiscrepancyAccumulator, ExperimentSetup, GridConfig, ImbibitionCurve,
    SolverError,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("parameter {0} is required but was not given")]
    MissingParameter(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Absorption(#[from] AbsorptionError),
    #[error(
        "observations have {observed} points but the setup lists {expected} measurement times"
    )]
    ScheduleMismatch { observed: usize, expected: usize },
}

/// Which absorption parameterisation a calibration targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelFamily {
    Nn,
    Bkp {
        /// Fluid viscosity.
        #[serde(default = "unit_viscosity")]
        mu: f64,
    },
}

fn unit_viscosity() -> f64 {
    1.0
}

impl ModelFamily {
    /// Parameter names read by [`build_model`], excluding setup overrides.
    pub fn parameter_names(&self) -> &'static [&'static str] {
        match self {
            ModelFamily::Nn => &["a", "b", "c"],
            ModelFamily::Bkp { .. } => &["a", "b", "d_tilde", "alpha", "gamma"],
        }
    }
}

/// Named parameters that override [`ExperimentSetup`] fields when present.
pub const SETUP_PARAMETERS: [&str; 2] = ["k_log", "n0"];

fn get(params: &BTreeMap<String, f64>, name: &str) -> Result<f64, CalibrationError> {
    params
        .get(name)
        .copied()
        .ok_or_else(|| CalibrationError::MissingParameter(name.to_string()))
}

/// Absorption model from named parameters (validated).
pub fn build_model(
    family: ModelFamily,
    params: &BTreeMap<String, f64>,
) -> Result<AbsorptionModel, CalibrationError> {
    let model = match family {
        ModelFamily::Nn => AbsorptionModel::Nn(NnParams::new(
            get(params, "a")?,
            get(params, "b")?,
            get(params, "c")?,
        )?),
        ModelFamily::Bkp { mu } => AbsorptionModel::Bkp(BkpParams::new(
            get(params, "a")?,
            get(params, "b")?,
            get(params, "d_tilde")?,
            get(params, "alpha")?,
            get(params, "gamma")?,
            mu,
        )?),
    };
    Ok(model)
}

/// Copy of `base` with `k_log` and `n0` taken from `params` when present.
pub fn apply_setup(base: &ExperimentSetup, params: &BTreeMap<String, f64>) -> ExperimentSetup {
    let mut setup = base.clone();
    if let Some(&k) = params.get("k_log") {
        setup.k_log = k;
    }
    if let Some(&n0) = params.get("n0") {
        setup.n0 = n0;
    }
    setup
}

/// Forward curve for a named parameter set.
pub fn simulate_named(
    family: ModelFamily,
    base: &ExperimentSetup,
    grid: &GridConfig,
    params: &BTreeMap<String, f64>,
) -> Result<ImbibitionCurve, CalibrationError> {
    let model = build_model(family, params)?;
    let setup = apply_setup(base, params);
    let g = stable_grid(&setup, &model, grid)?;
    Ok(crate::solver::simulate(&setup, &model, &g)?)
}

/// Discrepancy between the solver output at a sampled parameter vector and
/// fixed observations. Parameter vectors outside the admissible model set
/// get an infinite distance.
pub struct ImbibitionSimulator {
    pub prior: PriorSpec,
    pub family: ModelFamily,
    pub setup: ExperimentSetup,
    pub grid: GridConfig,
    pub observed: ImbibitionCurve,
}

impl ImbibitionSimulator {
    pub fn new(
        prior: PriorSpec,
        family: ModelFamily,
        setup: ExperimentSetup,
        grid: GridConfig,
        observed: ImbibitionCurve,
    ) -> Result<Self, CalibrationError> {
        setup.validate()?;
        observed.validate()?;
        if observed.len() != setup.measurement_times.len() {
            return Err(CalibrationError::ScheduleMismatch {
                observed: observed.len(),
                expected: setup.measurement_times.len(),
            });
        }
        Ok(Self {
            prior,
            family,
            setup,
            grid,
            observed,
        })
    }

    /// Full discrepancy, or a partial value above `bound` once that is certain.
    pub fn evaluate(&self, theta: &[f64], bound: Option<f64>) -> Result<f64, CalibrationError> {
        let params = self.prior.resolve(theta);
        let model = match build_model(self.family, &params) {
            Ok(m) => m,
            Err(CalibrationError::Absorption(_)) => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        };
        let setup = apply_setup(&self.setup, &params);
        let grid = match stable_grid(&setup, &model, &self.grid) {
            Ok(g) => g,
            Err(SolverError::InvalidModel(_) | SolverError::DegenerateModel) => {
                return Ok(f64::INFINITY)
            }
            Err(e) => return Err(e.into()),
        };
        let n = self.observed.len();
        let mut acc = DiscrepancyAccumulator::new(n);
        let mut failure = None;
        integrate(&setup, &model, &grid, |k, q| {
            if let Err(e) = acc.push(k, q, self.observed.q_values[k]) {
                failure = Some(e);
                return false;
            }
            bound.is_none_or(|eps| acc.value() <= eps)
        })?;
        match failure {
            Some(e) => Err(e.into()),
            None => Ok(acc.value()),
        }
    }
}

impl Simulator for ImbibitionSimulator {
    fn distance(&self, theta: &[f64], bound: Option<f64>) -> Result<f64, SimulatorError> {
        Ok(self.evaluate(theta, bound)?)
    }
}
