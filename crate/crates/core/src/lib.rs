//! Forward simulation and likelihood-free calibration of capillary water
//! imbibition in porous building materials.
//!
//! - [`absorption`]: the absorption function `B(s)` and its derivative for the
//!   NN and BkP parameterisations.
//! - [`solver`]: explicit finite-difference solver for `∂t θ = ∂zz B(θ/n0)`.
//! - [`smc`]: ABC–SMC sampler with adaptive tolerances.
//! - [`posterior`]: weighted summaries, correlations and PCA.
//! - [`calibration`]: wiring between named parameters, the solver and the sampler.

pub mod absorption;
pub mod calibration;
pub mod posterior;
pub mod smc;
pub mod solver;

pub use absorption::{AbsorptionError, AbsorptionModel, BkpParams, NnParams};
pub use calibration::{CalibrationError, ImbibitionSimulator, ModelFamily};
pub use solver::{ExperimentSetup, GridConfig, ImbibitionCurve, SolverError};
