//! Run configuration files and built-in presets.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use imbibition::calibration::ModelFamily;
use imbibition::smc::{PriorSpec, SmcConfig};
use imbibition::solver::{external_moisture, ExperimentSetup, GridConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable that replaces `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "IMBIBE_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Measurement file (`time_hours,q_g_per_cm2`), relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_path: Option<PathBuf>,
    /// Named parameters used to generate pseudo-observations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_truth: Option<BTreeMap<String, f64>>,
    pub model: ModelFamily,
    pub prior: PriorSpec,
    pub setup: SetupConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub smc: SmcConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

/// Experiment description; `n0` and `k_log` are nominal values that sampled
/// or true parameters of the same name override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupConfig {
    pub length: f64,
    pub h0: f64,
    /// Duration (s).
    pub t_final: f64,
    pub n0: f64,
    pub k_log: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_ext: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient: Option<Ambient>,
    #[serde(default = "unit_density")]
    pub rho: f64,
    /// Explicit measurement times (s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement_times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<LogSchedule>,
}

fn unit_density() -> f64 {
    1.0
}

/// Ambient conditions from which the external moisture is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ambient {
    pub temperature: f64,
    pub relative_humidity: f64,
}

/// `count` logarithmically spaced times from `first` to `t_final`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogSchedule {
    pub first: f64,
    pub count: usize,
}

impl LogSchedule {
    pub fn times(&self, t_final: f64) -> Vec<f64> {
        if self.count == 1 {
            return vec![t_final];
        }
        let ratio = (t_final / self.first).ln();
        (0..self.count)
            .map(|k| {
                if k + 1 == self.count {
                    t_final
                } else {
                    self.first * (ratio * k as f64 / (self.count - 1) as f64).exp()
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Credible level of the reported intervals.
    pub nu: f64,
    pub bins: usize,
    /// PCA on the correlation matrix rather than the covariance.
    pub standardize: bool,
    /// Points of the exported `B'(s)` curve.
    pub bprime_points: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { nu: 0.95, bins: imbibition::posterior::DEFAULT_BINS, standardize: true, bprime_points: 201 }
    }
}

impl SetupConfig {
    pub fn theta_ext(&self) -> Result<f64, CliError> {
        match (self.theta_ext, self.ambient) {
            (Some(t), None) => Ok(t),
            (None, Some(a)) => Ok(external_moisture(a.temperature, a.relative_humidity)?),
            _ => Err(CliError::Config("setup needs exactly one of theta_ext and ambient".into())),
        }
    }

    pub fn configured_times(&self) -> Result<Vec<f64>, CliError> {
        match (&self.measurement_times, self.schedule) {
            (Some(t), None) => Ok(t.clone()),
            (None, Some(s)) => Ok(s.times(self.t_final)),
            _ => Err(CliError::Config(
                "setup needs exactly one of measurement_times and schedule unless data_path is given".into(),
            )),
        }
    }

    /// Solver setup with the given measurement times.
    pub fn resolve(&self, measurement_times: Vec<f64>) -> Result<ExperimentSetup, CliError> {
        let setup = ExperimentSetup {
            length: self.length,
            h0: self.h0,
            t_final: self.t_final,
            n0: self.n0,
            k_log: self.k_log,
            theta_ext: self.theta_ext()?,
            rho: self.rho,
            measurement_times,
        };
        setup.validate()?;
        Ok(setup)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative `data_path` is resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(p) = &cfg.data_path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.data_path = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.data_path, &self.synthetic_truth) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(CliError::Config("exactly one of data_path and synthetic_truth must be set".into())),
        }
        if self.data_path.is_none() {
            self.setup.configured_times()?;
        }
        self.setup.theta_ext()?;
        self.smc.validate()?;
        if let Some(truth) = &self.synthetic_truth {
            let mut named = truth.clone();
            self.prior.complete(&mut named);
            for name in self.model.parameter_names() {
                if !named.contains_key(*name) {
                    return Err(CliError::Config(format!("synthetic_truth lacks {name}")));
                }
            }
        }
        for name in self.model.parameter_names() {
            let sampled = self.prior.index_of(name).is_some() || self.prior.derived().iter().any(|r| r.name == *name);
            if !sampled {
                return Err(CliError::Config(format!("prior does not cover model parameter {name}")));
            }
        }
        if !(self.analysis.nu > 0.0 && self.analysis.nu < 1.0) {
            return Err(CliError::Config("analysis.nu must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Output directory after applying [`OUTPUT_DIR_ENV`].
    pub fn effective_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }

    /// True parameters completed with derived values (e.g. `gamma` from `eta`).
    pub fn resolved_truth(&self) -> Option<BTreeMap<String, f64>> {
        self.synthetic_truth.as_ref().map(|t| {
            let mut named = t.clone();
            self.prior.complete(&mut named);
            named
        })
    }
}

pub const PRESET_NAMES: [&str; 4] = ["synthetic-nn", "synthetic-bkp", "brick", "ajarte"];

pub fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "synthetic-nn" => Some(include_str!("../presets/synthetic-nn.toml")),
        "synthetic-bkp" => Some(include_str!("../presets/synthetic-bkp.toml")),
        "brick" => Some(include_str!("../presets/brick.toml")),
        "ajarte" => Some(include_str!("../presets/ajarte.toml")),
        _ => None,
    }
}

pub fn preset(name: &str) -> Result<RunConfig, CliError> {
    let text = preset_text(name).ok_or_else(|| {
        CliError::Config(format!("unknown preset {name}; available: {}", PRESET_NAMES.join(", ")))
    })?;
    RunConfig::from_toml(text)
}
