//! End-to-end runs: observations, calibration, analysis and output files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use imbibition::calibration::{build_model, simulate_named, ImbibitionSimulator, ModelFamily};
use imbibition::posterior::{weighted_quantile, PosteriorReport};
use imbibition::smc::{effective_sample_size, Diagnostics, Population, PriorSpec, Sampler, SmcOutcome};
use imbibition::solver::{discrepancy, ExperimentSetup, GridConfig, ImbibitionCurve};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::config::{AnalysisConfig, RunConfig};
use crate::data::{load_measurements, write_measurements};
use crate::output::{self, population_path};
use crate::CliError;

/// Forward curve at `truth`, optionally with additive Gaussian noise of
/// standard deviation `noise_sd` (g/cm², clamped at zero).
pub fn generate_synthetic(
    setup: &ExperimentSetup,
    family: ModelFamily,
    truth: &BTreeMap<String, f64>,
    grid: &GridConfig,
    noise_sd: f64,
    seed: u64,
) -> Result<ImbibitionCurve, CliError> {
    let mut curve = simulate_named(family, setup, grid, truth)?;
    if noise_sd > 0.0 {
        let normal = Normal::new(0.0, noise_sd).map_err(|e| CliError::Config(format!("noise_sd: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for q in &mut curve.q_values {
            *q = (*q + normal.sample(&mut rng)).max(0.0);
        }
    } else if noise_sd < 0.0 {
        return Err(CliError::Config(format!("noise_sd must be non-negative, got {noise_sd}")));
    }
    Ok(curve)
}

/// Where the observed curve of a run comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationSource {
    Data,
    Synthetic,
}

/// Resolved setup and observed curve of a configuration (noise-free when synthetic).
pub fn observations(cfg: &RunConfig) -> Result<(ExperimentSetup, ImbibitionCurve, ObservationSource), CliError> {
    match (&cfg.data_path, cfg.resolved_truth()) {
        (Some(path), _) => {
            let curve = load_measurements(path)?;
            let setup = cfg.setup.resolve(curve.times.clone())?;
            Ok((setup, curve, ObservationSource::Data))
        }
        (None, Some(truth)) => {
            let setup = cfg.setup.resolve(cfg.setup.configured_times()?)?;
            let curve = generate_synthetic(&setup, cfg.model, &truth, &cfg.grid, 0.0, cfg.smc.seed)?;
            Ok((setup, curve, ObservationSource::Synthetic))
        }
        (None, None) => Err(CliError::Config("neither data_path nor synthetic_truth is set".into())),
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationRun {
    pub output_dir: PathBuf,
    pub setup: ExperimentSetup,
    pub observed: ImbibitionCurve,
    pub outcome: SmcOutcome,
    pub report: PosteriorReport,
    /// Reported medians by name.
    pub median_parameters: BTreeMap<String, f64>,
    pub median_curve: ImbibitionCurve,
    /// Discrepancy of the curve simulated at the medians.
    pub median_discrepancy: f64,
}

impl CalibrationRun {
    pub fn final_epsilon(&self) -> f64 {
        self.outcome.last().epsilon
    }
}

/// Runs ABC–SMC for `cfg` and writes every output file.
pub fn run_calibration(cfg: &RunConfig, workers: usize) -> Result<CalibrationRun, CliError> {
    cfg.validate()?;
    let out = cfg.effective_output_dir();
    let pop_dir = out.join("populations");
    std::fs::create_dir_all(&pop_dir).map_err(|e| CliError::io(&pop_dir, e))?;

    let (setup, observed, source) = observations(cfg)?;
    write_measurements(&out.join("observations.csv"), &observed)?;

    let simulator = ImbibitionSimulator::new(cfg.prior.clone(), cfg.model, setup.clone(), cfg.grid, observed.clone())?;
    let names = cfg.prior.names();
    let mut write_error = None;
    let outcome = Sampler::new(&cfg.prior, &simulator, cfg.smc.clone())?.workers(workers).run(|population| {
        if write_error.is_none() {
            let path = population_path(&pop_dir, population.generation);
            write_error = output::write_population(&path, &names, population).err();
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    output::write_diagnostics(&out.join("diagnostics.csv"), &outcome.populations)?;

    let report = write_analysis(&out, &outcome.populations, &cfg.prior, &cfg.analysis)?;
    let median_parameters: BTreeMap<String, f64> =
        report.names.iter().cloned().zip(report.summaries.iter().map(|s| s.median)).collect();
    let median_curve = simulate_named(cfg.model, &setup, &cfg.grid, &median_parameters)?;
    let median_discrepancy = discrepancy(&median_curve, &observed)?;
    output::write_fit_curve(&out.join("fit_curve.csv"), &observed.times, &observed.q_values, &median_curve.q_values)?;
    output::write_bprime_curve(
        &out.join("bprime_curve.csv"),
        &bprime_band(cfg.model, &cfg.prior, outcome.last(), &median_parameters, &cfg.analysis)?,
    )?;

    let last = outcome.last();
    let manifest = json!({
        "tool": "imbibe",
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "resolved_setup": setup,
        "observations": match source { ObservationSource::Data => "data", ObservationSource::Synthetic => "synthetic" },
        "stop_reason": outcome.stop_reason,
        "generations": outcome.populations.len(),
        "final_epsilon": last.epsilon,
        "total_simulations": outcome.populations.iter().map(|p| p.diagnostics.simulations).sum::<usize>(),
        "median_parameters": median_parameters,
        "median_discrepancy": median_discrepancy,
    });
    output::write_json(&out.join("manifest.json"), &manifest)?;

    Ok(CalibrationRun {
        output_dir: out,
        setup,
        observed,
        outcome,
        report,
        median_parameters,
        median_curve,
        median_discrepancy,
    })
}

/// Writes `summary.csv`, `correlation.csv`, `pca.csv` and `marginals/` for a population history.
pub fn write_analysis(
    dir: &Path,
    populations: &[Population],
    prior: &PriorSpec,
    analysis: &AnalysisConfig,
) -> Result<PosteriorReport, CliError> {
    let report = PosteriorReport::build(populations, prior, analysis.nu, analysis.bins, analysis.standardize)?;
    output::write_summary(&dir.join("summary.csv"), &report)?;
    output::write_correlation(&dir.join("correlation.csv"), &report)?;
    output::write_pca(&dir.join("pca.csv"), &report)?;
    let generations: Vec<usize> = populations.iter().map(|p| p.generation).collect();
    for h in &report.marginals {
        output::write_marginal(&dir.join("marginals").join(format!("{}.csv", h.name)), &generations, h)?;
    }
    Ok(report)
}

/// `B'(s)` at the medians with a pointwise credible band over the final population.
fn bprime_band(
    family: ModelFamily,
    prior: &PriorSpec,
    last: &Population,
    medians: &BTreeMap<String, f64>,
    analysis: &AnalysisConfig,
) -> Result<Vec<[f64; 4]>, CliError> {
    let median_model = build_model(family, medians)?;
    let mut models = Vec::new();
    let mut weights = Vec::new();
    for p in &last.particles {
        if let Ok(m) = build_model(family, &prior.resolve(&p.theta)) {
            models.push(m);
            weights.push(p.weight);
        }
    }
    let n = analysis.bprime_points.max(2);
    let tail = 0.5 * (1.0 - analysis.nu);
    (0..n)
        .map(|k| {
            let s = k as f64 / (n - 1) as f64;
            let values: Vec<f64> = models.iter().map(|m| m.b_prime_unchecked(s)).collect();
            let (lo, hi) = if values.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (weighted_quantile(&values, &weights, tail)?, weighted_quantile(&values, &weights, 1.0 - tail)?)
            };
            Ok([s, median_model.b_prime_unchecked(s), lo, hi])
        })
        .collect()
}

/// Recomputes the analysis files from the population files of a finished run.
///
/// Without an explicit config, the prior and analysis settings come from the
/// `manifest.json` next to (or inside) the populations directory.
pub fn analyze(
    populations_dir: &Path,
    config: Option<RunConfig>,
    output_dir: Option<PathBuf>,
) -> Result<PosteriorReport, CliError> {
    let run_dir = populations_dir.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let cfg = match config {
        Some(c) => c,
        None => {
            let candidates = [run_dir.join("manifest.json"), populations_dir.join("manifest.json")];
            let path = candidates
                .iter()
                .find(|p| p.exists())
                .ok_or_else(|| CliError::Config("no manifest.json found; pass --config".into()))?;
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let manifest: serde_json::Value = serde_json::from_str(&text)?;
            serde_json::from_value(manifest["config"].clone())?
        }
    };
    let files = output::population_files(populations_dir)?;
    if files.is_empty() {
        return Err(CliError::Config(format!("no gen_<t>.csv files in {}", populations_dir.display())));
    }
    let expected: Vec<String> = cfg.prior.names().iter().map(|s| s.to_string()).collect();
    let mut populations = Vec::with_capacity(files.len());
    for (generation, path) in files {
        let (names, particles) = output::read_population(&path)?;
        if names != expected {
            return Err(CliError::Config(format!(
                "{} has coordinates {:?}, the prior has {:?}",
                path.display(),
                names,
                expected
            )));
        }
        let weights: Vec<f64> = particles.iter().map(|p| p.weight).collect();
        let epsilon = particles.iter().map(|p| p.distance).fold(0.0, f64::max);
        populations.push(Population {
            generation,
            diagnostics: Diagnostics {
                epsilon,
                ess: effective_sample_size(&weights),
                acceptance_rate: f64::NAN,
                simulations: 0,
                trials: 0,
                resampled: false,
            },
            epsilon,
            particles,
        });
    }
    let out = output_dir.unwrap_or(run_dir);
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    write_analysis(&out, &populations, &cfg.prior, &cfg.analysis)
}
