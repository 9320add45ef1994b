//! CSV writers for run outputs and the population reader used by `analyze`.

use std::path::{Path, PathBuf};

use imbibition::posterior::{MarginalHistogram, PosteriorReport};
use imbibition::smc::{Diagnostics, Particle, Population};

use crate::CliError;

/// Lossless text form of a float: 17 significant digits.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    csv::Writer::from_path(path).map_err(CliError::from)
}

fn write_rows(path: &Path, header: Vec<String>, rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(&header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn population_path(dir: &Path, generation: usize) -> PathBuf {
    dir.join(format!("gen_{generation}.csv"))
}

/// `particle,<coordinates...>,weight,distance`.
pub fn write_population(path: &Path, names: &[&str], population: &Population) -> Result<(), CliError> {
    let mut header = vec!["particle".to_string()];
    header.extend(names.iter().map(|n| n.to_string()));
    header.extend(["weight".into(), "distance".into()]);
    let rows = population.particles.iter().enumerate().map(|(i, p)| {
        let mut row = vec![i.to_string()];
        row.extend(p.theta.iter().map(|&x| fmt(x)));
        row.push(fmt(p.weight));
        row.push(fmt(p.distance));
        row
    });
    write_rows(path, header, rows)
}

/// Reads a population file; returns the coordinate names and the particles.
pub fn read_population(path: &Path) -> Result<(Vec<String>, Vec<Particle>), CliError> {
    let parse_err = |line: u64, message: String| CliError::Parse { path: path.display().to_string(), line, message };
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let d = header.len();
    if d < 4 || header[0] != "particle" || header[d - 2] != "weight" || header[d - 1] != "distance" {
        return Err(parse_err(1, "expected header particle,<coordinates...>,weight,distance".into()));
    }
    let names = header[1..d - 2].to_vec();
    let mut particles = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let values = record
            .iter()
            .skip(1)
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(line, format!("{f}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != d - 1 {
            return Err(parse_err(line, format!("expected {} fields", d)));
        }
        particles.push(Particle {
            theta: values[..d - 3].to_vec(),
            weight: values[d - 3],
            distance: values[d - 2],
        });
    }
    Ok((names, particles))
}

/// Population files `gen_<t>.csv` of a directory, in generation order.
pub fn population_files(dir: &Path) -> Result<Vec<(usize, PathBuf)>, CliError> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let generation = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("gen_"))
            .and_then(|n| n.strip_suffix(".csv"))
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(g) = generation {
            found.push((g, path));
        }
    }
    found.sort();
    Ok(found)
}

pub fn write_diagnostics(path: &Path, populations: &[Population]) -> Result<(), CliError> {
    let header = ["generation", "epsilon", "ess", "acceptance_rate", "simulations", "total_simulations", "trials", "resampled"];
    let mut total = 0;
    let rows = populations.iter().map(|p| {
        let Diagnostics { epsilon, ess, acceptance_rate, simulations, trials, resampled } = p.diagnostics;
        total += simulations;
        vec![
            p.generation.to_string(),
            fmt(epsilon),
            fmt(ess),
            fmt(acceptance_rate),
            simulations.to_string(),
            total.to_string(),
            trials.to_string(),
            resampled.to_string(),
        ]
    });
    write_rows(path, header.iter().map(|s| s.to_string()).collect(), rows.collect::<Vec<_>>())
}

pub fn write_summary(path: &Path, report: &PosteriorReport) -> Result<(), CliError> {
    let header = ["parameter", "median", "lower", "upper", "nu"].map(String::from).to_vec();
    let rows = report.names.iter().zip(&report.summaries).map(|(n, s)| {
        vec![n.clone(), fmt(s.median), fmt(s.lower), fmt(s.upper), fmt(report.nu)]
    });
    write_rows(path, header, rows)
}

/// Entries involving a zero-variance parameter are written as `undefined`.
pub fn write_correlation(path: &Path, report: &PosteriorReport) -> Result<(), CliError> {
    let mut header = vec!["parameter".to_string()];
    header.extend(report.names.iter().cloned());
    let undefined = |i: usize| report.undefined_correlation.contains(&report.names[i]);
    let d = report.names.len();
    let rows = (0..d).map(|i| {
        let mut row = vec![report.names[i].clone()];
        row.extend((0..d).map(|j| {
            if i != j && (undefined(i) || undefined(j)) {
                "undefined".to_string()
            } else {
                fmt(report.correlation[(i, j)])
            }
        }));
        row
    });
    write_rows(path, header, rows)
}

/// One row per component: eigenvalue, explained fraction, loadings, squared loadings.
pub fn write_pca(path: &Path, report: &PosteriorReport) -> Result<(), CliError> {
    let mut header = vec!["component".to_string(), "eigenvalue".into(), "explained_variance".into()];
    header.extend(report.names.iter().map(|n| format!("loading_{n}")));
    header.extend(report.names.iter().map(|n| format!("squared_loading_{n}")));
    let pca = &report.pca;
    let d = report.names.len();
    let rows = (0..d).map(|k| {
        let mut row = vec![format!("PC{}", k + 1), fmt(pca.eigenvalues[k]), fmt(pca.explained[k])];
        row.extend((0..d).map(|i| fmt(pca.loadings[(i, k)])));
        row.extend((0..d).map(|i| fmt(pca.squared_loadings[(i, k)])));
        row
    });
    write_rows(path, header, rows)
}

/// Long format: `generation,bin_lower,bin_upper,density`.
pub fn write_marginal(path: &Path, generations: &[usize], histogram: &MarginalHistogram) -> Result<(), CliError> {
    let header = ["generation", "bin_lower", "bin_upper", "density"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for (g, densities) in generations.iter().zip(&histogram.densities) {
        for (k, d) in densities.iter().enumerate() {
            rows.push(vec![g.to_string(), fmt(histogram.edges[k]), fmt(histogram.edges[k + 1]), fmt(*d)]);
        }
    }
    write_rows(path, header, rows)
}

pub fn write_fit_curve(path: &Path, times: &[f64], observed: &[f64], simulated: &[f64]) -> Result<(), CliError> {
    let header = ["time_hours", "time_s", "q_observed", "q_simulated"].map(String::from).to_vec();
    let rows = (0..times.len()).map(|k| {
        vec![fmt(times[k] / crate::data::SECONDS_PER_HOUR), fmt(times[k]), fmt(observed[k]), fmt(simulated[k])]
    });
    write_rows(path, header, rows)
}

/// `s,b_prime_median,b_prime_lower,b_prime_upper`.
pub fn write_bprime_curve(path: &Path, rows: &[[f64; 4]]) -> Result<(), CliError> {
    let header = ["s", "b_prime_median", "b_prime_lower", "b_prime_upper"].map(String::from).to_vec();
    write_rows(path, header, rows.iter().map(|r| r.iter().map(|&x| fmt(x)).collect()))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2.5e-300, -7.123456789012345e12, f64::MIN_POSITIVE] {
            let s = fmt(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap();
            assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
        }
    }
}
