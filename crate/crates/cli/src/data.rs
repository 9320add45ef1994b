//! Measurement files: `time_hours,q_g_per_cm2`, one row per weighing.

use std::io::Write;
use std::path::Path;

use imbibition::solver::ImbibitionCurve;

use crate::output::fmt;
use crate::CliError;

pub const MEASUREMENT_HEADER: [&str; 2] = ["time_hours", "q_g_per_cm2"];
pub const SECONDS_PER_HOUR: f64 = 3600.0;

pub fn load_measurements(path: &Path) -> Result<ImbibitionCurve, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_measurements(file, &path.display().to_string())
}

/// Parses measurement CSV text; `source` names the input in error messages.
pub fn parse_measurements(reader: impl std::io::Read, source: &str) -> Result<ImbibitionCurve, CliError> {
    let err = |line: u64, message: String| CliError::Parse { path: source.to_string(), line, message };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != MEASUREMENT_HEADER {
        return Err(err(1, format!("expected header {}, found {}", MEASUREMENT_HEADER.join(","), header.iter().collect::<Vec<_>>().join(","))));
    }
    let (mut times, mut q_values) = (Vec::new(), Vec::new());
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(err(line, format!("expected 2 fields, found {}", record.len())));
        }
        let field = |i: usize| -> Result<f64, CliError> {
            record[i].parse::<f64>().map_err(|e| err(line, format!("{}: {e}", MEASUREMENT_HEADER[i])))
        };
        let (hours, q) = (field(0)?, field(1)?);
        if !hours.is_finite() || hours <= 0.0 {
            return Err(err(line, format!("time must be positive, got {hours}")));
        }
        if let Some(&last) = times.last() {
            if hours * SECONDS_PER_HOUR <= last {
                return Err(err(line, "times must be strictly increasing".into()));
            }
        }
        if !q.is_finite() || q < 0.0 {
            return Err(err(line, format!("absorbed mass must be non-negative, got {q}")));
        }
        times.push(hours * SECONDS_PER_HOUR);
        q_values.push(q);
    }
    if times.is_empty() {
        return Err(err(1, "no measurements".into()));
    }
    Ok(ImbibitionCurve::new(times, q_values)?)
}

pub fn write_measurements(path: &Path, curve: &ImbibitionCurve) -> Result<(), CliError> {
    let mut out = String::from("time_hours,q_g_per_cm2\n");
    for (t, q) in curve.times.iter().zip(&curve.q_values) {
        out.push_str(&format!("{},{}\n", fmt(t / SECONDS_PER_HOUR), fmt(*q)));
    }
    let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ImbibitionCurve, CliError> {
        parse_measurements(text.as_bytes(), "test.csv")
    }

    #[test]
    fn hours_become_seconds() {
        let c = parse("time_hours,q_g_per_cm2\n0.5,0.12\n1.0,0.18\n").unwrap();
        assert_eq!(c.times, vec![1800.0, 3600.0]);
        assert_eq!(c.q_values, vec![0.12, 0.18]);
        let c = parse("time_hours,q_g_per_cm2\n146,1.2\n").unwrap();
        assert_eq!(c.times, vec![525_600.0]);
    }

    #[test]
    fn non_monotone_rows_are_named() {
        let e = parse("time_hours,q_g_per_cm2\n1.0,0.1\n0.5,0.2\n").unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 3, .. }), "{e}");
    }

    #[test]
    fn bad_number_reports_line() {
        let e = parse("time_hours,q_g_per_cm2\n1.0,0.1\n2.0,abc\n").unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 3, .. }), "{e}");
        let e = parse("time_hours,q_g_per_cm2\n1.0,-0.1\n").unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 2, .. }), "{e}");
    }

    #[test]
    fn wrong_header() {
        assert!(matches!(parse("t,q\n1,2\n").unwrap_err(), CliError::Parse { line: 1, .. }));
    }
}
