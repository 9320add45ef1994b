//! Adaptive tolerance schedule.

/// Empirical quantile with linear interpolation between order statistics
/// (`h = (n - 1) q`), the usual "type 7" definition.
pub fn linear_quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Next tolerance: the `quantile_level` quantile of `distances`, never above
/// the previous tolerance.
pub fn next_epsilon(distances: &[f64], previous_epsilon: f64, quantile_level: f64) -> f64 {
    linear_quantile(distances, quantile_level).min(previous_epsilon)
}
