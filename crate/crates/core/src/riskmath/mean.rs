use super::RiskMathError;

/// Generalized mean of order `p`; `p == 0` is the geometric mean.
///
/// The result is clamped to `[min, max]` of the input. The clamp only ever
/// absorbs rounding error since the power mean lies within those bounds.
pub fn power_mean(values: &[f64], p: f64) -> Result<f64, RiskMathError> {
    if values.is_empty() {
        return Err(RiskMathError::EmptyInput("power_mean"));
    }
    if let Some(&bad) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(RiskMathError::NonPositive(bad));
    }
    let n = values.len() as f64;
    let raw = if p == 0.0 {
        (values.iter().map(|v| v.ln()).sum::<f64>() / n).exp()
    } else {
        (values.iter().map(|v| v.powf(p)).sum::<f64>() / n).powf(1.0 / p)
    };
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(raw.clamp(lo, hi))
}

/// Median; even-length input averages the two middle values.
pub fn median(values: &[f64]) -> Result<f64, RiskMathError> {
    if values.is_empty() {
        return Err(RiskMathError::EmptyInput("median"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Ok(if sorted.len() % 2 == 0 {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    })
}
