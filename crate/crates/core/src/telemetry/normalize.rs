use super::TelemetryError;

const DEGENERATE_STD: f64 = 1e-12;

/// Sample standard deviation (divisor n - 1). Requires two or more values.
pub fn sample_std(values: &[f64]) -> Result<f64, TelemetryError> {
    if values.len() < 2 {
        return Err(TelemetryError::InsufficientData { needed: 2, got: values.len() });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((ss / (n - 1.0)).sqrt())
}

/// Z-score normalization. A window with (numerically) zero spread maps to zeros.
pub fn zscore(values: &[f64]) -> Result<Vec<f64>, TelemetryError> {
    let s = sample_std(values)?;
    if s < DEGENERATE_STD {
        return Ok(vec![0.0; values.len()]);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(values.iter().map(|x| (x - mean) / s).collect())
}

/// Min-max scaling to `[0, 1]`. A constant window maps to 0.5 everywhere.
pub fn minmax(values: &[f64]) -> Result<Vec<f64>, TelemetryError> {
    if values.is_empty() {
        return Err(TelemetryError::InsufficientData { needed: 1, got: 0 });
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span == 0.0 {
        return Ok(vec![0.5; values.len()]);
    }
    Ok(values
        .iter()
        .map(|x| ((x - lo) / span).clamp(0.0, 1.0))
        .collect())
}
