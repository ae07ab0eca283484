use super::DataError;

/// Additive offset applied before the log transform so zero utilization stays
/// defined.
pub const DEFAULT_LOG_EPSILON: f64 = 1e-3;

/// Log + min-max transform parameters, fit on training data only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalerParams {
    pub log_epsilon: f64,
    /// Minimum of ln(x + log_epsilon) over the fit values.
    pub min_value: f64,
    /// Maximum of ln(x + log_epsilon) over the fit values.
    pub max_value: f64,
}

/// Computes the log-space range of `values`.
pub fn fit_scaler(values: &[f64], log_epsilon: f64) -> Result<ScalerParams, DataError> {
    if !log_epsilon.is_finite() || log_epsilon <= 0.0 {
        return Err(DataError::InvalidLogEpsilon(log_epsilon));
    }
    if values.is_empty() {
        return Err(DataError::EmptySeries);
    }
    let mut min_value = f64::INFINITY;
    let mut max_value = f64::NEG_INFINITY;
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(DataError::InvalidScalerInput { value, index });
        }
        let log = (value + log_epsilon).ln();
        min_value = min_value.min(log);
        max_value = max_value.max(log);
    }
    if !(max_value > min_value) {
        return Err(DataError::ConstantSeries);
    }
    Ok(ScalerParams {
        log_epsilon,
        min_value,
        max_value,
    })
}

impl ScalerParams {
    /// Maps `x` to [0,1]; values outside the fit range are clamped.
    pub fn scale(&self, x: f64) -> f64 {
        let log = (x + self.log_epsilon).ln();
        ((log - self.min_value) / (self.max_value - self.min_value)).clamp(0.0, 1.0)
    }

    /// Inverts `scale` for unclamped values.
    pub fn unscale(&self, y: f64) -> f64 {
        (self.min_value + y * (self.max_value - self.min_value)).exp() - self.log_epsilon
    }

    pub fn scale_slice(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&x| self.scale(x)).collect()
    }

    pub fn unscale_slice(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&y| self.unscale(y)).collect()
    }
}

/// Max over consecutive windows; a trailing partial window is kept as the max
/// of its remainder.
pub fn downsample_max(values: &[f64], window: usize) -> Result<Vec<f64>, DataError> {
    if window == 0 {
        return Err(DataError::ZeroWindow);
    }
    Ok(values
        .chunks(window)
        .map(|chunk| chunk.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
        .collect())
}
