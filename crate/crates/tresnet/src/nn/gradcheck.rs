//! Central finite-difference utilities shared by the gradient tests.

/// Perturbation step for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Symmetric relative error, guarded against division by values near zero.
pub fn relative_error(numeric: f64, analytic: f64) -> f64 {
    let denom = (numeric.abs() + analytic.abs()).max(1e-8);
    (numeric - analytic).abs() / denom
}

/// Worst elementwise [`relative_error`] across two equal-length slices.
pub fn max_relative_error(numeric: &[f64], analytic: &[f64]) -> f64 {
    assert_eq!(numeric.len(), analytic.len(), "gradient lengths differ");
    numeric
        .iter()
        .zip(analytic)
        .map(|(&n, &a)| relative_error(n, a))
        .fold(0.0, f64::max)
}

/// Central finite-difference gradient of a scalar function of a flat vector:
/// g_i = (f(x + h e_i) - f(x - h e_i)) / (2 h).
pub fn numeric_gradient(
    eval: &mut dyn FnMut(&[f64]) -> f64,
    at: &[f64],
    step: f64,
) -> Vec<f64> {
    let mut scratch = at.to_vec();
    let mut grad = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let original = scratch[i];
        scratch[i] = original + step;
        let plus = eval(&scratch);
        scratch[i] = original - step;
        let minus = eval(&scratch);
        scratch[i] = original;
        grad.push((plus - minus) / (2.0 * step));
    }
    grad
}
