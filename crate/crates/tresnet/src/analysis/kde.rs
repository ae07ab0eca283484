use super::AnalysisError;

/// Bandwidth selection for [`gaussian_kde`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Silverman's rule of thumb.
    Silverman,
    Fixed(f64),
}

/// Silverman's rule: h = 0.9 * min(sigma, IQR/1.34) * n^(-1/5), with the
/// sample standard deviation and linearly interpolated quartiles. If the IQR
/// degenerates to zero on heavily tied data, sigma alone is used so the
/// bandwidth stays positive.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64, AnalysisError> {
    let n = samples.len();
    if n < 2 {
        return Err(AnalysisError::BandwidthUndefined);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sigma = var.sqrt();
    if sigma == 0.0 {
        return Err(AnalysisError::BandwidthUndefined);
    }

    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 {
        sigma.min(iqr / 1.34)
    } else {
        sigma
    };
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// Linearly interpolated quantile of an ascending-sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Gaussian kernel density estimate over `eval_points`:
/// f(x) = (1 / (n h)) * sum_i phi((x - s_i) / h).
pub fn gaussian_kde(
    samples: &[f64],
    eval_points: &[f64],
    bandwidth: Bandwidth,
) -> Result<Vec<f64>, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptySamples);
    }
    let h = match bandwidth {
        Bandwidth::Silverman => silverman_bandwidth(samples)?,
        Bandwidth::Fixed(h) => {
            if !h.is_finite() || h <= 0.0 {
                return Err(AnalysisError::NonPositiveBandwidth(h));
            }
            h
        }
    };
    let norm = 1.0 / (samples.len() as f64 * h);
    Ok(eval_points
        .iter()
        .map(|&x| {
            let sum: f64 = samples
                .iter()
                .map(|&s| standard_normal_density((x - s) / h))
                .sum();
            norm * sum
        })
        .collect())
}

fn standard_normal_density(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_sample_density_peaks_at_phi_zero() {
        let d = gaussian_kde(&[0.0], &[0.0], Bandwidth::Fixed(1.0)).unwrap();
        assert!((d[0] - 0.3989422804014327).abs() < 1e-12);
    }

    #[test]
    fn symmetric_samples_give_symmetric_density() {
        let samples = [-1.0, 1.0];
        for x in [0.3, 0.7, 1.5] {
            let d = gaussian_kde(&samples, &[-x, x], Bandwidth::Fixed(0.4)).unwrap();
            assert!((d[0] - d[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn three_term_hand_sum() {
        // Two samples at distance 1 and one at distance -1, in kernel units.
        let d = gaussian_kde(&[0.0, 0.0, 1.0], &[0.5], Bandwidth::Fixed(0.5)).unwrap();
        assert!((d[0] - 0.48394144903828673).abs() < 1e-12);
    }

    #[test]
    fn density_is_nonnegative_and_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let samples: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
            let grid = linspace(-6.0, 6.0, 1201);
            let density = gaussian_kde(&samples, &grid, Bandwidth::Silverman).unwrap();
            assert!(density.iter().all(|&d| d >= 0.0));
            let step = grid[1] - grid[0];
            let integral: f64 = density
                .windows(2)
                .map(|w| 0.5 * (w[0] + w[1]) * step)
                .sum();
            assert!((integral - 1.0).abs() < 1e-2, "integral {integral}");
        }
    }

    #[test]
    fn silverman_matches_direct_formula() {
        let samples = [0.1, 0.4, 0.2, 0.9, 0.6, 0.3];
        let h = silverman_bandwidth(&samples).unwrap();

        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let sigma = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Quartiles by linear interpolation on 6 points: positions 1.25 and 3.75.
        let q1 = sorted[1] + 0.25 * (sorted[2] - sorted[1]);
        let q3 = sorted[3] + 0.75 * (sorted[4] - sorted[3]);
        let want = 0.9 * sigma.min((q3 - q1) / 1.34) * n.powf(-0.2);
        assert!((h - want).abs() < 1e-12);
    }

    #[test]
    fn bandwidth_errors() {
        assert!(matches!(
            silverman_bandwidth(&[0.5]),
            Err(AnalysisError::BandwidthUndefined)
        ));
        assert!(matches!(
            silverman_bandwidth(&[0.5, 0.5, 0.5]),
            Err(AnalysisError::BandwidthUndefined)
        ));
        assert!(matches!(
            gaussian_kde(&[0.1, 0.2], &[0.0], Bandwidth::Fixed(0.0)),
            Err(AnalysisError::NonPositiveBandwidth(_))
        ));
        assert!(matches!(
            gaussian_kde(&[], &[0.0], Bandwidth::Fixed(1.0)),
            Err(AnalysisError::EmptySamples)
        ));
    }

    #[test]
    fn linspace_endpoints_and_spacing() {
        let grid = linspace(-1.0, 1.0, 100);
        assert_eq!(grid.len(), 100);
        assert_eq!(grid[0], -1.0);
        assert!((grid[99] - 1.0).abs() < 1e-12);
        let step = grid[1] - grid[0];
        assert!((step - 2.0 / 99.0).abs() < 1e-12);
    }
}
