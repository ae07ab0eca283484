use super::AnalysisError;

/// Classical additive decomposition: original = trend + seasonal + residual
/// wherever the trend is defined.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Centered moving average; `None` for the first and last
    /// `period / 2` indices.
    pub trend: Vec<Option<f64>>,
    /// Periodic component, zero-mean over one period, defined everywhere.
    pub seasonal: Vec<f64>,
    /// Remainder; defined exactly where the trend is.
    pub residual: Vec<Option<f64>>,
    pub period: usize,
}

/// Classical moving-average decomposition. The trend uses a centered window
/// of `period` points (for even periods, the standard 2-by-period average
/// with half-weight endpoints); the seasonal component is the re-centered
/// per-phase mean of the de-trended series.
pub fn seasonal_decompose(series: &[f64], period: usize) -> Result<Decomposition, AnalysisError> {
    if period == 0 {
        return Err(AnalysisError::ZeroPeriod);
    }
    let n = series.len();
    if n < 2 * period {
        return Err(AnalysisError::InsufficientData {
            len: n,
            period,
            needed: 2 * period,
        });
    }

    let half = period / 2;
    let mut trend: Vec<Option<f64>> = vec![None; n];
    if period % 2 == 1 {
        for t in half..n - half {
            let window = &series[t - half..=t + half];
            trend[t] = Some(window.iter().sum::<f64>() / period as f64);
        }
    } else {
        for t in half..n - half {
            let mut sum = 0.5 * (series[t - half] + series[t + half]);
            for &v in &series[t - half + 1..t + half] {
                sum += v;
            }
            trend[t] = Some(sum / period as f64);
        }
    }

    // Per-phase means of the de-trended series, then re-centered so the
    // seasonal component sums to zero over one period.
    let mut phase_sum = vec![0.0; period];
    let mut phase_count = vec![0usize; period];
    for (t, maybe_trend) in trend.iter().enumerate() {
        if let Some(tr) = maybe_trend {
            phase_sum[t % period] += series[t] - tr;
            phase_count[t % period] += 1;
        }
    }
    let mut phase_mean: Vec<f64> = phase_sum
        .iter()
        .zip(&phase_count)
        .map(|(&s, &c)| s / c as f64)
        .collect();
    let grand_mean = phase_mean.iter().sum::<f64>() / period as f64;
    for m in &mut phase_mean {
        *m -= grand_mean;
    }

    let seasonal: Vec<f64> = (0..n).map(|t| phase_mean[t % period]).collect();
    let residual: Vec<Option<f64>> = (0..n)
        .map(|t| trend[t].map(|tr| series[t] - tr - seasonal[t]))
        .collect();

    Ok(Decomposition {
        trend,
        seasonal,
        residual,
        period,
    })
}
