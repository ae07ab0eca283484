//! Metrics, baseline predictors, and comparison reports.

use std::fmt;

use thiserror::Error;

use crate::sampler::Sample;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("empty input")]
    Empty,

    #[error("got {predictions} predictions for {truths} truths")]
    LengthMismatch { predictions: usize, truths: usize },

    #[error("MAPE floor must be positive, got {0}")]
    BadFloor(f64),

    #[error("all {count} samples fall below the MAPE floor {floor}")]
    AllExcluded { floor: f64, count: usize },

    #[error("{what} needs {needed} rows, fragment has {available}")]
    FragmentTooShort {
        what: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("window must be positive")]
    ZeroWindow,
}

fn check_lengths(predictions: &[f64], truths: &[f64]) -> Result<(), EvalError> {
    if predictions.is_empty() || truths.is_empty() {
        return Err(EvalError::Empty);
    }
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64, EvalError> {
    check_lengths(predictions, truths)?;
    let n = predictions.len() as f64;
    let sum: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sum / n).sqrt())
}

/// Mean absolute error.
pub fn mae(predictions: &[f64], truths: &[f64]) -> Result<f64, EvalError> {
    check_lengths(predictions, truths)?;
    let n = predictions.len() as f64;
    Ok(predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapeResult {
    pub value: f64,
    /// Samples skipped because the truth fell below the floor.
    pub excluded: usize,
}

/// Mean absolute percentage error, averaging |p - t| / t over the samples
/// with t >= floor. Small truths are excluded rather than allowed to blow up
/// the quotient; the exclusion count is always reported.
pub fn mape(predictions: &[f64], truths: &[f64], floor: f64) -> Result<MapeResult, EvalError> {
    check_lengths(predictions, truths)?;
    if !(floor > 0.0) {
        return Err(EvalError::BadFloor(floor));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (p, t) in predictions.iter().zip(truths) {
        if *t >= floor {
            sum += (p - t).abs() / t;
            used += 1;
        }
    }
    if used == 0 {
        return Err(EvalError::AllExcluded {
            floor,
            count: predictions.len(),
        });
    }
    Ok(MapeResult {
        value: sum / used as f64,
        excluded: predictions.len() - used,
    })
}

/// Last-value baseline: predicts the target-max value at the anchor
/// timestamp, i.e. the last locality row.
pub fn naive_predict(samples: &[Sample]) -> Vec<f64> {
    samples
        .iter()
        .map(|s| s.locality.at(s.locality.rows - 1, 2))
        .collect()
}

/// Seasonal baseline: the periodicity-fragment max value `periods_back`
/// periods before the anchor.
pub fn seasonal_naive_predict(
    samples: &[Sample],
    periods_back: usize,
) -> Result<Vec<f64>, EvalError> {
    if periods_back == 0 {
        return Err(EvalError::ZeroWindow);
    }
    samples
        .iter()
        .map(|s| {
            let rows = s.periodicity.rows;
            if rows <= periods_back {
                return Err(EvalError::FragmentTooShort {
                    what: "seasonal-naive lookback",
                    needed: periods_back + 1,
                    available: rows,
                });
            }
            Ok(s.periodicity.at(rows - 1 - periods_back, 2))
        })
        .collect()
}

/// Windowed-mean baseline: the average of the last `window` locality max
/// values.
pub fn mean_predict(samples: &[Sample], window: usize) -> Result<Vec<f64>, EvalError> {
    if window == 0 {
        return Err(EvalError::ZeroWindow);
    }
    samples
        .iter()
        .map(|s| {
            let rows = s.locality.rows;
            if rows < window {
                return Err(EvalError::FragmentTooShort {
                    what: "mean window",
                    needed: window,
                    available: rows,
                });
            }
            let sum: f64 = (rows - window..rows).map(|r| s.locality.at(r, 2)).sum();
            Ok(sum / window as f64)
        })
        .collect()
}

/// Conventional method name for a model with k peer channels.
pub fn tresnet_method_name(k: usize) -> String {
    if k == 0 {
        "T-ResNet".to_string()
    } else {
        format!("T-ResNet-{k}REL")
    }
}

/// Which domain the metric values live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalScale {
    /// The model's normalized [0, 1] scale.
    Normalized,
    /// Raw utilization fractions of capacity.
    Unscaled,
}

impl fmt::Display for EvalScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalScale::Normalized => write!(f, "normalized [0,1] scale"),
            EvalScale::Unscaled => write!(f, "unscaled fraction-of-capacity scale"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodScores {
    pub rmse: f64,
    pub mae: f64,
    pub mape: f64,
    pub mape_excluded: usize,
    pub best_rmse: bool,
    pub best_mae: bool,
    pub best_mape: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodEntry {
    pub method: String,
    pub outcome: Result<MethodScores, EvalError>,
}

/// Per-method, per-metric comparison over one evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub scale: EvalScale,
    pub sample_count: usize,
    pub mape_floor: f64,
    /// In the caller's method order.
    pub methods: Vec<MethodEntry>,
}

/// Scores every method against the shared truths. A method whose predictions
/// failed upstream, mismatch the truths, or lose every sample to the MAPE
/// floor gets an errored entry; the other methods are still scored.
pub fn evaluate(
    methods: Vec<(String, Result<Vec<f64>, EvalError>)>,
    truths: &[f64],
    mape_floor: f64,
    scale: EvalScale,
) -> Result<MetricReport, EvalError> {
    if methods.is_empty() || truths.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut entries: Vec<MethodEntry> = methods
        .into_iter()
        .map(|(method, predictions)| {
            let outcome = predictions.and_then(|preds| {
                let rmse = rmse(&preds, truths)?;
                let mae = mae(&preds, truths)?;
                let mape = mape(&preds, truths, mape_floor)?;
                Ok(MethodScores {
                    rmse,
                    mae,
                    mape: mape.value,
                    mape_excluded: mape.excluded,
                    best_rmse: false,
                    best_mae: false,
                    best_mape: false,
                })
            });
            MethodEntry { method, outcome }
        })
        .collect();

    let best = |pick: &dyn Fn(&MethodScores) -> f64| {
        entries
            .iter()
            .filter_map(|e| e.outcome.as_ref().ok())
            .map(pick)
            .fold(f64::INFINITY, f64::min)
    };
    let (best_rmse, best_mae, best_mape) =
        (best(&|s| s.rmse), best(&|s| s.mae), best(&|s| s.mape));
    for entry in &mut entries {
        if let Ok(scores) = &mut entry.outcome {
            scores.best_rmse = scores.rmse == best_rmse;
            scores.best_mae = scores.mae == best_mae;
            scores.best_mape = scores.mape == best_mape;
        }
    }

    Ok(MetricReport {
        scale,
        sample_count: truths.len(),
        mape_floor,
        methods: entries,
    })
}

impl MetricReport {
    /// Aligned plain-text table; the best value per metric is starred.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "metrics on the {} over {} samples (MAPE floor {})\n",
            self.scale, self.sample_count, self.mape_floor
        );
        let width = self
            .methods
            .iter()
            .map(|e| e.method.len())
            .max()
            .unwrap_or(6)
            .max(6);
        out.push_str(&format!(
            "{:width$}  {:>12}  {:>12}  {:>12}  {:>8}\n",
            "method", "rmse", "mae", "mape", "excluded"
        ));
        for entry in &self.methods {
            match &entry.outcome {
                Ok(s) => {
                    let mark = |best: bool| if best { "*" } else { " " };
                    out.push_str(&format!(
                        "{:width$}  {:>11.6}{} {:>11.6}{} {:>11.6}{} {:>8}\n",
                        entry.method,
                        s.rmse,
                        mark(s.best_rmse),
                        s.mae,
                        mark(s.best_mae),
                        s.mape,
                        mark(s.best_mape),
                        s.mape_excluded,
                    ));
                }
                Err(e) => {
                    out.push_str(&format!("{:width$}  error: {e}\n", entry.method));
                }
            }
        }
        out
    }

    /// CSV rows for the successfully scored methods.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,rmse,mae,mape,n,excluded\n");
        for entry in &self.methods {
            if let Ok(s) = &entry.outcome {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    entry.method, s.rmse, s.mae, s.mape, self.sample_count, s.mape_excluded
                ));
            }
        }
        out
    }
}
