use std::cmp::Ordering;
use std::ops::Range;

use super::AnalysisError;
use crate::data::{Channel, Deployment};

/// Sample Pearson correlation coefficient, clamped to [-1, 1] against
/// floating-point drift.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(AnalysisError::TooShort {
            len: x.len(),
            needed: 2,
        });
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(AnalysisError::UndefinedCorrelation);
    }
    Ok((cov / (var_x * var_y).sqrt()).clamp(-1.0, 1.0))
}

/// Pairwise correlations of the max-utilization channels over a fixed range.
/// Entries involving constant series are undefined and stored as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    n: usize,
    entries: Vec<Option<f64>>,
}

impl CorrelationMatrix {
    pub fn compute(deployment: &Deployment, range: Range<usize>) -> Result<Self, AnalysisError> {
        check_range(&range, deployment.len())?;
        let n = deployment.vm_count();
        let series: Vec<Vec<f64>> = deployment
            .vms()
            .iter()
            .map(|vm| {
                vm.values()[range.clone()]
                    .iter()
                    .map(|r| r.channel(Channel::Max))
                    .collect()
            })
            .collect();
        let mut entries = vec![None; n * n];
        for i in 0..n {
            for j in i..n {
                let r = match pearson(&series[i], &series[j]) {
                    Ok(r) => Some(r),
                    Err(AnalysisError::UndefinedCorrelation) => None,
                    Err(e) => return Err(e),
                };
                entries[i * n + j] = r;
                entries[j * n + i] = r;
            }
        }
        Ok(CorrelationMatrix { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.entries[i * self.n + j]
    }

    /// Defined off-diagonal correlations from the upper triangle, in row
    /// order; the usual input to the correlation-density KDE.
    pub fn upper_triangle_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if let Some(r) = self.get(i, j) {
                    out.push(r);
                }
            }
        }
        out
    }
}

/// Indices of the `k` VMs whose max channels correlate most strongly with the
/// target's over `train_range`, in descending correlation order. Undefined
/// correlations (constant series) rank below all defined ones; ties break by
/// ascending VM index.
pub fn top_k_relevant(
    deployment: &Deployment,
    target_index: usize,
    k: usize,
    train_range: Range<usize>,
) -> Result<Vec<usize>, AnalysisError> {
    let n = deployment.vm_count();
    if target_index >= n {
        return Err(AnalysisError::VmIndexOutOfRange {
            index: target_index,
            count: n,
        });
    }
    if k > n - 1 {
        return Err(AnalysisError::KTooLarge {
            k,
            available: n - 1,
        });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    check_range(&train_range, deployment.len())?;

    let channel = |idx: usize| -> Vec<f64> {
        deployment.vm(idx).values()[train_range.clone()]
            .iter()
            .map(|r| r.channel(Channel::Max))
            .collect()
    };
    let target = channel(target_index);

    let mut ranked: Vec<(usize, Option<f64>)> = Vec::with_capacity(n - 1);
    for candidate in 0..n {
        if candidate == target_index {
            continue;
        }
        let r = match pearson(&target, &channel(candidate)) {
            Ok(r) => Some(r),
            Err(AnalysisError::UndefinedCorrelation) => None,
            Err(e) => return Err(e),
        };
        ranked.push((candidate, r));
    }
    ranked.sort_by(|a, b| match (a.1, b.1) {
        (Some(ra), Some(rb)) => rb
            .partial_cmp(&ra)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.0.cmp(&b.0),
    });
    Ok(ranked.into_iter().take(k).map(|(idx, _)| idx).collect())
}

fn check_range(range: &Range<usize>, len: usize) -> Result<(), AnalysisError> {
    if range.start >= range.end || range.end > len {
        return Err(AnalysisError::RangeOutOfBounds {
            start: range.start,
            end: range.end,
            len,
        });
    }
    Ok(())
}
