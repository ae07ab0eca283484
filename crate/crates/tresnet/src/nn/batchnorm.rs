use super::tensor::Tensor;
use super::NnError;

/// Batch normalization over (batch, time) per channel.
///
/// Training mode normalizes with the biased batch variance and updates the
/// running statistics with the same batch values:
/// running = (1 - momentum) * running + momentum * batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d {
    pub channels: usize,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Batch statistics retained for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    dims: (usize, usize, usize),
    x_hat: Vec<f64>,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

pub const BN_DEFAULT_MOMENTUM: f64 = 0.1;
pub const BN_DEFAULT_EPSILON: f64 = 1e-5;

impl BatchNorm1d {
    pub fn new(channels: usize) -> Result<Self, NnError> {
        if channels == 0 {
            return Err(NnError::BadArgument("channel count must be positive".into()));
        }
        let mut gamma = Tensor::zeros(&[channels]);
        gamma.data_mut().fill(1.0);
        let mut running_var = Tensor::zeros(&[channels]);
        running_var.data_mut().fill(1.0);
        Ok(BatchNorm1d {
            channels,
            gamma,
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var,
            momentum: BN_DEFAULT_MOMENTUM,
            epsilon: BN_DEFAULT_EPSILON,
        })
    }

    fn check_channels(&self, x: &Tensor) -> Result<(usize, usize, usize), NnError> {
        let (b, l, c) = x.dims3()?;
        if c != self.channels {
            return Err(NnError::Shape(format!(
                "batch norm expects {} channels, got {c}",
                self.channels
            )));
        }
        Ok((b, l, c))
    }

    /// Normalizes with batch statistics and updates the running estimates.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, BnCache), NnError> {
        let (b, l, c) = self.check_channels(x)?;
        let m = b * l;
        if m < 2 {
            return Err(NnError::BatchTooSmall(m));
        }
        let data = x.data();
        let m_f = m as f64;

        let mut mean = vec![0.0; c];
        for row in data.chunks_exact(c) {
            for (acc, &v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
        for v in &mut mean {
            *v /= m_f;
        }

        let mut var = vec![0.0; c];
        for row in data.chunks_exact(c) {
            for ((acc, &v), &mu) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - mu;
                *acc += d * d;
            }
        }
        for v in &mut var {
            *v /= m_f;
        }

        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + self.epsilon).sqrt()).collect();

        let mut x_hat = vec![0.0; data.len()];
        let mut y = Tensor::zeros(&[b, l, c]);
        let y_data = y.data_mut();
        let gamma = self.gamma.data();
        let beta = self.beta.data();
        for (row_idx, row) in data.chunks_exact(c).enumerate() {
            let base = row_idx * c;
            for ch in 0..c {
                let xh = (row[ch] - mean[ch]) * inv_std[ch];
                x_hat[base + ch] = xh;
                y_data[base + ch] = gamma[ch] * xh + beta[ch];
            }
        }

        let rm = self.running_mean.data_mut();
        for (r, &batch) in rm.iter_mut().zip(&mean) {
            *r = (1.0 - self.momentum) * *r + self.momentum * batch;
        }
        let rv = self.running_var.data_mut();
        for (r, &batch) in rv.iter_mut().zip(&var) {
            *r = (1.0 - self.momentum) * *r + self.momentum * batch;
        }

        Ok((
            y,
            BnCache {
                dims: (b, l, c),
                x_hat,
                inv_std,
            },
        ))
    }

    /// Normalizes with the running statistics; `self` stays untouched.
    pub fn forward_infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (b, l, c) = self.check_channels(x)?;
        let gamma = self.gamma.data();
        let beta = self.beta.data();
        let rm = self.running_mean.data();
        let rv = self.running_var.data();
        let scale: Vec<f64> = (0..c)
            .map(|ch| gamma[ch] / (rv[ch] + self.epsilon).sqrt())
            .collect();
        let shift: Vec<f64> = (0..c).map(|ch| beta[ch] - rm[ch] * scale[ch]).collect();

        let mut y = Tensor::zeros(&[b, l, c]);
        let y_data = y.data_mut();
        for (row_idx, row) in x.data().chunks_exact(c).enumerate() {
            let base = row_idx * c;
            for ch in 0..c {
                y_data[base + ch] = scale[ch] * row[ch] + shift[ch];
            }
        }
        Ok(y)
    }

    /// Exact gradient of the training-mode forward with respect to the
    /// cached batch statistics.
    pub fn backward(&self, cache: &BnCache, grad_out: &Tensor) -> Result<BnGrads, NnError> {
        let (b, l, c) = self.check_channels(grad_out)?;
        if (b, l, c) != cache.dims {
            return Err(NnError::Shape(format!(
                "grad shape {:?} does not match cached batch {:?}",
                grad_out.dims(),
                cache.dims
            )));
        }
        let m = (b * l) as f64;
        let gy = grad_out.data();

        let mut sum_gy = vec![0.0; c];
        let mut sum_gy_xhat = vec![0.0; c];
        for (row_idx, row) in gy.chunks_exact(c).enumerate() {
            let base = row_idx * c;
            for ch in 0..c {
                sum_gy[ch] += row[ch];
                sum_gy_xhat[ch] += row[ch] * cache.x_hat[base + ch];
            }
        }

        let gamma = self.gamma.data();
        let mut grad_input = Tensor::zeros(&[b, l, c]);
        let gi = grad_input.data_mut();
        for (row_idx, row) in gy.chunks_exact(c).enumerate() {
            let base = row_idx * c;
            for ch in 0..c {
                let xh = cache.x_hat[base + ch];
                // d/dx of gamma * (x - mu) / sqrt(var + eps) through mu and var.
                gi[base + ch] = gamma[ch] * cache.inv_std[ch] / m
                    * (m * row[ch] - sum_gy[ch] - xh * sum_gy_xhat[ch]);
            }
        }

        Ok(BnGrads {
            input: grad_input,
            gamma: Tensor::from_vec(&[c], sum_gy_xhat).expect("gamma shape"),
            beta: Tensor::from_vec(&[c], sum_gy).expect("beta shape"),
        })
    }
}
