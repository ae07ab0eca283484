use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{axpy, dot, Tensor};
use super::NnError;

/// Fully connected layer: y = x W^T + b over (batch, features).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    /// (out_features, in_features).
    pub weights: Tensor,
    /// (out_features).
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize) -> Result<Self, NnError> {
        if in_features == 0 || out_features == 0 {
            return Err(NnError::BadArgument(format!(
                "dense dimensions must be positive: in={in_features}, out={out_features}"
            )));
        }
        Ok(Dense {
            in_features,
            out_features,
            weights: Tensor::zeros(&[out_features, in_features]),
            bias: Tensor::zeros(&[out_features]),
        })
    }

    /// He-normal initialization: std = sqrt(2 / fan_in); bias stays zero.
    pub fn init_he<R: Rng>(&mut self, rng: &mut R) {
        let normal = Normal::new(0.0, (2.0 / self.in_features as f64).sqrt()).expect("positive std");
        for w in self.weights.data_mut() {
            *w = normal.sample(rng);
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (b, f) = x.dims2()?;
        if f != self.in_features {
            return Err(NnError::Shape(format!(
                "dense expects {} input features, got {f}",
                self.in_features
            )));
        }
        let o = self.out_features;
        let mut y = Tensor::zeros(&[b, o]);
        let y_data = y.data_mut();
        let w = self.weights.data();
        let bias = self.bias.data();
        for bi in 0..b {
            let row = &x.data()[bi * f..][..f];
            let out = &mut y_data[bi * o..][..o];
            for (oi, slot) in out.iter_mut().enumerate() {
                *slot = dot(&w[oi * f..][..f], row) + bias[oi];
            }
        }
        Ok(y)
    }

    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<DenseGrads, NnError> {
        let (b, f) = x.dims2()?;
        let (gb, go) = grad_out.dims2()?;
        if f != self.in_features || gb != b || go != self.out_features {
            return Err(NnError::Shape(format!(
                "dense backward shapes disagree: input {:?}, grad {:?}",
                x.dims(),
                grad_out.dims()
            )));
        }
        let o = self.out_features;
        let w = self.weights.data();
        let gy = grad_out.data();

        let mut grad_input = Tensor::zeros(&[b, f]);
        let mut grad_weights = Tensor::zeros(&[o, f]);
        let mut grad_bias = Tensor::zeros(&[o]);
        let gi = grad_input.data_mut();
        let gw = grad_weights.data_mut();
        let gbias = grad_bias.data_mut();

        for bi in 0..b {
            let row = &x.data()[bi * f..][..f];
            let gys = &gy[bi * o..][..o];
            for (oi, &g) in gys.iter().enumerate() {
                axpy(g, &w[oi * f..][..f], &mut gi[bi * f..bi * f + f]);
                axpy(g, row, &mut gw[oi * f..oi * f + f]);
                gbias[oi] += g;
            }
        }

        Ok(DenseGrads {
            input: grad_input,
            weights: grad_weights,
            bias: grad_bias,
        })
    }
}
