use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{axpy, dot, Tensor};
use super::NnError;

/// 1-D convolution in the cross-correlation convention (no kernel flip),
/// zero-padded, over (batch, time, channels) activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    /// (out_channels, in_channels, kernel_size).
    pub weights: Tensor,
    /// (out_channels); layers feeding a BatchNorm omit it.
    pub bias: Option<Tensor>,
}

/// Gradients of one backward call.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Option<Tensor>,
}

impl Conv1d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
        with_bias: bool,
    ) -> Result<Self, NnError> {
        if in_channels == 0 || out_channels == 0 || kernel_size == 0 || stride == 0 {
            return Err(NnError::BadArgument(format!(
                "conv dimensions must be positive: in={in_channels}, out={out_channels}, kernel={kernel_size}, stride={stride}"
            )));
        }
        Ok(Conv1d {
            in_channels,
            out_channels,
            kernel_size,
            stride,
            padding,
            weights: Tensor::zeros(&[out_channels, in_channels, kernel_size]),
            bias: with_bias.then(|| Tensor::zeros(&[out_channels])),
        })
    }

    /// He-normal initialization: std = sqrt(2 / fan_in); biases stay zero.
    pub fn init_he<R: Rng>(&mut self, rng: &mut R) {
        let fan_in = (self.in_channels * self.kernel_size) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("std is positive");
        for w in self.weights.data_mut() {
            *w = normal.sample(rng);
        }
    }

    pub fn output_len(&self, input_len: usize) -> Result<usize, NnError> {
        let padded = input_len + 2 * self.padding;
        if padded < self.kernel_size {
            return Err(NnError::Shape(format!(
                "input length {input_len} with padding {} is shorter than kernel {}",
                self.padding, self.kernel_size
            )));
        }
        Ok((padded - self.kernel_size) / self.stride + 1)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (b, l, c) = x.dims3()?;
        if c != self.in_channels {
            return Err(NnError::Shape(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let l_out = self.output_len(l)?;
        let (oc, ic, k) = (self.out_channels, self.in_channels, self.kernel_size);
        let patch_len = k * ic;

        let padded = self.pad_input(x, b, l, c);
        let wt = self.kernel_major_weights();
        let l_pad = l + 2 * self.padding;

        let mut y = Tensor::zeros(&[b, l_out, oc]);
        let y_data = y.data_mut();
        for bi in 0..b {
            let in_base = bi * l_pad * ic;
            for lo in 0..l_out {
                let patch = &padded[in_base + lo * self.stride * ic..][..patch_len];
                let out = &mut y_data[(bi * l_out + lo) * oc..][..oc];
                for (o, slot) in out.iter_mut().enumerate() {
                    *slot = dot(&wt[o * patch_len..][..patch_len], patch);
                }
                if let Some(bias) = &self.bias {
                    for (slot, &bv) in out.iter_mut().zip(bias.data()) {
                        *slot += bv;
                    }
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<ConvGrads, NnError> {
        let (b, l, c) = x.dims3()?;
        let l_out = self.output_len(l)?;
        let (gb_, gl, gc) = grad_out.dims3()?;
        if c != self.in_channels || gb_ != b || gl != l_out || gc != self.out_channels {
            return Err(NnError::Shape(format!(
                "conv backward shapes disagree: input {:?}, grad {:?}",
                x.dims(),
                grad_out.dims()
            )));
        }
        let (oc, ic, k) = (self.out_channels, self.in_channels, self.kernel_size);
        let patch_len = k * ic;
        let l_pad = l + 2 * self.padding;

        let padded = self.pad_input(x, b, l, c);
        let wt = self.kernel_major_weights();
        let gy = grad_out.data();

        let mut grad_padded = vec![0.0; b * l_pad * ic];
        let mut gwt = vec![0.0; oc * patch_len];
        let mut gbias = self.bias.as_ref().map(|_| vec![0.0; oc]);

        for bi in 0..b {
            let in_base = bi * l_pad * ic;
            for lo in 0..l_out {
                let start = in_base + lo * self.stride * ic;
                let gys = &gy[(bi * l_out + lo) * oc..][..oc];
                for (o, &g) in gys.iter().enumerate() {
                    axpy(
                        g,
                        &wt[o * patch_len..][..patch_len],
                        &mut grad_padded[start..start + patch_len],
                    );
                    axpy(
                        g,
                        &padded[start..start + patch_len],
                        &mut gwt[o * patch_len..][..patch_len],
                    );
                }
                if let Some(gb) = &mut gbias {
                    for (slot, &g) in gb.iter_mut().zip(gys) {
                        *slot += g;
                    }
                }
            }
        }

        // Strip the padding margin back off the input gradient.
        let mut grad_input = Tensor::zeros(&[b, l, c]);
        let gi = grad_input.data_mut();
        for bi in 0..b {
            let src = bi * l_pad * ic + self.padding * ic;
            let dst = bi * l * ic;
            gi[dst..dst + l * ic].copy_from_slice(&grad_padded[src..src + l * ic]);
        }

        // (oc, k, ic) scratch back to the (oc, ic, k) parameter layout.
        let mut grad_weights = Tensor::zeros(&[oc, ic, k]);
        let gw = grad_weights.data_mut();
        for o in 0..oc {
            for kk in 0..k {
                for i in 0..ic {
                    gw[(o * ic + i) * k + kk] = gwt[(o * k + kk) * ic + i];
                }
            }
        }

        Ok(ConvGrads {
            input: grad_input,
            weights: grad_weights,
            bias: gbias.map(|g| Tensor::from_vec(&[oc], g).expect("bias shape")),
        })
    }

    /// Copies the input into a zero-padded (B, L + 2P, C) buffer so every
    /// kernel window is one contiguous slice.
    fn pad_input(&self, x: &Tensor, b: usize, l: usize, c: usize) -> Vec<f64> {
        let l_pad = l + 2 * self.padding;
        let mut padded = vec![0.0; b * l_pad * c];
        let data = x.data();
        for bi in 0..b {
            let dst = bi * l_pad * c + self.padding * c;
            let src = bi * l * c;
            padded[dst..dst + l * c].copy_from_slice(&data[src..src + l * c]);
        }
        padded
    }

    /// Weights transposed to (oc, k, ic) so a kernel row matches the
    /// (time, channel) order of a padded input patch.
    fn kernel_major_weights(&self) -> Vec<f64> {
        let (oc, ic, k) = (self.out_channels, self.in_channels, self.kernel_size);
        let w = self.weights.data();
        let mut wt = vec![0.0; oc * k * ic];
        for o in 0..oc {
            for i in 0..ic {
                for kk in 0..k {
                    wt[(o * k + kk) * ic + i] = w[(o * ic + i) * k + kk];
                }
            }
        }
        wt
    }
}
