use rand::Rng;

use super::activations::{relu, relu_backward};
use super::batchnorm::{BatchNorm1d, BnCache};
use super::conv::Conv1d;
use super::tensor::Tensor;
use super::NnError;

/// Pre-activation residual block.
///
/// Main path: BN -> ReLU -> Conv(k3, s2, p1, C -> 2C) -> BN -> ReLU ->
/// Conv(k3, s1, p1, 2C -> 2C). Shortcut: Conv(k1, s2, p0, C -> 2C).
/// Halves the time length (ceil) and doubles the channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub bn_a: BatchNorm1d,
    pub conv_a: Conv1d,
    pub bn_b: BatchNorm1d,
    pub conv_b: Conv1d,
    pub shortcut: Conv1d,
}

/// Intermediate activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ResidualCache {
    input: Tensor,
    bn_a_out: Tensor,
    bn_a: BnCache,
    relu_a_out: Tensor,
    bn_b_out: Tensor,
    bn_b: BnCache,
    relu_b_out: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualGrads {
    pub input: Tensor,
    pub bn_a_gamma: Tensor,
    pub bn_a_beta: Tensor,
    pub conv_a_weights: Tensor,
    pub bn_b_gamma: Tensor,
    pub bn_b_beta: Tensor,
    pub conv_b_weights: Tensor,
    pub shortcut_weights: Tensor,
}

impl ResidualBlock {
    pub fn new(in_channels: usize) -> Result<Self, NnError> {
        let out = in_channels
            .checked_mul(2)
            .ok_or_else(|| NnError::BadArgument("channel count overflow".into()))?;
        Ok(ResidualBlock {
            bn_a: BatchNorm1d::new(in_channels)?,
            conv_a: Conv1d::new(in_channels, out, 3, 2, 1, false)?,
            bn_b: BatchNorm1d::new(out)?,
            conv_b: Conv1d::new(out, out, 3, 1, 1, false)?,
            shortcut: Conv1d::new(in_channels, out, 1, 2, 0, false)?,
        })
    }

    pub fn init_he<R: Rng>(&mut self, rng: &mut R) {
        self.conv_a.init_he(rng);
        self.conv_b.init_he(rng);
        self.shortcut.init_he(rng);
    }

    pub fn in_channels(&self) -> usize {
        self.conv_a.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.conv_a.out_channels
    }

    /// ceil(input_len / 2), via the stride-2 length formula.
    pub fn output_len(&self, input_len: usize) -> Result<usize, NnError> {
        self.conv_a.output_len(input_len)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, ResidualCache), NnError> {
        let (bn_a_out, bn_a) = self.bn_a.forward_train(x)?;
        let relu_a_out = relu(&bn_a_out);
        let conv_a_out = self.conv_a.forward(&relu_a_out)?;
        let (bn_b_out, bn_b) = self.bn_b.forward_train(&conv_a_out)?;
        let relu_b_out = relu(&bn_b_out);
        let main = self.conv_b.forward(&relu_b_out)?;
        let short = self.shortcut.forward(x)?;
        let y = add(&main, &short)?;
        Ok((
            y,
            ResidualCache {
                input: x.clone(),
                bn_a_out,
                bn_a,
                relu_a_out,
                bn_b_out,
                bn_b,
                relu_b_out,
            },
        ))
    }

    pub fn forward_infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let h = relu(&self.bn_a.forward_infer(x)?);
        let h = self.conv_a.forward(&h)?;
        let h = relu(&self.bn_b.forward_infer(&h)?);
        let main = self.conv_b.forward(&h)?;
        let short = self.shortcut.forward(x)?;
        add(&main, &short)
    }

    pub fn backward(
        &self,
        cache: &ResidualCache,
        grad_out: &Tensor,
    ) -> Result<ResidualGrads, NnError> {
        // Main path, walked backwards.
        let conv_b_grads = self.conv_b.backward(&cache.relu_b_out, grad_out)?;
        let g_bn_b_out = relu_backward(&cache.bn_b_out, &conv_b_grads.input);
        let bn_b_grads = self.bn_b.backward(&cache.bn_b, &g_bn_b_out)?;
        let conv_a_grads = self.conv_a.backward(&cache.relu_a_out, &bn_b_grads.input)?;
        let g_bn_a_out = relu_backward(&cache.bn_a_out, &conv_a_grads.input);
        let bn_a_grads = self.bn_a.backward(&cache.bn_a, &g_bn_a_out)?;

        // Shortcut path, then the two input contributions add.
        let shortcut_grads = self.shortcut.backward(&cache.input, grad_out)?;
        let input = add(&bn_a_grads.input, &shortcut_grads.input)?;

        Ok(ResidualGrads {
            input,
            bn_a_gamma: bn_a_grads.gamma,
            bn_a_beta: bn_a_grads.beta,
            conv_a_weights: conv_a_grads.weights,
            bn_b_gamma: bn_b_grads.gamma,
            bn_b_beta: bn_b_grads.beta,
            conv_b_weights: conv_b_grads.weights,
            shortcut_weights: shortcut_grads.weights,
        })
    }
}

fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    if a.dims() != b.dims() {
        return Err(NnError::Shape(format!(
            "cannot add tensors of shapes {:?} and {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let mut out = a.clone();
    for (o, &v) in out.data_mut().iter_mut().zip(b.data()) {
        *o += v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::activations::relu;
    use super::super::gradcheck::{max_relative_error, numeric_gradient, DEFAULT_STEP};
    use super::super::tensor::dot;
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor<R: Rng>(dims: &[usize], rng: &mut R) -> Tensor {
        let len = dims.iter().product();
        let data = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(dims, data).unwrap()
    }

    #[test]
    fn halves_time_and_doubles_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut block = ResidualBlock::new(16).unwrap();
        block.init_he(&mut rng);
        let x = random_tensor(&[2, 12, 16], &mut rng);
        let (y, _) = block.forward_train(&x).unwrap();
        assert_eq!(y.dims(), &[2, 6, 32]);
        for (l_in, l_out) in [(7usize, 4usize), (2, 1), (24, 12), (3, 2)] {
            assert_eq!(block.output_len(l_in).unwrap(), l_out);
        }
    }

    #[test]
    fn zero_main_path_reduces_to_strided_projection() {
        let mut block = ResidualBlock::new(2).unwrap();
        // Leave conv_b at zero so the main path contributes nothing, and make
        // the shortcut a per-channel broadcast of the strided input.
        let w = block.shortcut.weights.data_mut();
        // shortcut weights are (4, 2, 1): out channel o reads in channel o % 2.
        for o in 0..4 {
            w[o * 2 + (o % 2)] = 1.0;
        }
        let x = Tensor::from_vec(
            &[1, 4, 2],
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
        )
        .unwrap();
        let (y, _) = block.forward_train(&x).unwrap();
        assert_eq!(y.dims(), &[1, 2, 4]);
        // Rows 0 and 2 of the input, each repeated across the doubled channels.
        assert_eq!(y.data(), &[0.1, 0.2, 0.1, 0.2, 0.5, 0.6, 0.5, 0.6]);
    }

    #[test]
    fn forward_matches_composition_of_primitives() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut block = ResidualBlock::new(4).unwrap();
        block.init_he(&mut rng);
        for v in block.bn_a.gamma.data_mut() {
            *v = rng.random_range(0.5..1.5);
        }
        for v in block.bn_b.beta.data_mut() {
            *v = rng.random_range(-0.3..0.3);
        }
        let x = random_tensor(&[2, 8, 4], &mut rng);

        let (y, _) = block.clone().forward_train(&x).unwrap();

        let mut manual = block.clone();
        let (h, _) = manual.bn_a.forward_train(&x).unwrap();
        let h = relu(&h);
        let h = manual.conv_a.forward(&h).unwrap();
        let (h, _) = manual.bn_b.forward_train(&h).unwrap();
        let h = relu(&h);
        let main = manual.conv_b.forward(&h).unwrap();
        let short = manual.shortcut.forward(&x).unwrap();
        let want = add(&main, &short).unwrap();

        assert_eq!(y, want);
    }

    #[test]
    fn inference_mode_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut block = ResidualBlock::new(3).unwrap();
        block.init_he(&mut rng);
        let x = random_tensor(&[1, 6, 3], &mut rng);
        let before = block.clone();
        let y1 = block.forward_infer(&x).unwrap();
        let y2 = block.forward_infer(&x).unwrap();
        assert_eq!(y1, y2);
        assert_eq!(block, before);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for case in 0..20 {
            let mut block = ResidualBlock::new(4).unwrap();
            block.init_he(&mut rng);
            for v in block.bn_a.gamma.data_mut() {
                *v = rng.random_range(0.5..1.5);
            }
            for v in block.bn_a.beta.data_mut() {
                *v = rng.random_range(-0.3..0.3);
            }
            let x = random_tensor(&[2, 8, 4], &mut rng);
            let (y, cache) = block.clone().forward_train(&x).unwrap();
            let seed = random_tensor(y.dims(), &mut rng);
            let grads = block.backward(&cache, &seed).unwrap();

            let loss = |block: &ResidualBlock, x: &Tensor| {
                let (y, _) = block.clone().forward_train(x).unwrap();
                dot(y.data(), seed.data())
            };

            let numeric_x = numeric_gradient(
                &mut |flat| loss(&block, &Tensor::from_vec(&[2, 8, 4], flat.to_vec()).unwrap()),
                x.data(),
                DEFAULT_STEP,
            );
            let err = max_relative_error(&numeric_x, grads.input.data());
            assert!(err < 1e-4, "case {case}: input gradient error {err}");

            // One parameter tensor from each layer keeps the case fast while
            // still exercising every backward path.
            let checks: [(&Tensor, &Tensor, Box<dyn Fn(&mut ResidualBlock) -> &mut Tensor>); 5] = [
                (&block.conv_a.weights, &grads.conv_a_weights, Box::new(|b| &mut b.conv_a.weights)),
                (&block.conv_b.weights, &grads.conv_b_weights, Box::new(|b| &mut b.conv_b.weights)),
                (&block.shortcut.weights, &grads.shortcut_weights, Box::new(|b| &mut b.shortcut.weights)),
                (&block.bn_a.gamma, &grads.bn_a_gamma, Box::new(|b| &mut b.bn_a.gamma)),
                (&block.bn_b.beta, &grads.bn_b_beta, Box::new(|b| &mut b.bn_b.beta)),
            ];
            for (param, analytic, access) in checks {
                let numeric = numeric_gradient(
                    &mut |flat| {
                        let mut pert = block.clone();
                        access(&mut pert).data_mut().copy_from_slice(flat);
                        loss(&pert, &x)
                    },
                    param.data(),
                    DEFAULT_STEP,
                );
                let err = max_relative_error(&numeric, analytic.data());
                assert!(err < 1e-4, "case {case}: parameter gradient error {err}");
            }
        }
    }
}
