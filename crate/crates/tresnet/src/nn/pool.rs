use super::tensor::Tensor;
use super::NnError;

/// Global average pooling over time: (B, L, C) -> (B, C).
pub fn avg_pool_time(x: &Tensor) -> Result<Tensor, NnError> {
    let (b, l, c) = x.dims3()?;
    let mut y = Tensor::zeros(&[b, c]);
    let y_data = y.data_mut();
    let data = x.data();
    for bi in 0..b {
        let out = &mut y_data[bi * c..][..c];
        for row in data[bi * l * c..][..l * c].chunks_exact(c) {
            for (acc, &v) in out.iter_mut().zip(row) {
                *acc += v;
            }
        }
        for acc in out.iter_mut() {
            *acc /= l as f64;
        }
    }
    Ok(y)
}

/// Spreads each pooled gradient uniformly over the `input_len` time steps.
pub fn avg_pool_time_backward(grad_out: &Tensor, input_len: usize) -> Result<Tensor, NnError> {
    let (b, c) = grad_out.dims2()?;
    if input_len == 0 {
        return Err(NnError::BadArgument("pool input length must be positive".into()));
    }
    let mut gx = Tensor::zeros(&[b, input_len, c]);
    let gi = gx.data_mut();
    let gy = grad_out.data();
    let scale = 1.0 / input_len as f64;
    for bi in 0..b {
        let src = &gy[bi * c..][..c];
        for row in gi[bi * input_len * c..][..input_len * c].chunks_exact_mut(c) {
            for (slot, &g) in row.iter_mut().zip(src) {
                *slot = g * scale;
            }
        }
    }
    Ok(gx)
}
