use super::NnError;

/// Row-major dense tensor of f64. Activations use (batch, time, channels);
/// parameters use layer-specific shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(
            !dims.is_empty() && dims.iter().all(|&d| d >= 1),
            "tensor dims must be non-empty and positive, got {dims:?}"
        );
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self, NnError> {
        let expected: usize = dims.iter().product();
        if dims.is_empty() || dims.iter().any(|&d| d == 0) || data.len() != expected {
            return Err(NnError::Shape(format!(
                "cannot shape {} values as {dims:?}",
                data.len()
            )));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The three activation dimensions (batch, time, channels).
    pub fn dims3(&self) -> Result<(usize, usize, usize), NnError> {
        match self.dims[..] {
            [b, l, c] => Ok((b, l, c)),
            _ => Err(NnError::Shape(format!(
                "expected a rank-3 activation tensor, got {:?}",
                self.dims
            ))),
        }
    }

    pub fn dims2(&self) -> Result<(usize, usize), NnError> {
        match self.dims[..] {
            [a, b] => Ok((a, b)),
            _ => Err(NnError::Shape(format!(
                "expected a rank-2 tensor, got {:?}",
                self.dims
            ))),
        }
    }
}

/// Fixed-order dot product with four accumulators. The summation order is
/// part of the determinism contract, so do not replace with a reduction
/// whose order depends on chunking parameters.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let a = &a[..n];
    let b = &b[..n];
    let quads = n / 4 * 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < quads {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
        i += 4;
    }
    let mut tail = 0.0;
    for j in quads..n {
        tail += a[j] * b[j];
    }
    (s0 + s1) + (s2 + s3) + tail
}

/// y += alpha * x, elementwise over equal-length slices.
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
