use super::tensor::Tensor;

/// Elementwise max(0, x).
pub fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    y
}

/// Multiplies the incoming gradient by relu'(x); the derivative at exactly
/// zero is taken as zero.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    debug_assert_eq!(x.dims(), grad_out.dims());
    let mut gx = grad_out.clone();
    for (g, &xv) in gx.data_mut().iter_mut().zip(x.data()) {
        if xv <= 0.0 {
            *g = 0.0;
        }
    }
    gx
}

/// Elementwise logistic function 1 / (1 + exp(-x)).
pub fn sigmoid(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for v in y.data_mut() {
        *v = sigmoid_scalar(*v);
    }
    y
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Backward through sigmoid given its forward output y: grad * y * (1 - y).
pub fn sigmoid_backward(y: &Tensor, grad_out: &Tensor) -> Tensor {
    debug_assert_eq!(y.dims(), grad_out.dims());
    let mut gx = grad_out.clone();
    for (g, &yv) in gx.data_mut().iter_mut().zip(y.data()) {
        *g *= yv * (1.0 - yv);
    }
    gx
}
