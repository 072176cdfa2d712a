use crate::error::{Error, Result};

use super::{Parameters, Tensor};

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_grad(f: impl Fn(&Tensor) -> f64, x: &Tensor, eps: f64) -> Result<Tensor> {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite("finite_diff_grad"));
        }
        grad.data_mut()[i] = (up - down) / (2.0 * eps);
    }
    Ok(grad)
}

/// Central-difference gradient of `f` with respect to every parameter.
pub fn finite_diff_params<P: Parameters>(params: &P, f: impl Fn(&P) -> f64, eps: f64) -> Result<P> {
    let mut probe = params.clone();
    let mut grads = params.zeros_like();
    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    for (ti, &len) in shapes.iter().enumerate() {
        for i in 0..len {
            let orig = probe.tensors()[ti].data()[i];
            probe.tensors_mut()[ti].data_mut()[i] = orig + eps;
            let up = f(&probe);
            probe.tensors_mut()[ti].data_mut()[i] = orig - eps;
            let down = f(&probe);
            probe.tensors_mut()[ti].data_mut()[i] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFinite("finite_diff_params"));
            }
            grads.tensors_mut()[ti].data_mut()[i] = (up - down) / (2.0 * eps);
        }
    }
    Ok(grads)
}

/// `||a - b|| / max(||a||, ||b||)` over all parameters; zero when both
/// gradients vanish.
pub fn relative_error<P: Parameters>(analytic: &P, numeric: &P) -> f64 {
    let mut diff = 0.0;
    for (a, b) in analytic.tensors().into_iter().zip(numeric.tensors()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            diff += (x - y) * (x - y);
        }
    }
    let scale = analytic.sq_norm().sqrt().max(numeric.sq_norm().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}
