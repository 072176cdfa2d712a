//! Dense numeric kernels shared by every stage.
//!
//! Everything here is 64-bit and hand-differentiated: each trainable layer
//! exposes a forward pass, a backward pass, and implements [`Parameters`] so
//! the same container type doubles as its own gradient accumulator.

mod grad;
mod io;
mod layers;
mod lstm;
mod ops;
mod rng;
mod tensor;

pub use grad::{finite_diff_grad, finite_diff_params, relative_error};
pub use io::{load_tensor, read_tensor, save_tensor, write_tensor, PDNT_MAGIC};
pub use layers::{softmax, tanh_backward, Dense};
pub use lstm::{lstm_step, LstmCache, LstmParams, LstmState};
pub use ops::{conv2d, kmax_indices, kmax_pool, sigmoid, sigmoid_scalar, Padding};
pub use rng::SeededRng;
pub use tensor::Tensor;

/// A bundle of trainable tensors.
///
/// Gradients are stored in a value of the same type, so an optimizer step is
/// a zip over `tensors_mut()` and the gradient's `tensors()`.
pub trait Parameters: Clone {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    fn axpy(&mut self, scale: f64, other: &Self) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d += scale * s;
            }
        }
    }

    fn sq_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.data().iter()).map(|v| v * v).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

/// Plain SGD with global-norm clipping. `clip <= 0` disables clipping.
pub fn sgd_step<P: Parameters>(params: &mut P, grads: &P, lr: f64, clip: f64) {
    let norm = grads.sq_norm().sqrt();
    let scale = if clip > 0.0 && norm > clip { clip / norm } else { 1.0 };
    params.axpy(-lr * scale, grads);
}
