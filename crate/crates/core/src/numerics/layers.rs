use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Result};

use super::{Parameters, SeededRng, Tensor};

/// Affine layer `y = W x + b` with `W` of shape `out x in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    /// Uniform `(-s, s)` initialization with `s = 1 / sqrt(fan_in)`.
    pub fn new(inputs: usize, outputs: usize, rng: &mut SeededRng) -> Self {
        let s = 1.0 / (inputs as f64).sqrt();
        let weight = Tensor::from_fn2(outputs, inputs, |_, _| rng.uniform(-s, s));
        let bias = Tensor::new(vec![outputs], rng.uniform_vec(outputs, s)).expect("finite init");
        Self { weight, bias }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(shape_mismatch(&[self.inputs()], &[x.len()]));
        }
        Ok((0..self.outputs())
            .map(|o| {
                let row = self.weight.row(o);
                self.bias.data()[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect())
    }

    /// Accumulates `dL/dW`, `dL/db` into `grads` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grads: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs()];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads.bias.data_mut()[o] += g;
            let row = self.weight.row(o);
            for ((gw, &xi), (dxi, &w)) in grads.weight.row_mut(o).iter_mut().zip(x).zip(dx.iter_mut().zip(row)) {
                *gw += g * xi;
                *dxi += g * w;
            }
        }
        dx
    }
}

impl Parameters for Dense {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// `dL/dx` for `y = tanh(x)` given the forward output `y`.
pub fn tanh_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(y, g)| g * (1.0 - y * y)).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
