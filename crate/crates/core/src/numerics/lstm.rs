use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Result};

use super::{sigmoid_scalar, Parameters, SeededRng, Tensor};

/// LSTM cell weights. Gate rows are stacked as `[input, forget, output,
/// candidate]`, each block `hidden` rows tall.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_x: Tensor,
    pub w_h: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Forward activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmParams {
    pub fn new(inputs: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        let s = 1.0 / ((inputs + hidden) as f64).sqrt();
        Self {
            w_x: Tensor::from_fn2(4 * hidden, inputs, |_, _| rng.uniform(-s, s)),
            w_h: Tensor::from_fn2(4 * hidden, hidden, |_, _| rng.uniform(-s, s)),
            bias: Tensor::new(vec![4 * hidden], rng.uniform_vec(4 * hidden, s)).expect("finite init"),
        }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            w_x: Tensor::zeros(&[4 * hidden, inputs]),
            w_h: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w_x.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w_h.cols()
    }

    pub fn step(&self, x: &[f64], state: &LstmState) -> Result<(LstmState, LstmCache)> {
        let hd = self.hidden();
        if x.len() != self.inputs() {
            return Err(shape_mismatch(&[self.inputs()], &[x.len()]));
        }
        if state.h.len() != hd || state.c.len() != hd {
            return Err(shape_mismatch(&[hd, hd], &[state.h.len(), state.c.len()]));
        }
        let mut gates = vec![0.0; 4 * hd];
        for (r, g) in gates.iter_mut().enumerate() {
            let mut acc = self.bias.data()[r];
            acc += self.w_x.row(r).iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            acc += self.w_h.row(r).iter().zip(&state.h).map(|(w, v)| w * v).sum::<f64>();
            *g = if r < 3 * hd { sigmoid_scalar(acc) } else { acc.tanh() };
        }
        let mut c = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        let mut tanh_c = vec![0.0; hd];
        for k in 0..hd {
            let (i, f, o, g) = (gates[k], gates[hd + k], gates[2 * hd + k], gates[3 * hd + k]);
            c[k] = f * state.c[k] + i * g;
            tanh_c[k] = c[k].tanh();
            h[k] = o * tanh_c[k];
        }
        let cache = LstmCache {
            x: x.to_vec(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            gates,
            tanh_c,
        };
        Ok((LstmState { h, c }, cache))
    }

    /// Backward through one step. `dh` and `dc` are the gradients arriving at
    /// this step's outputs; returns `(dx, dh_prev, dc_prev)`.
    pub fn step_backward(
        &self,
        cache: &LstmCache,
        dh: &[f64],
        dc: &[f64],
        grads: &mut LstmParams,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hd = self.hidden();
        let g = &cache.gates;
        let mut dpre = vec![0.0; 4 * hd];
        let mut dc_prev = vec![0.0; hd];
        for k in 0..hd {
            let (i, f, o, cand) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
            let tc = cache.tanh_c[k];
            let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
            dpre[2 * hd + k] = dh[k] * tc * o * (1.0 - o);
            dpre[k] = dct * cand * i * (1.0 - i);
            dpre[hd + k] = dct * cache.c_prev[k] * f * (1.0 - f);
            dpre[3 * hd + k] = dct * i * (1.0 - cand * cand);
            dc_prev[k] = dct * f;
        }
        let mut dx = vec![0.0; self.inputs()];
        let mut dh_prev = vec![0.0; hd];
        for (r, &d) in dpre.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grads.bias.data_mut()[r] += d;
            for ((gw, &xv), (dxv, &w)) in grads
                .w_x
                .row_mut(r)
                .iter_mut()
                .zip(&cache.x)
                .zip(dx.iter_mut().zip(self.w_x.row(r)))
            {
                *gw += d * xv;
                *dxv += d * w;
            }
            for ((gw, &hv), (dhv, &w)) in grads
                .w_h
                .row_mut(r)
                .iter_mut()
                .zip(&cache.h_prev)
                .zip(dh_prev.iter_mut().zip(self.w_h.row(r)))
            {
                *gw += d * hv;
                *dhv += d * w;
            }
        }
        (dx, dh_prev, dc_prev)
    }

    /// Runs a sequence from the zero state, returning every hidden state and
    /// the caches needed by [`LstmParams::backward_sequence`].
    pub fn forward_sequence(&self, xs: &[Vec<f64>]) -> Result<(Vec<LstmState>, Vec<LstmCache>)> {
        let mut state = LstmState::zeros(self.hidden());
        let mut states = Vec::with_capacity(xs.len());
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            let (next, cache) = self.step(x, &state)?;
            states.push(next.clone());
            caches.push(cache);
            state = next;
        }
        Ok((states, caches))
    }

    /// Backpropagation through time. `dhs[t]` is the external gradient on the
    /// hidden output of step `t`. Returns the input gradients per step.
    pub fn backward_sequence(&self, caches: &[LstmCache], dhs: &[Vec<f64>], grads: &mut LstmParams) -> Vec<Vec<f64>> {
        let hd = self.hidden();
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let mut dxs = vec![Vec::new(); caches.len()];
        for t in (0..caches.len()).rev() {
            let dh: Vec<f64> = dhs[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
            let (dx, dh_prev, dc_prev) = self.step_backward(&caches[t], &dh, &dc_next, grads);
            dxs[t] = dx;
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        dxs
    }
}

impl Parameters for LstmParams {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w_x, &self.w_h, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w_x, &mut self.w_h, &mut self.bias]
    }
}

/// One LSTM step: `(h', c')` from input `x` and previous `(h, c)`.
pub fn lstm_step(x: &[f64], h: &[f64], c: &[f64], p: &LstmParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let (next, _) = p.step(
        x,
        &LstmState {
            h: h.to_vec(),
            c: c.to_vec(),
        },
    )?;
    Ok((next.h, next.c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_params, relative_error};

    #[test]
    fn zero_weights_give_zero_state() {
        let p = LstmParams::zeros(3, 4);
        let (h, c) = lstm_step(&[1.0, -2.0, 0.5], &[0.0; 4], &[0.0; 4], &p).unwrap();
        assert!(h.iter().chain(&c).all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = LstmParams::zeros(3, 4);
        assert!(lstm_step(&[1.0], &[0.0; 4], &[0.0; 4], &p).is_err());
        assert!(lstm_step(&[1.0; 3], &[0.0; 2], &[0.0; 4], &p).is_err());
    }

    #[test]
    fn constant_input_converges() {
        for seed in 0..10 {
            let mut rng = SeededRng::new(seed);
            let p = LstmParams::new(5, 8, &mut rng);
            let x = rng.uniform_vec(5, 1.0);
            let mut state = LstmState::zeros(8);
            let mut diffs = Vec::new();
            for _ in 0..100 {
                let (next, _) = p.step(&x, &state).unwrap();
                let d: f64 = next
                    .h
                    .iter()
                    .zip(&state.h)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                diffs.push(d);
                assert!(next.h.iter().all(|v| v.abs() < 1.0));
                state = next;
            }
            // Monotone tail, down to round-off.
            for w in diffs[50..].windows(2) {
                assert!(w[1] <= w[0] || w[1] < 1e-14, "seed {seed}: {w:?}");
            }
            assert!(diffs[99] < 1e-6);
        }
    }

    #[test]
    fn bptt_matches_finite_differences() {
        for seed in 0..20 {
            let mut rng = SeededRng::new(100 + seed);
            let p = LstmParams::new(3, 4, &mut rng);
            let xs: Vec<Vec<f64>> = (0..4).map(|_| rng.uniform_vec(3, 1.0)).collect();
            let weights: Vec<Vec<f64>> = (0..4).map(|_| rng.uniform_vec(4, 1.0)).collect();
            let loss = |p: &LstmParams| -> f64 {
                let (states, _) = p.forward_sequence(&xs).unwrap();
                states
                    .iter()
                    .zip(&weights)
                    .map(|(s, w)| s.h.iter().zip(w).map(|(h, w)| h * w).sum::<f64>())
                    .sum()
            };
            let (_, caches) = p.forward_sequence(&xs).unwrap();
            let mut grads = p.zeros_like();
            p.backward_sequence(&caches, &weights, &mut grads);
            let numeric = finite_diff_params(&p, loss, 1e-5).unwrap();
            let err = relative_error(&grads, &numeric);
            assert!(err <= 1e-4, "seed {seed}: relative error {err}");
        }
    }
}
