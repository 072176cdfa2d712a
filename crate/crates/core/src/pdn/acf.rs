use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::numerics::{kmax_indices, sigmoid_scalar, tanh_backward, LstmCache, Tensor};

use super::{MaskedImage, PdnParams};

/// A generated filter for step `step` of plan `plan`.
#[derive(Clone, Debug, PartialEq)]
pub struct Acf {
    filter: Tensor,
    plan: usize,
    step: usize,
}

impl Acf {
    pub fn new(filter: Tensor, plan: usize, step: usize) -> Result<Self> {
        if filter.rank() != 2 || filter.rows().is_multiple_of(2) || filter.cols().is_multiple_of(2) {
            return Err(invalid(format!(
                "filter shape {:?} must be 2-D with odd sides",
                filter.shape()
            )));
        }
        if !filter.is_finite() {
            return Err(Error::NonFinite("Acf::new"));
        }
        Ok(Self { filter, plan, step })
    }

    /// A filter with a single unit tap at its center.
    pub fn delta(side: usize, plan: usize, step: usize) -> Result<Self> {
        let c = side / 2;
        Self::new(
            Tensor::from_fn2(side, side, |i, j| if i == c && j == c { 1.0 } else { 0.0 }),
            plan,
            step,
        )
    }

    pub fn filter(&self) -> &Tensor {
        &self.filter
    }

    pub fn plan(&self) -> usize {
        self.plan
    }

    pub fn step(&self) -> usize {
        self.step
    }
}

/// Forward activations of [`generate_acfs`] kept for the backward pass.
pub(crate) struct AcfCache {
    location: Vec<f64>,
    gate: Vec<f64>,
    lstm: Vec<LstmCache>,
    hidden: Vec<Vec<f64>>,
    picked: Vec<Vec<usize>>,
    pooled: Vec<Vec<f64>>,
    codes: Vec<Vec<f64>>,
}

/// The location channel scaled by `1 / N^2`, so IDs do not saturate the gate.
pub fn location_input(v: &MaskedImage) -> Vec<f64> {
    let nn = (v.n() * v.n()) as f64;
    v.channel(super::masked::LOCATION).iter().map(|id| id / nn).collect()
}

pub(crate) fn acf_forward(
    params: &PdnParams,
    plan: usize,
    amps: &[Vec<f64>],
    v: &MaskedImage,
) -> Result<(Vec<Acf>, AcfCache)> {
    let cfg = &params.config;
    if amps.is_empty() {
        return Err(invalid("a plan needs at least one primitive"));
    }
    if v.n() != cfg.n {
        return Err(shape_mismatch(&[cfg.n, cfg.n], &[v.n(), v.n()]));
    }
    if params.gate.outputs() != params.lstm.hidden() {
        return Err(shape_mismatch(&[params.lstm.hidden()], &[params.gate.outputs()]));
    }
    let location = location_input(v);
    let gate: Vec<f64> = params
        .gate
        .forward(&location)?
        .into_iter()
        .map(sigmoid_scalar)
        .collect();
    let (states, lstm) = params.lstm.forward_sequence(amps)?;
    let mut cache = AcfCache {
        location,
        gate,
        lstm,
        hidden: Vec::with_capacity(amps.len()),
        picked: Vec::with_capacity(amps.len()),
        pooled: Vec::with_capacity(amps.len()),
        codes: Vec::with_capacity(amps.len()),
    };
    let mut acfs = Vec::with_capacity(amps.len());
    for (k, s) in states.into_iter().enumerate() {
        let gated: Vec<f64> = s.h.iter().zip(&cache.gate).map(|(h, g)| h * g).collect();
        let picked = kmax_indices(&gated, cfg.kmax)?;
        let pooled: Vec<f64> = picked.iter().map(|&i| gated[i]).collect();
        let code: Vec<f64> = params.encoder.forward(&pooled)?.into_iter().map(f64::tanh).collect();
        let taps = params.decoder.forward(&code)?;
        acfs.push(Acf::new(Tensor::new(vec![cfg.filter, cfg.filter], taps)?, plan, k)?);
        cache.hidden.push(s.h);
        cache.picked.push(picked);
        cache.pooled.push(pooled);
        cache.codes.push(code);
    }
    Ok((acfs, cache))
}

/// Generates one filter per plan step from the plan's primitive vectors and
/// the image's location map.
pub fn generate_acfs(params: &PdnParams, plan: usize, amps: &[Vec<f64>], v: &MaskedImage) -> Result<Vec<Acf>> {
    Ok(acf_forward(params, plan, amps, v)?.0)
}

/// Accumulates parameter gradients given `dacfs[k] = dL/d(filter k)`
/// (row-major taps).
pub(crate) fn acf_backward(params: &PdnParams, cache: &AcfCache, dacfs: &[Vec<f64>], grads: &mut PdnParams) {
    let hd = params.lstm.hidden();
    let mut dgate = vec![0.0; hd];
    let mut dhs = Vec::with_capacity(dacfs.len());
    for (k, dacf) in dacfs.iter().enumerate() {
        let dcode = params.decoder.backward(&cache.codes[k], dacf, &mut grads.decoder);
        let dpre = tanh_backward(&cache.codes[k], &dcode);
        let dpooled = params.encoder.backward(&cache.pooled[k], &dpre, &mut grads.encoder);
        let mut dh = vec![0.0; hd];
        for (&i, d) in cache.picked[k].iter().zip(&dpooled) {
            dh[i] = d * cache.gate[i];
            dgate[i] += d * cache.hidden[k][i];
        }
        dhs.push(dh);
    }
    params.lstm.backward_sequence(&cache.lstm, &dhs, &mut grads.lstm);
    let dpre: Vec<f64> = dgate.iter().zip(&cache.gate).map(|(d, g)| d * g * (1.0 - g)).collect();
    params.gate.backward(&cache.location, &dpre, &mut grads.gate);
}
