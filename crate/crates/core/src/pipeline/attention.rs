use std::path::Path;

use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::features::{write_pgm16, Frame};
use crate::numerics::{conv2d, save_tensor, Padding, Tensor};
use crate::pdn::PrdaMap;

/// An `N x N` map with entries in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    n: usize,
    values: Vec<f64>,
}

pub const DEFAULT_BUA_SIGMA: f64 = 1.5;

impl AttentionMap {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(shape_mismatch(&[n * n], &[values.len()]));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("AttentionMap::new"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("attention values must lie in [0, 1]"));
        }
        Ok(Self { n, values })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    /// Min-max normalizes arbitrary finite values; a constant map becomes
    /// all zeros.
    pub fn normalized(n: usize, raw: &[f64]) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("attention normalization"));
        }
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let values = if hi > lo {
            raw.iter().map(|v| (v - lo) / (hi - lo)).collect()
        } else {
            vec![0.0; raw.len()]
        };
        Self::new(n, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_fn2(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        write_pgm16(path, self.n, self.n, &self.values)
    }

    pub fn save_pdnt(&self, path: impl AsRef<Path>) -> Result<()> {
        save_tensor(path, &self.to_tensor())
    }
}

/// Separable Gaussian blur (radius `ceil(3 sigma)`, zero padding).
pub fn gaussian_blur(t: &Tensor, sigma: f64) -> Result<Tensor> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Ok(t.clone());
    }
    let r = (3.0 * sigma).ceil() as usize;
    let taps: Vec<f64> = (0..=2 * r)
        .map(|i| {
            let x = i as f64 - r as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|v| v / total).collect();
    let row = Tensor::new(vec![1, taps.len()], taps.clone())?;
    let col = Tensor::new(vec![taps.len(), 1], taps)?;
    conv2d(&conv2d(t, &row, Padding::Same)?, &col, Padding::Same)
}

/// Bottom-up saliency: blurred absolute grayscale difference, min-max
/// normalized.
pub fn compute_bua(frame_t: &Frame, frame_prev: &Frame) -> Result<AttentionMap> {
    compute_bua_with(frame_t, frame_prev, DEFAULT_BUA_SIGMA)
}

pub fn compute_bua_with(frame_t: &Frame, frame_prev: &Frame, sigma: f64) -> Result<AttentionMap> {
    let (h, w) = (frame_t.height(), frame_t.width());
    if (frame_prev.height(), frame_prev.width()) != (h, w) {
        return Err(shape_mismatch(&[h, w], &[frame_prev.height(), frame_prev.width()]));
    }
    if h != w {
        return Err(invalid("attention maps are square"));
    }
    let diff: Vec<f64> = frame_t
        .gray()
        .iter()
        .zip(frame_prev.gray())
        .map(|(a, b)| (a - b).abs())
        .collect();
    let blurred = gaussian_blur(&Tensor::new(vec![h, w], diff)?, sigma)?;
    AttentionMap::normalized(h, blurred.data())
}

/// `normalize(bua + lambda * normalize(prda))`.
pub fn combine_attention(bua: &AttentionMap, prda: &PrdaMap, lambda: f64) -> Result<AttentionMap> {
    if bua.n() != prda.n() {
        return Err(shape_mismatch(&[bua.n(), bua.n()], &[prda.n(), prda.n()]));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("attention weight {lambda} must be non-negative")));
    }
    let top_down = AttentionMap::normalized(prda.n(), prda.values())?;
    let raw: Vec<f64> = bua
        .values()
        .iter()
        .zip(top_down.values())
        .map(|(b, p)| b + lambda * p)
        .collect();
    AttentionMap::normalized(bua.n(), &raw)
}
