use crate::error::{invalid, shape_mismatch, Result};
use crate::features::Frame;
use crate::numerics::Tensor;

/// The five-channel image the network consumes, stored channel-first as a
/// `5 x N x N` tensor: location IDs, plan mask codes, then R, G, B.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedImage {
    tensor: Tensor,
}

/// A set of pixels labelled with one recognized plan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub pixels: Vec<(usize, usize)>,
    pub plan: usize,
}

pub const LOCATION: usize = 0;
pub const MASK: usize = 1;

impl MaskedImage {
    /// Validates a raw `5 x N x N` tensor.
    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        let n = match tensor.shape() {
            [5, a, b] if a == b => *a,
            other => return Err(shape_mismatch(&[5, 0, 0], other)),
        };
        let nn = n * n;
        let d = tensor.data();
        if d[..nn].iter().enumerate().any(|(id, &v)| v != id as f64) {
            return Err(invalid("location channel must hold the ID grid"));
        }
        if d[nn..2 * nn].iter().any(|&v| v < 0.0 || v.fract() != 0.0) {
            return Err(invalid("mask channel must hold non-negative integers"));
        }
        if d[2 * nn..].iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(invalid("colour channels must lie in [0, 1]"));
        }
        Ok(Self { tensor })
    }

    /// Assembles the image from per-pixel mask codes and an `N x N` frame.
    pub fn from_parts(frame: &Frame, mask: &[usize]) -> Result<Self> {
        if frame.width() != frame.height() {
            return Err(shape_mismatch(
                &[frame.height(), frame.height()],
                &[frame.height(), frame.width()],
            ));
        }
        Self::from_rgb(frame.height(), frame.data(), mask)
    }

    /// Like [`MaskedImage::from_parts`] but from raw pixel-interleaved RGB,
    /// which also admits images smaller than a [`Frame`] allows.
    pub fn from_rgb(n: usize, rgb: &[f64], mask: &[usize]) -> Result<Self> {
        let nn = n * n;
        if mask.len() != nn || rgb.len() != 3 * nn {
            return Err(shape_mismatch(&[nn, 3 * nn], &[mask.len(), rgb.len()]));
        }
        let mut data = Vec::with_capacity(5 * nn);
        data.extend((0..nn).map(|id| id as f64));
        data.extend(mask.iter().map(|&m| m as f64));
        for c in 0..3 {
            data.extend(rgb.chunks_exact(3).map(|px| px[c]));
        }
        Self::from_tensor(Tensor::new(vec![5, n, n], data)?)
    }

    pub fn n(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let nn = self.n() * self.n();
        &self.tensor.data()[c * nn..(c + 1) * nn]
    }

    pub fn mask_at(&self, i: usize, j: usize) -> usize {
        self.channel(MASK)[i * self.n() + j] as usize
    }

    /// `R + G + B` at a pixel, summed in channel order.
    pub fn rgb_sum(&self, i: usize, j: usize) -> f64 {
        let p = i * self.n() + j;
        self.channel(2)[p] + self.channel(3)[p] + self.channel(4)[p]
    }

    /// Largest mask code present.
    pub fn max_plan(&self) -> usize {
        self.channel(MASK).iter().fold(0.0f64, |a, &b| a.max(b)) as usize
    }

    /// Mask codes present, ascending, excluding zero.
    pub fn plans_present(&self) -> Vec<usize> {
        let mut seen: Vec<usize> = self
            .channel(MASK)
            .iter()
            .map(|&v| v as usize)
            .filter(|&m| m > 0)
            .collect();
        seen.sort_unstable();
        seen.dedup();
        seen
    }
}

/// Labels pixels of `frame` (resized to `n x n` when needed) with the plan
/// index of the region containing them; unlabelled pixels get 0.
pub fn build_masked_image(frame: &Frame, n: usize, regions: &[Region]) -> Result<MaskedImage> {
    let frame = if frame.height() == n && frame.width() == n {
        frame.clone()
    } else {
        frame.resize(n, n)?
    };
    let mut mask = vec![0usize; n * n];
    for r in regions {
        if r.plan == 0 {
            return Err(invalid("plan index 0 is reserved for unlabelled pixels"));
        }
        for &(i, j) in &r.pixels {
            if i >= n || j >= n {
                return Err(invalid(format!("region pixel ({i}, {j}) outside {n}x{n} image")));
            }
            let cell = &mut mask[i * n + j];
            if *cell != 0 {
                return Err(invalid(format!("regions overlap at ({i}, {j})")));
            }
            *cell = r.plan;
        }
    }
    MaskedImage::from_parts(&frame, &mask)
}
