use std::path::Path;

use rayon::prelude::*;

use crate::amp::{AmpLibrary, RecognizedPlan};
use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::features::write_pgm16;
use crate::numerics::{conv2d, save_tensor, Padding, Tensor};

use super::acf::acf_forward;
use super::{Acf, MaskedImage, PdnParams};

/// Per-location counts of object points after one predicted action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Spm {
    n: usize,
    counts: Vec<u64>,
}

impl Spm {
    pub fn from_counts(n: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != n * n {
            return Err(shape_mismatch(&[n * n], &[counts.len()]));
        }
        Ok(Self { n, counts })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n + j]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_fn2(self.n, self.n, |i, j| self.get(i, j) as f64)
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let values: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        write_pgm16(path, self.n, self.n, &values)
    }

    pub fn save_pdnt(&self, path: impl AsRef<Path>) -> Result<()> {
        save_tensor(path, &self.to_tensor())
    }
}

/// Summed prediction maps divided by the normalization constant.
#[derive(Clone, Debug, PartialEq)]
pub struct PrdaMap {
    n: usize,
    values: Vec<f64>,
    z: f64,
}

impl PrdaMap {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
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

/// Rounds to the nearest integer, halves toward zero.
pub fn round_half_toward_zero(x: f64) -> f64 {
    if x >= 0.0 {
        (x - 0.5).ceil()
    } else {
        (x + 0.5).floor()
    }
}

/// `R + G + B` where the mask equals `m`, zero elsewhere.
pub(crate) fn masked_colour_sum(v: &MaskedImage, m: usize) -> Tensor {
    let n = v.n();
    Tensor::from_fn2(n, n, |i, j| if v.mask_at(i, j) == m { v.rgb_sum(i, j) } else { 0.0 })
}

fn check_convolve(v: &MaskedImage, acf: &Acf, m: usize, params: &PdnParams) -> Result<()> {
    if m == 0 {
        return Err(invalid("plan index 0 marks unplanned pixels"));
    }
    if v.n() != params.n() {
        return Err(shape_mismatch(&[params.n(), params.n()], &[v.n(), v.n()]));
    }
    if acf.filter().rows() > 2 * v.n() - 1 || acf.filter().cols() > 2 * v.n() - 1 {
        return Err(invalid("filter wider than the padded image"));
    }
    Ok(())
}

/// The offset map: for every location, the filter applied (centered, zero
/// padded) to the colour sum of the pixels belonging to plan `m`, scaled by
/// the layer weight, plus the per-position bias.
pub fn acf_convolve(v: &MaskedImage, acf: &Acf, m: usize, params: &PdnParams) -> Result<Tensor> {
    check_convolve(v, acf, m, params)?;
    let conv = conv2d(&masked_colour_sum(v, m), acf.filter(), Padding::Same)?;
    offsets_from_conv(&conv, params)
}

pub(crate) fn offsets_from_conv(conv: &Tensor, params: &PdnParams) -> Result<Tensor> {
    let w4 = params.w4();
    let data = conv
        .data()
        .iter()
        .zip(params.b4.data())
        .map(|(c, b)| c * w4 + b)
        .collect();
    Tensor::new(conv.shape().to_vec(), data).map_err(|_| Error::NonFinite("acf_convolve"))
}

/// Moves each location's point by its rounded offset (`target = ID - offset`,
/// clamped into the grid) and counts arrivals.
pub fn translation_pool(h4: &Tensor) -> Result<Spm> {
    let n = match h4.shape() {
        [a, b] if a == b => *a,
        other => return Err(shape_mismatch(&[0, 0], other)),
    };
    if !h4.is_finite() {
        return Err(Error::NonFinite("translation_pool"));
    }
    let last = (n * n - 1) as f64;
    let mut counts = vec![0u64; n * n];
    for (id, &h) in h4.data().iter().enumerate() {
        let target = (id as f64 - round_half_toward_zero(h)).clamp(0.0, last);
        counts[target as usize] += 1;
    }
    Spm::from_counts(n, counts)
}

/// Sums the maps in order (a unit-weight 1x1 convolution across channels)
/// and divides by `z`.
pub fn generate_prda(spms: &[Spm], z: f64) -> Result<PrdaMap> {
    let first = spms.first().ok_or_else(|| invalid("no prediction maps to summarize"))?;
    if !(z > 0.0 && z.is_finite()) {
        return Err(invalid(format!("normalization constant {z} must be positive")));
    }
    let n = first.n();
    if let Some(bad) = spms.iter().find(|s| s.n() != n) {
        return Err(shape_mismatch(&[n, n], &[bad.n(), bad.n()]));
    }
    let values = (0..n * n)
        .map(|p| spms.iter().fold(0.0, |acc, s| acc + 1.0 * s.counts()[p] as f64) / z)
        .collect();
    Ok(PrdaMap { n, values, z })
}

/// Plan indices must be exactly `1..=M` and cover every mask code in `v`.
fn check_plans(v: &MaskedImage, plans: &[RecognizedPlan], lib: &AmpLibrary, params: &PdnParams) -> Result<()> {
    if plans.is_empty() {
        return Err(invalid("no recognized plans"));
    }
    let mut ids: Vec<usize> = plans.iter().map(|p| p.plan).collect();
    ids.sort_unstable();
    if ids != (1..=plans.len()).collect::<Vec<_>>() {
        return Err(invalid(format!("plan indices {ids:?} are not 1..={}", plans.len())));
    }
    if let Some(&code) = v.plans_present().iter().find(|&&c| c > plans.len()) {
        return Err(invalid(format!("mask code {code} has no recognized plan")));
    }
    if lib.feature_len() != params.config.amp_dim {
        return Err(shape_mismatch(&[params.config.amp_dim], &[lib.feature_len()]));
    }
    Ok(())
}

/// Decodes a plan's primitive indices to library centroids.
pub fn plan_vectors(plan: &RecognizedPlan, lib: &AmpLibrary) -> Result<Vec<Vec<f64>>> {
    plan.steps
        .iter()
        .map(|&s| {
            lib.centroid(s).map(|c| c.to_vec()).ok_or_else(|| {
                invalid(format!(
                    "primitive index {s} out of range for {} clusters",
                    lib.clusters()
                ))
            })
        })
        .collect()
}

/// Every per-(plan, step) prediction map, plans in the given order.
pub fn pdn_spms(v: &MaskedImage, plans: &[RecognizedPlan], lib: &AmpLibrary, params: &PdnParams) -> Result<Vec<Spm>> {
    check_plans(v, plans, lib, params)?;
    let per_plan: Vec<Vec<Spm>> = plans
        .par_iter()
        .map(|plan| {
            let amps = plan_vectors(plan, lib)?;
            let (acfs, _) = acf_forward(params, plan.plan, &amps, v)?;
            acfs.iter()
                .map(|acf| translation_pool(&acf_convolve(v, acf, plan.plan, params)?))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_plan.into_iter().flatten().collect())
}

/// The full network: filters, offsets, pooling, then summarization.
pub fn pdn_forward(v: &MaskedImage, plans: &[RecognizedPlan], lib: &AmpLibrary, params: &PdnParams) -> Result<PrdaMap> {
    generate_prda(&pdn_spms(v, plans, lib, params)?, params.config.z)
}

/// Largest image side the exhaustive oracle accepts.
pub const ORACLE_MAX_SIDE: usize = 6;

/// Explicit belief update over the image's object-point states.
///
/// Each location, together with the pixel it holds, is one state. The
/// action's deterministic transition sends every state to the location its
/// offset points at (clamped into the grid); observations are certain. With
/// a uniform unit prior, the unnormalized posterior mass at each location is
/// the column sum of the transition matrix.
pub fn belief_update_oracle(v: &MaskedImage, acf: &Acf, m: usize, params: &PdnParams) -> Result<Spm> {
    let n = v.n();
    if n > ORACLE_MAX_SIDE {
        return Err(invalid(format!(
            "exhaustive oracle limited to {ORACLE_MAX_SIDE}x{ORACLE_MAX_SIDE} images"
        )));
    }
    check_convolve(v, acf, m, params)?;
    let f = acf.filter();
    let (f1, f2) = (f.rows(), f.cols());
    let (r1, r2) = ((f1 - 1) / 2, (f2 - 1) / 2);
    let states = n * n;
    let mut transition = vec![vec![0u8; states]; states];
    for (s, row) in transition.iter_mut().enumerate() {
        let (i, j) = (s / n, s % n);
        let mut acc = 0.0;
        for a in 0..f1 {
            for b in 0..f2 {
                let (pi, pj) = ((i + a) as isize - r1 as isize, (j + b) as isize - r2 as isize);
                if pi < 0 || pj < 0 || pi >= n as isize || pj >= n as isize {
                    continue;
                }
                let (pi, pj) = (pi as usize, pj as usize);
                if v.mask_at(pi, pj) == m {
                    acc += v.rgb_sum(pi, pj) * f.get2(a, b);
                }
            }
        }
        let offset = acc * params.w4() + params.b4.get2(i, j);
        if !offset.is_finite() {
            return Err(Error::NonFinite("belief_update_oracle"));
        }
        let delta = if offset >= 0.0 {
            (offset - 0.5).ceil()
        } else {
            (offset + 0.5).floor()
        };
        let next = (s as f64 - delta).max(0.0).min((states - 1) as f64) as usize;
        row[next] = 1;
    }
    let belief = vec![1u64; states];
    let counts = (0..states)
        .map(|t| transition.iter().zip(&belief).map(|(row, b)| row[t] as u64 * b).sum())
        .collect();
    Spm::from_counts(n, counts)
}
