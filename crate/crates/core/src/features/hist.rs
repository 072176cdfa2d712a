use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

use super::{FeatureKind, FeatureVector, Frame, VideoTube};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureParams {
    pub hod_bins: usize,
    pub hog_bins: usize,
    pub hog_cell: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            hod_bins: 32,
            hog_bins: 9,
            hog_cell: 8,
        }
    }
}

/// Scales `v` to unit L2 norm; an all-zero vector is returned unchanged.
pub fn l2_normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn bucket(value: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let t = (value - lo) / (hi - lo) * bins as f64;
    (t.floor().max(0.0) as usize).min(bins - 1)
}

/// Histogram of frame difference: per-pixel `gray(b) - gray(a)` binned into
/// `bins` equal buckets over `[-1, 1]`, then L2-normalized.
pub fn hod(frame_a: &Frame, frame_b: &Frame, bins: usize) -> Result<FeatureVector> {
    if bins == 0 {
        return Err(invalid("HOD needs at least one bin"));
    }
    if frame_a.height() != frame_b.height() || frame_a.width() != frame_b.width() {
        return Err(invalid(format!(
            "HOD frames differ: {}x{} vs {}x{}",
            frame_a.height(),
            frame_a.width(),
            frame_b.height(),
            frame_b.width()
        )));
    }
    let mut hist = vec![0.0; bins];
    for (a, b) in frame_a.gray().iter().zip(frame_b.gray()) {
        hist[bucket(b - a, -1.0, 1.0, bins)] += 1.0;
    }
    Ok(FeatureVector {
        kind: FeatureKind::Hod,
        values: l2_normalize(hist),
    })
}

/// Histogram of oriented gradients over non-overlapping `cell x cell`
/// blocks. Gradients are central differences on the grayscale image with
/// replicated borders; orientation is unsigned (`[0, pi)`), hard-binned and
/// weighted by magnitude. Cells are concatenated row-major and the whole
/// vector is L2-normalized.
pub fn hog(frame: &Frame, orientation_bins: usize, cell: usize) -> Result<FeatureVector> {
    if orientation_bins == 0 || cell == 0 {
        return Err(invalid("HOG needs positive bin count and cell size"));
    }
    let (h, w) = (frame.height(), frame.width());
    if h % cell != 0 || w % cell != 0 {
        return Err(invalid(format!(
            "{h}x{w} frame is not divisible into {cell}x{cell} cells"
        )));
    }
    let g = frame.gray();
    let at = |i: isize, j: isize| -> f64 {
        let i = i.clamp(0, h as isize - 1) as usize;
        let j = j.clamp(0, w as isize - 1) as usize;
        g[i * w + j]
    };
    let (cells_y, cells_x) = (h / cell, w / cell);
    let mut hist = vec![0.0; cells_y * cells_x * orientation_bins];
    for i in 0..h {
        for j in 0..w {
            let (ii, jj) = (i as isize, j as isize);
            let gx = at(ii, jj + 1) - at(ii, jj - 1);
            let gy = at(ii + 1, jj) - at(ii - 1, jj);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let mut theta = gy.atan2(gx);
            if theta < 0.0 {
                theta += PI;
            }
            if theta >= PI {
                theta -= PI;
            }
            let bin = bucket(theta, 0.0, PI, orientation_bins);
            let c = (i / cell) * cells_x + j / cell;
            hist[c * orientation_bins + bin] += mag;
        }
    }
    Ok(FeatureVector {
        kind: FeatureKind::Hog,
        values: l2_normalize(hist),
    })
}

/// Per-tube feature sequence, computed on the tube's crop.
///
/// - HOD: one vector per consecutive frame pair (`len - 1`).
/// - HOG: one vector per frame (`len`).
/// - HOD+HOG: per pair, `hod(f_i, f_{i+1})` followed by `hog(f_{i+1})`,
///   renormalized as a whole (`len - 1`).
pub fn tube_features(tube: &VideoTube, kind: FeatureKind, params: &FeatureParams) -> Result<Vec<FeatureVector>> {
    let frames = tube.cropped()?;
    match kind {
        FeatureKind::Hod => frames.windows(2).map(|p| hod(&p[0], &p[1], params.hod_bins)).collect(),
        FeatureKind::Hog => frames
            .iter()
            .map(|f| hog(f, params.hog_bins, params.hog_cell))
            .collect(),
        FeatureKind::HodHog => frames
            .windows(2)
            .map(|p| {
                let mut values = hod(&p[0], &p[1], params.hod_bins)?.values;
                values.extend(hog(&p[1], params.hog_bins, params.hog_cell)?.values);
                Ok(FeatureVector {
                    kind: FeatureKind::HodHog,
                    values: l2_normalize(values),
                })
            })
            .collect(),
    }
}
