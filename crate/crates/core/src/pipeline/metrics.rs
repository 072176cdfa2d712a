use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::pdn::PrdaMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    /// `None` for classes without positives.
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

/// All-point interpolated average precision of one ranking. Ties in score
/// keep the input order.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let total = positive.iter().filter(|&&p| p).count();
    if total == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut precisions = Vec::with_capacity(total);
    for (rank, &i) in order.iter().enumerate() {
        if positive[i] {
            hits += 1;
            precisions.push(hits as f64 / (rank + 1) as f64);
        }
    }
    // Each recall step of 1/total is credited with the best precision at
    // that recall or beyond.
    let mut ap = 0.0;
    let mut best = 0.0f64;
    for &p in precisions.iter().rev() {
        best = best.max(p);
        ap += best;
    }
    let ap = ap / total as f64;
    Some(ap)
}

/// Per-class AP of `scores[sample][class]` against integer labels, and
/// their mean over classes that have positives.
pub fn evaluate_map(scores: &[Vec<f64>], labels: &[usize]) -> Result<MapReport> {
    if scores.len() != labels.len() {
        return Err(shape_mismatch(&[labels.len()], &[scores.len()]));
    }
    let classes = scores
        .first()
        .map(|s| s.len())
        .ok_or_else(|| invalid("no predictions"))?;
    if scores.iter().any(|s| s.len() != classes) {
        return Err(invalid("predictions differ in class count"));
    }
    if scores.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("evaluate_map"));
    }
    let per_class: Vec<Option<f64>> = (0..classes)
        .map(|c| {
            let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
            let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            let ap = average_precision(&col, &pos);
            if ap.is_none() {
                log::warn!("class {c} has no positives; excluded from mean AP");
            }
            ap
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(invalid("no class has positives"));
    }
    let mean = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(MapReport { per_class, mean })
}

/// Mean PRDA over `cells` divided by the mean over every other cell.
/// `None` when either set is empty or the background mean is zero.
pub fn prda_concentration(prda: &PrdaMap, cells: &[(usize, usize)]) -> Option<f64> {
    let n = prda.n();
    let mut on = vec![false; n * n];
    for &(r, c) in cells {
        if r < n && c < n {
            on[r * n + c] = true;
        }
    }
    let (mut a, mut na, mut b, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for (v, &t) in prda.values().iter().zip(&on) {
        if t {
            a += v;
            na += 1;
        } else {
            b += v;
            nb += 1;
        }
    }
    if na == 0 || nb == 0 || b == 0.0 {
        return None;
    }
    Some((a / na as f64) / (b / nb as f64))
}
