use crate::error::{invalid, Result};
use crate::features::FeatureVector;

use super::kmeans::sq_dist;
use super::{AmpDistribution, AmpLibrary, PlanTrace};

/// Added to each distance before inversion so an exact centroid match gets
/// probability close to (not exactly) one without dividing by zero.
pub const DISTANCE_FLOOR: f64 = 1e-8;

/// Soft-assigns `f` to its `size` nearest centroids (Euclidean, ties by
/// lowest index) with probabilities proportional to `1 / (d + 1e-8)`.
pub fn assign_distribution(f: &FeatureVector, lib: &AmpLibrary, size: usize) -> Result<AmpDistribution> {
    if size == 0 || size > lib.clusters() {
        return Err(invalid(format!(
            "distribution size {size} out of range for {} clusters",
            lib.clusters()
        )));
    }
    if f.len() != lib.feature_len() {
        return Err(invalid(format!(
            "feature length {} does not match library length {}",
            f.len(),
            lib.feature_len()
        )));
    }
    let mut dists: Vec<(usize, f64)> = lib
        .centroids()
        .iter()
        .enumerate()
        .map(|(i, c)| (i, sq_dist(&f.values, c).sqrt()))
        .collect();
    dists.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    dists.truncate(size);
    let weights: Vec<f64> = dists.iter().map(|(_, d)| 1.0 / (d + DISTANCE_FLOOR)).collect();
    let total: f64 = weights.iter().sum();
    AmpDistribution::new(dists.iter().zip(&weights).map(|((i, _), w)| (*i, w / total)).collect())
}

/// Collapses each maximal run of distributions sharing an index set into one
/// distribution holding the run-mean probability of every index.
pub fn merge_consecutive(trace: &PlanTrace) -> PlanTrace {
    let mut out: Vec<AmpDistribution> = Vec::new();
    let steps = trace.steps();
    let mut start = 0;
    while start < steps.len() {
        let key = steps[start].index_set();
        let mut end = start + 1;
        while end < steps.len() && steps[end].index_set() == key {
            end += 1;
        }
        let run = &steps[start..end];
        if run.len() == 1 {
            out.push(run[0].clone());
        } else {
            let n = run.len() as f64;
            let entries = run[0]
                .entries()
                .iter()
                .map(|&(idx, _)| {
                    let sum: f64 = run
                        .iter()
                        .map(|d| d.entries().iter().find(|e| e.0 == idx).map_or(0.0, |e| e.1))
                        .sum();
                    (idx, sum / n)
                })
                .collect();
            out.push(AmpDistribution::new(entries).expect("mean of distributions is a distribution"));
        }
        start = end;
    }
    PlanTrace::new(out).expect("non-empty input gives non-empty output")
}

/// The centroid behind a primitive index.
pub fn decode_amp(index: usize, lib: &AmpLibrary) -> Result<FeatureVector> {
    let c = lib.centroid(index).ok_or_else(|| {
        invalid(format!(
            "primitive index {index} out of range for {} clusters",
            lib.clusters()
        ))
    })?;
    Ok(FeatureVector {
        kind: lib.kind(),
        values: c.to_vec(),
    })
}
