use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::features::FeatureVector;
use crate::numerics::SeededRng;

use super::AmpLibrary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub clusters: usize,
    pub seed: u64,
    pub max_iter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmeansReport {
    /// Sum of squared distances after each assignment step.
    pub inertia: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding: the first center uniformly, then each next center with
/// probability proportional to its squared distance from the chosen set.
fn seed_centers(points: &[Vec<f64>], k: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let mut chosen = vec![false; points.len()];
    let first = rng.below(points.len());
    chosen[first] = true;
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform(0.0, total);
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Round-off can leave the target past the last positive weight.
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            // Fewer distinct points than clusters: take the next unused one.
            chosen.iter().position(|&c| !c).expect("points >= clusters")
        };
        chosen[pick] = true;
        centers.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[pick]));
        }
    }
    centers
}

/// Lloyd's algorithm from k-means++ seeds.
///
/// Stops when the assignment stops changing or after `max_iter` assignment
/// steps. An empty cluster is re-seeded at the point farthest from its own
/// centroid. Inertia is recorded after every assignment step and never
/// increases.
pub fn kmeans(points: &[Vec<f64>], cfg: KmeansConfig) -> Result<(Vec<Vec<f64>>, KmeansReport)> {
    let k = cfg.clusters;
    if k == 0 {
        return Err(invalid("k-means needs at least one cluster"));
    }
    if points.len() < k {
        return Err(invalid(format!("{} points cannot fill {k} clusters", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(invalid("k-means points differ in length"));
    }
    if cfg.max_iter == 0 {
        return Err(invalid("k-means needs at least one iteration"));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let mut centroids = seed_centers(points, k, &mut rng);
    let mut labels: Vec<usize> = Vec::new();
    let mut report = KmeansReport {
        inertia: Vec::new(),
        iterations: 0,
        converged: false,
    };
    for _ in 0..cfg.max_iter {
        let assigned: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(p, &centroids)).collect();
        let inertia: f64 = assigned.iter().map(|a| a.1).sum();
        let new_labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        report.inertia.push(inertia);
        report.iterations += 1;
        if new_labels == labels {
            report.converged = true;
            break;
        }
        labels = new_labels;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for ((c, s), &n) in centroids.iter_mut().zip(&sums).zip(&counts) {
            if n > 0 {
                *c = s.iter().map(|v| v / n as f64).collect();
            }
        }
        let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empty.is_empty() {
            let mut far: Vec<(usize, f64)> = points
                .iter()
                .zip(&labels)
                .enumerate()
                .map(|(i, (p, &l))| (i, sq_dist(p, &centroids[l])))
                .collect();
            far.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for (c, (i, _)) in empty.into_iter().zip(far) {
                centroids[c] = points[i].clone();
            }
        }
    }
    Ok((centroids, report))
}

/// Fits a primitive library to a set of feature vectors.
pub fn kmeans_fit(
    features: &[FeatureVector],
    clusters: usize,
    seed: u64,
    max_iter: usize,
) -> Result<(AmpLibrary, KmeansReport)> {
    let first = features
        .first()
        .ok_or_else(|| invalid("cannot cluster an empty feature set"))?;
    if features.iter().any(|f| f.kind != first.kind) {
        return Err(invalid("feature vectors mix kinds"));
    }
    let points: Vec<Vec<f64>> = features.iter().map(|f| f.values.clone()).collect();
    let (centroids, report) = kmeans(
        &points,
        KmeansConfig {
            clusters,
            seed,
            max_iter,
        },
    )?;
    let lib = AmpLibrary::new(centroids, first.kind, seed)?;
    Ok((lib, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn blobs(seed: u64, per_blob: usize) -> (Vec<Vec<f64>>, Vec<[f64; 2]>) {
        let means = [[0.0, 0.0], [5.0, 5.0], [-4.0, 6.0]];
        let mut rng = SeededRng::new(seed);
        let mut pts = Vec::new();
        for m in &means {
            for _ in 0..per_blob {
                pts.push(vec![m[0] + rng.uniform(-0.5, 0.5), m[1] + rng.uniform(-0.5, 0.5)]);
            }
        }
        (pts, means.to_vec())
    }

    fn non_increasing(xs: &[f64]) -> bool {
        xs.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12)
    }

    #[test]
    fn recovers_blob_means() {
        let (pts, means) = blobs(1, 200);
        let (c, report) = kmeans(
            &pts,
            KmeansConfig {
                clusters: 3,
                seed: 7,
                max_iter: 100,
            },
        )
        .unwrap();
        assert!(report.converged);
        assert!(non_increasing(&report.inertia));
        for m in means {
            let best = c.iter().map(|c| sq_dist(c, &m).sqrt()).fold(f64::INFINITY, f64::min);
            assert!(best < 0.1, "no centroid near {m:?}: {best}");
        }
    }

    #[test]
    fn distinct_points_give_zero_inertia() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let mut dup = pts.clone();
        dup.extend(pts.iter().cloned());
        let (_, report) = kmeans(
            &dup,
            KmeansConfig {
                clusters: 6,
                seed: 3,
                max_iter: 50,
            },
        )
        .unwrap();
        assert_eq!(*report.inertia.last().unwrap(), 0.0);
    }

    #[test]
    fn determinism_and_errors() {
        let (pts, _) = blobs(2, 30);
        let cfg = KmeansConfig {
            clusters: 4,
            seed: 11,
            max_iter: 30,
        };
        assert_eq!(kmeans(&pts, cfg).unwrap(), kmeans(&pts, cfg).unwrap());
        assert!(kmeans(&pts[..3], cfg).is_err());
    }

    #[test]
    fn empty_clusters_are_reseeded() {
        // Many clusters over few well-separated groups forces empties.
        let mut pts = Vec::new();
        for g in 0..3 {
            for i in 0..10 {
                pts.push(vec![g as f64 * 100.0 + i as f64 * 1e-3]);
            }
        }
        let (c, report) = kmeans(
            &pts,
            KmeansConfig {
                clusters: 12,
                seed: 5,
                max_iter: 100,
            },
        )
        .unwrap();
        assert!(non_increasing(&report.inertia));
        assert_eq!(c.len(), 12);
    }

    proptest! {
        #[test]
        fn inertia_never_increases(seed in any::<u64>(), k in 2usize..8) {
            let mut rng = SeededRng::new(seed);
            let pts: Vec<Vec<f64>> = (0..60).map(|_| rng.uniform_vec(3, 1.0)).collect();
            let (_, report) = kmeans(&pts, KmeansConfig { clusters: k, seed, max_iter: 50 }).unwrap();
            prop_assert!(non_increasing(&report.inertia));
        }
    }
}
