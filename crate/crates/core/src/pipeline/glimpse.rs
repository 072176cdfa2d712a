use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::features::Rect;

use super::AttentionMap;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MIN_AREA: usize = 9;

/// An 8-connected highlighted region and the plan index it was given.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Glimpse {
    /// `(row, col)` pixels in row-major discovery order.
    pub pixels: Vec<(usize, usize)>,
    pub plan: usize,
}

impl Glimpse {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn bbox(&self) -> Rect {
        let (mut r0, mut c0, mut r1, mut c1) = (usize::MAX, usize::MAX, 0, 0);
        for &(r, c) in &self.pixels {
            r0 = r0.min(r);
            c0 = c0.min(c);
            r1 = r1.max(r);
            c1 = c1.max(c);
        }
        Rect::new(c0, r0, c1 + 1 - c0, r1 + 1 - r0)
    }

    pub fn centroid(&self) -> (f64, f64) {
        let n = self.pixels.len() as f64;
        let (sr, sc) = self
            .pixels
            .iter()
            .fold((0.0, 0.0), |(a, b), &(r, c)| (a + r as f64, b + c as f64));
        (sr / n, sc / n)
    }
}

/// Connected components of `att >= threshold`, largest first, numbered from 1.
/// Equal areas keep the order in which their first pixel is met in a
/// row-major scan.
pub fn segment_glimpses(att: &AttentionMap, threshold: f64, min_area: usize) -> Result<Vec<Glimpse>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(invalid(format!("glimpse threshold {threshold} must lie in (0, 1)")));
    }
    let n = att.n();
    let on: Vec<bool> = att.values().iter().map(|&v| v >= threshold).collect();
    let mut seen = vec![false; n * n];
    let mut comps: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n * n {
        if !on[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(p) = stack.pop() {
            let (r, c) = (p / n, p % n);
            pixels.push((r, c));
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr < 0 || cc < 0 || rr >= n as i64 || cc >= n as i64 {
                        continue;
                    }
                    let q = rr as usize * n + cc as usize;
                    if on[q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        pixels.sort_unstable();
        if pixels.len() >= min_area {
            comps.push(pixels);
        }
    }
    comps.sort_by_key(|c| std::cmp::Reverse(c.len()));
    Ok(comps
        .into_iter()
        .enumerate()
        .map(|(i, pixels)| Glimpse { pixels, plan: i + 1 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn map_with(n: usize, on: &[(usize, usize)]) -> AttentionMap {
        let mut v = vec![0.0; n * n];
        for &(r, c) in on {
            v[r * n + c] = 1.0;
        }
        AttentionMap::new(n, v).unwrap()
    }

    fn block(r: usize, c: usize, h: usize, w: usize) -> Vec<(usize, usize)> {
        (r..r + h).flat_map(|i| (c..c + w).map(move |j| (i, j))).collect()
    }

    #[test]
    fn zero_map_is_empty() {
        assert!(segment_glimpses(&AttentionMap::zeros(16), 0.5, 1).unwrap().is_empty());
    }

    #[test]
    fn two_blobs_larger_first() {
        let mut on = block(1, 1, 3, 3);
        on.extend(block(8, 8, 4, 5));
        let g = segment_glimpses(&map_with(16, &on), 0.5, 9).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!((g[0].plan, g[0].area()), (1, 20));
        assert_eq!((g[1].plan, g[1].area()), (2, 9));
        assert_eq!(g[0].bbox(), Rect::new(8, 8, 5, 4));
    }

    #[test]
    fn diagonal_neighbours_connect_and_small_parts_drop() {
        let on = vec![(0, 0), (1, 1), (2, 2), (5, 5)];
        let g = segment_glimpses(&map_with(8, &on), 0.5, 2).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].pixels, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn threshold_range() {
        let m = AttentionMap::zeros(4);
        assert!(segment_glimpses(&m, 0.0, 1).is_err());
        assert!(segment_glimpses(&m, 1.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn components_are_disjoint_and_sized(seed in any::<u64>(), min_area in 1usize..6) {
            let mut rng = SeededRng::new(seed);
            let v: Vec<f64> = (0..144).map(|_| rng.uniform(0.0, 1.0)).collect();
            let att = AttentionMap::new(12, v).unwrap();
            let g = segment_glimpses(&att, 0.6, min_area).unwrap();
            let mut all = HashSet::new();
            for (i, x) in g.iter().enumerate() {
                prop_assert_eq!(x.plan, i + 1);
                prop_assert!(x.area() >= min_area);
                if i > 0 {
                    prop_assert!(g[i - 1].area() >= x.area());
                }
                for &p in &x.pixels {
                    prop_assert!(att.get(p.0, p.1) >= 0.6);
                    prop_assert!(all.insert(p));
                }
            }
        }
    }
}
