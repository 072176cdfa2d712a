use crate::error::{invalid, Result};

use super::Tensor;

/// Numerically stable logistic function.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output is `(H - F1 + 1) x (W - F2 + 1)`.
    Valid,
    /// Zero padding so the output is `H x W`; the filter anchor is its
    /// center cell (`(F - 1) / 2` on each axis).
    Same,
}

/// 2-D cross-correlation: `out[i][j] = sum_ab in[i + a][j + b] * f[a][b]`.
///
/// The filter is not flipped.
pub fn conv2d(input: &Tensor, filter: &Tensor, padding: Padding) -> Result<Tensor> {
    if input.rank() != 2 || filter.rank() != 2 {
        return Err(invalid("conv2d expects 2-D input and filter"));
    }
    let (h, w) = (input.rows(), input.cols());
    let (f1, f2) = (filter.rows(), filter.cols());
    let (out_h, out_w, pad_top, pad_left) = match padding {
        Padding::Valid => {
            if f1 > h || f2 > w {
                return Err(invalid(format!("filter {f1}x{f2} is larger than the {h}x{w} input")));
            }
            (h - f1 + 1, w - f2 + 1, 0, 0)
        }
        Padding::Same => (h, w, (f1 - 1) / 2, (f2 - 1) / 2),
    };
    let src = input.data();
    let k = filter.data();
    let mut out = vec![0.0; out_h * out_w];
    for i in 0..out_h {
        for j in 0..out_w {
            let mut acc = 0.0;
            for a in 0..f1 {
                let r = (i + a) as isize - pad_top as isize;
                if r < 0 || r >= h as isize {
                    continue;
                }
                let row = &src[r as usize * w..(r as usize + 1) * w];
                for b in 0..f2 {
                    let c = (j + b) as isize - pad_left as isize;
                    if c < 0 || c >= w as isize {
                        continue;
                    }
                    acc += row[c as usize] * k[a * f2 + b];
                }
            }
            out[i * out_w + j] = acc;
        }
    }
    Tensor::new(vec![out_h, out_w], out)
}

/// Indices of the `k` largest entries, ties broken by lowest index, returned
/// in ascending index order.
pub fn kmax_indices(v: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > v.len() {
        return Err(invalid(format!("k-max size {k} out of range for length {}", v.len())));
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut picked = order[..k].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// K-max pooling: the `k` largest values in their original relative order.
pub fn kmax_pool(v: &[f64], k: usize) -> Result<Vec<f64>> {
    Ok(kmax_indices(v, k)?.into_iter().map(|i| v[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;
    use proptest::prelude::*;

    fn random(rng: &mut SeededRng, rows: usize, cols: usize) -> Tensor {
        Tensor::from_fn2(rows, cols, |_, _| rng.uniform(-1.0, 1.0))
    }

    /// Quadruple-loop oracle with explicit zero padding.
    fn conv_oracle(x: &Tensor, f: &Tensor, same: bool) -> Tensor {
        let (h, w, f1, f2) = (x.rows(), x.cols(), f.rows(), f.cols());
        let (pt, pl) = if same { ((f1 - 1) / 2, (f2 - 1) / 2) } else { (0, 0) };
        let mut padded = vec![vec![0.0; w + f2]; h + f1];
        for i in 0..h {
            for j in 0..w {
                padded[i + pt][j + pl] = x.get2(i, j);
            }
        }
        let (oh, ow) = if same { (h, w) } else { (h - f1 + 1, w - f2 + 1) };
        Tensor::from_fn2(oh, ow, |i, j| {
            let mut s = 0.0;
            for a in 0..f1 {
                for b in 0..f2 {
                    s += padded[i + a][j + b] * f.get2(a, b);
                }
            }
            s
        })
    }

    #[test]
    fn sigmoid_fixed_points() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!((sigmoid_scalar(50.0) - 1.0).abs() <= 1e-15);
        assert!(sigmoid_scalar(-800.0).is_finite());
        let mut rng = SeededRng::new(3);
        for _ in 0..100 {
            let x = rng.uniform(-30.0, 30.0);
            assert!((sigmoid_scalar(x) + sigmoid_scalar(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn delta_filter_is_identity() {
        let mut rng = SeededRng::new(1);
        let x = random(&mut rng, 7, 6);
        let delta = Tensor::from_fn2(3, 3, |i, j| if i == 1 && j == 1 { 1.0 } else { 0.0 });
        assert_eq!(conv2d(&x, &delta, Padding::Same).unwrap(), x);
    }

    #[test]
    fn constant_valid_case() {
        let out = conv2d(
            &Tensor::filled(&[3, 3], 1.0),
            &Tensor::filled(&[2, 2], 1.0),
            Padding::Valid,
        )
        .unwrap();
        assert_eq!(out, Tensor::filled(&[2, 2], 4.0));
    }

    #[test]
    fn matches_loop_oracle() {
        let mut rng = SeededRng::new(9);
        for _ in 0..20 {
            let x = random(&mut rng, 5, 5);
            let f = random(&mut rng, 3, 3);
            assert_eq!(conv2d(&x, &f, Padding::Valid).unwrap(), conv_oracle(&x, &f, false));
            assert_eq!(conv2d(&x, &f, Padding::Same).unwrap(), conv_oracle(&x, &f, true));
        }
    }

    #[test]
    fn oversized_valid_filter_is_rejected() {
        let x = Tensor::zeros(&[2, 2]);
        let f = Tensor::zeros(&[3, 3]);
        assert!(conv2d(&x, &f, Padding::Valid).is_err());
        assert_eq!(conv2d(&x, &f, Padding::Same).unwrap().shape(), &[2, 2]);
    }

    #[test]
    fn bilinearity() {
        let mut rng = SeededRng::new(4);
        for _ in 0..20 {
            let x = random(&mut rng, 6, 5);
            let y = random(&mut rng, 6, 5);
            let f = random(&mut rng, 3, 3);
            let (a, b) = (rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
            let mix = Tensor::from_fn2(6, 5, |i, j| a * x.get2(i, j) + b * y.get2(i, j));
            let lhs = conv2d(&mix, &f, Padding::Same).unwrap();
            let cx = conv2d(&x, &f, Padding::Same).unwrap();
            let cy = conv2d(&y, &f, Padding::Same).unwrap();
            let rhs = Tensor::from_fn2(6, 5, |i, j| a * cx.get2(i, j) + b * cy.get2(i, j));
            assert!(lhs.max_abs_diff(&rhs) <= 1e-9);
        }
    }

    #[test]
    fn kmax_examples() {
        assert_eq!(kmax_pool(&[3.0, 1.0, 2.0], 2).unwrap(), vec![3.0, 2.0]);
        assert_eq!(kmax_indices(&[5.0; 4], 2).unwrap(), vec![0, 1]);
        assert!(kmax_pool(&[1.0], 2).is_err());
        assert!(kmax_pool(&[1.0], 0).is_err());
    }

    #[test]
    fn kmax_matches_sort_oracle() {
        let mut rng = SeededRng::new(11);
        for _ in 0..50 {
            let v: Vec<f64> = (0..20).map(|_| (rng.uniform(0.0, 6.0)).floor()).collect();
            let k = 1 + rng.below(20);
            // Oracle: k-th largest threshold, then keep entries above it plus
            // the earliest entries equal to it.
            let mut sorted = v.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let thr = sorted[k - 1];
            let above = v.iter().filter(|&&x| x > thr).count();
            let mut ties_left = k - above;
            let mut expected = Vec::new();
            for &x in &v {
                if x > thr {
                    expected.push(x);
                } else if x == thr && ties_left > 0 {
                    expected.push(x);
                    ties_left -= 1;
                }
            }
            assert_eq!(kmax_pool(&v, k).unwrap(), expected);
        }
    }

    proptest! {
        #[test]
        fn kmax_is_sub_multiset(v in proptest::collection::vec(-10.0f64..10.0, 1..30), k in 1usize..30) {
            prop_assume!(k <= v.len());
            let out = kmax_pool(&v, k).unwrap();
            prop_assert_eq!(out.len(), k);
            let mut pool = v.clone();
            for x in out {
                let pos = pool.iter().position(|&y| y == x);
                prop_assert!(pos.is_some());
                pool.swap_remove(pos.unwrap());
            }
        }
    }
}
