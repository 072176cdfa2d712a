use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::numerics::{conv2d, sgd_step, Padding, Parameters, SeededRng};

use super::acf::{acf_backward, acf_forward};
use super::dynamics::masked_colour_sum;
use super::{MaskedImage, PdnParams};

/// Supervision for one plan region: its primitive vectors and, per step, the
/// offset every pixel of the region should receive.
#[derive(Clone, Debug)]
pub struct DynamicsTarget {
    pub plan: usize,
    pub amps: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct DynamicsExample {
    pub image: MaskedImage,
    pub targets: Vec<DynamicsTarget>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub clip: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 0.05,
            batch: 8,
            clip: 5.0,
            seed: 0,
        }
    }
}

/// Per-location weight and target for one region and step: region pixels
/// take the step's offset, locations whose filter window never touches the
/// region take zero, and the boundary band in between is unsupervised.
fn supervision(image: &MaskedImage, plan: usize, offset: f64, side: usize) -> (Vec<f64>, Vec<f64>) {
    let n = image.n();
    let r = (side / 2) as isize;
    let mut weight = vec![0.0; n * n];
    let mut target = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let p = i * n + j;
            if image.mask_at(i, j) == plan {
                weight[p] = 1.0;
                target[p] = offset;
                continue;
            }
            let touches = (-r..=r).any(|a| {
                (-r..=r).any(|b| {
                    let (pi, pj) = (i as isize + a, j as isize + b);
                    pi >= 0
                        && pj >= 0
                        && pi < n as isize
                        && pj < n as isize
                        && image.mask_at(pi as usize, pj as usize) == plan
                })
            });
            if !touches {
                weight[p] = 1.0;
            }
        }
    }
    (weight, target)
}

fn check(params: &PdnParams, ex: &DynamicsExample) -> Result<()> {
    for t in &ex.targets {
        if t.plan == 0 || t.amps.len() != t.offsets.len() {
            return Err(invalid(
                "each dynamics target needs a plan index and one offset per step",
            ));
        }
    }
    if ex.image.n() != params.n() {
        return Err(invalid("example image size differs from the network"));
    }
    Ok(())
}

/// Weighted squared offset error summed over regions and steps, divided by
/// `N^2`; with gradients when `grads` is given.
fn loss_impl(params: &PdnParams, ex: &DynamicsExample, mut grads: Option<&mut PdnParams>) -> Result<f64> {
    check(params, ex)?;
    let n = params.n();
    let nn = (n * n) as f64;
    let side = params.config.filter;
    let r = side / 2;
    let w4 = params.w4();
    let mut loss = 0.0;
    for t in &ex.targets {
        let (acfs, cache) = acf_forward(params, t.plan, &t.amps, &ex.image)?;
        let masked = masked_colour_sum(&ex.image, t.plan);
        let mut dacfs = Vec::with_capacity(acfs.len());
        for (acf, &offset) in acfs.iter().zip(&t.offsets) {
            let (weight, target) = supervision(&ex.image, t.plan, offset, side);
            let conv = conv2d(&masked, acf.filter(), Padding::Same)?;
            let mut dconv = vec![0.0; n * n];
            for p in 0..n * n {
                let resid = conv.data()[p] * w4 + params.b4.data()[p] - target[p];
                loss += weight[p] * resid * resid / nn;
                let dh = 2.0 * weight[p] * resid / nn;
                if let Some(g) = grads.as_deref_mut() {
                    g.b4.data_mut()[p] += dh;
                    g.w4.data_mut()[0] += dh * conv.data()[p];
                }
                dconv[p] = dh * w4;
            }
            if grads.is_some() {
                let mut dacf = vec![0.0; side * side];
                for a in 0..side {
                    for b in 0..side {
                        let mut acc = 0.0;
                        for i in 0..n {
                            let si = i as isize + a as isize - r as isize;
                            if si < 0 || si >= n as isize {
                                continue;
                            }
                            for j in 0..n {
                                let sj = j as isize + b as isize - r as isize;
                                if sj < 0 || sj >= n as isize {
                                    continue;
                                }
                                acc += dconv[i * n + j] * masked.get2(si as usize, sj as usize);
                            }
                        }
                        dacf[a * side + b] = acc;
                    }
                }
                dacfs.push(dacf);
            }
        }
        if let Some(g) = grads.as_deref_mut() {
            acf_backward(params, &cache, &dacfs, g);
        }
    }
    Ok(loss)
}

pub fn dynamics_loss(params: &PdnParams, ex: &DynamicsExample) -> Result<f64> {
    loss_impl(params, ex, None)
}

pub fn dynamics_grad(params: &PdnParams, ex: &DynamicsExample) -> Result<(f64, PdnParams)> {
    let mut grads = params.zeros_like();
    let loss = loss_impl(params, ex, Some(&mut grads))?;
    Ok((loss, grads))
}

/// Regresses the offset path onto supervised region motion with clipped
/// mini-batch SGD. Returns the mean example loss of each epoch.
pub fn fit_dynamics(params: &mut PdnParams, examples: &[DynamicsExample], cfg: &FitConfig) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(invalid("no dynamics examples"));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch.max(1)) {
            let results: Vec<(f64, PdnParams)> = chunk
                .par_iter()
                .map(|&i| dynamics_grad(params, &examples[i]))
                .collect::<Result<_>>()?;
            let mut grads = params.zeros_like();
            for (loss, g) in &results {
                total += loss;
                grads.axpy(1.0 / chunk.len() as f64, g);
            }
            sgd_step(params, &grads, cfg.lr, cfg.clip);
        }
        let mean = total / examples.len() as f64;
        info!("dynamics epoch {epoch}: loss {mean:.6}");
        curve.push(mean);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_params, relative_error};
    use crate::pdn::PdnConfig;

    fn example(rng: &mut SeededRng, n: usize, amp_dim: usize, k: usize) -> DynamicsExample {
        let rgb: Vec<f64> = (0..3 * n * n).map(|_| rng.uniform(0.0, 1.0)).collect();
        let mask: Vec<usize> = (0..n * n)
            .map(|_| if rng.uniform(0.0, 1.0) < 0.4 { 1 } else { 0 })
            .collect();
        DynamicsExample {
            image: MaskedImage::from_rgb(n, &rgb, &mask).unwrap(),
            targets: vec![DynamicsTarget {
                plan: 1,
                amps: (0..k).map(|_| rng.uniform_vec(amp_dim, 1.0)).collect(),
                offsets: (0..k).map(|_| rng.uniform(-3.0, 3.0)).collect(),
            }],
        }
    }

    fn small() -> PdnConfig {
        PdnConfig {
            n: 6,
            amp_dim: 4,
            hidden: 5,
            kmax: 3,
            code: 4,
            filter: 3,
            z: 1.0,
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let mut rng = SeededRng::new(seed);
            let p = PdnParams::new(small(), &mut rng).unwrap();
            let ex = example(&mut rng, 6, 4, 3);
            let (_, analytic) = dynamics_grad(&p, &ex).unwrap();
            let numeric = finite_diff_params(&p, |q| dynamics_loss(q, &ex).unwrap(), 1e-5).unwrap();
            let err = relative_error(&analytic, &numeric);
            assert!(err <= 1e-4, "seed {seed}: relative error {err}");
        }
    }

    #[test]
    fn fitting_reduces_loss() {
        let mut rng = SeededRng::new(9);
        let mut p = PdnParams::new(PdnConfig { n: 8, ..small() }, &mut rng).unwrap();
        let data: Vec<_> = (0..12).map(|_| example(&mut rng, 8, 4, 2)).collect();
        let before: f64 = data.iter().map(|e| dynamics_loss(&p, e).unwrap()).sum();
        let curve = fit_dynamics(
            &mut p,
            &data,
            &FitConfig {
                epochs: 15,
                lr: 0.05,
                batch: 4,
                clip: 5.0,
                seed: 1,
            },
        )
        .unwrap();
        let after: f64 = data.iter().map(|e| dynamics_loss(&p, e).unwrap()).sum();
        assert_eq!(curve.len(), 15);
        assert!(after < before, "{after} vs {before}");
        assert!(p.all_finite());
    }

    #[test]
    fn supervision_bands() {
        let mut mask = vec![0usize; 36];
        mask[0] = 1;
        let img = MaskedImage::from_rgb(6, &[0.5; 108], &mask).unwrap();
        let (w, t) = supervision(&img, 1, 7.0, 3);
        assert_eq!((w[0], t[0]), (1.0, 7.0));
        assert_eq!(w[1], 0.0);
        assert_eq!(w[7], 0.0);
        assert_eq!((w[2], t[2]), (1.0, 0.0));
    }
}
