use log::debug;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;

use crate::amp::PlanTrace;
use crate::error::{invalid, Result};
use crate::numerics::{sigmoid_scalar, SeededRng, Tensor};

use super::{AffinityConfig, AffinityModel};

/// Per-epoch losses measured after each pass over the corpus.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<AffinityLoss>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AffinityLoss {
    /// Expected positive-pair term, averaged over pairs.
    pub positive: f64,
    /// Positive plus sampled negative terms, averaged over pairs.
    pub total: f64,
}

/// Negative sampler over the unigram distribution raised to 0.75.
struct Sampler {
    dist: Option<WeightedIndex<f64>>,
}

impl Sampler {
    fn new(corpus: &[PlanTrace], vocab: usize) -> Self {
        let mut counts = vec![0.0; vocab];
        for t in corpus {
            for d in t.steps() {
                for &(i, p) in d.entries() {
                    counts[i] += p;
                }
            }
        }
        let weights: Vec<f64> = counts.iter().map(|c| c.powf(0.75)).collect();
        Self {
            dist: WeightedIndex::new(&weights).ok(),
        }
    }

    fn draw(&self, rng: &mut SeededRng) -> Option<usize> {
        self.dist.as_ref().map(|d| d.sample(rng))
    }
}

fn check_corpus(corpus: &[PlanTrace], vocab: usize) -> Result<()> {
    if corpus.is_empty() {
        return Err(invalid("empty training corpus"));
    }
    if let Some(t) = corpus.iter().find(|t| t.max_index() >= vocab) {
        return Err(invalid(format!(
            "primitive {} outside vocabulary of {vocab}",
            t.max_index()
        )));
    }
    Ok(())
}

/// Visits every (center, context) step pair: context steps follow the center
/// by 1..=window positions.
fn for_each_pair(trace: &PlanTrace, window: usize, mut f: impl FnMut(usize, usize)) {
    let n = trace.len();
    for t in 0..n {
        for u in t + 1..=(t + window).min(n - 1) {
            f(t, u);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Log-sigmoid without overflow: `ln σ(x)`.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// One weighted skip-gram update for primitive `i` predicting `j`.
#[allow(clippy::too_many_arguments)]
fn update(
    input: &mut Tensor,
    output: &mut Tensor,
    i: usize,
    j: usize,
    weight: f64,
    lr: f64,
    negatives: &[usize],
    grad_u: &mut [f64],
) {
    grad_u.iter_mut().for_each(|g| *g = 0.0);
    let step = |target: usize, label: f64, input: &Tensor, output: &mut Tensor, grad_u: &mut [f64]| {
        let u = input.row(i);
        let s = dot(u, output.row(target));
        let g = weight * (sigmoid_scalar(s) - label);
        let v = output.row_mut(target);
        for ((gu, vk), uk) in grad_u.iter_mut().zip(v.iter_mut()).zip(u) {
            *gu += g * *vk;
            *vk -= lr * g * uk;
        }
    };
    step(j, 1.0, input, output, grad_u);
    for &n in negatives {
        if n != j {
            step(n, 0.0, input, output, grad_u);
        }
    }
    for (uk, gk) in input.row_mut(i).iter_mut().zip(grad_u.iter()) {
        *uk -= lr * gk;
    }
}

/// Trains an affinity model over a corpus of primitive-distribution traces.
pub fn train_affinity(corpus: &[PlanTrace], vocab: usize, cfg: &AffinityConfig) -> Result<(AffinityModel, TrainLog)> {
    check_corpus(corpus, vocab)?;
    let mut model = AffinityModel::initial(vocab, cfg)?;
    let sampler = Sampler::new(corpus, vocab);
    // The model's initial tables consumed a stream seeded with `cfg.seed`;
    // training draws from a separate stream so the two never alias.
    let mut rng = SeededRng::new(cfg.seed ^ 0x5eed_a11f_1417_0001);
    let centers: usize = corpus.iter().map(|t| t.len()).sum();
    let total_steps = (centers * cfg.epochs).max(1) as f64;
    let mut done = 0usize;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut grad_u = vec![0.0; cfg.dim];
    let mut negs = Vec::with_capacity(cfg.negatives);
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &ti in &order {
            let trace = &corpus[ti];
            for t in 0..trace.len() {
                let lr = cfg.lr * (1.0 - done as f64 / total_steps).max(1e-4);
                done += 1;
                for u in t + 1..=(t + cfg.window).min(trace.len() - 1) {
                    for &(i, pi) in trace.steps()[t].entries() {
                        for &(j, pj) in trace.steps()[u].entries() {
                            negs.clear();
                            negs.extend((0..cfg.negatives).filter_map(|_| sampler.draw(&mut rng)));
                            let (input, output) = model.tables_mut();
                            update(input, output, i, j, pi * pj, lr, &negs, &mut grad_u);
                        }
                    }
                }
            }
        }
        let loss = evaluate_loss(&model, corpus, cfg.negatives, cfg.seed)?;
        debug!(
            "affinity epoch {epoch}: positive {:.6} total {:.6}",
            loss.positive, loss.total
        );
        log.epochs.push(loss);
    }
    Ok((model, log))
}

/// Expected skip-gram loss of `model` on `corpus`, with negatives drawn from
/// a fixed stream so repeated evaluations are comparable.
pub fn evaluate_loss(model: &AffinityModel, corpus: &[PlanTrace], negatives: usize, seed: u64) -> Result<AffinityLoss> {
    check_corpus(corpus, model.vocab())?;
    let sampler = Sampler::new(corpus, model.vocab());
    let mut rng = SeededRng::new(seed ^ 0xe7a1_0055);
    let (input, output) = (model.input(), model.output());
    let mut pos = 0.0;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for trace in corpus {
        for_each_pair(trace, model.window(), |t, u| {
            pairs += 1;
            for &(i, pi) in trace.steps()[t].entries() {
                for &(j, pj) in trace.steps()[u].entries() {
                    let w = pi * pj;
                    let p = -w * log_sigmoid(dot(input.row(i), output.row(j)));
                    pos += p;
                    total += p;
                    for _ in 0..negatives {
                        if let Some(n) = sampler.draw(&mut rng) {
                            if n != j {
                                total -= w * log_sigmoid(-dot(input.row(i), output.row(n)));
                            }
                        }
                    }
                }
            }
        });
    }
    let denom = pairs.max(1) as f64;
    Ok(AffinityLoss {
        positive: pos / denom,
        total: total / denom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amp::AmpDistribution;

    fn grammar(traces: usize, seed: u64) -> Vec<PlanTrace> {
        let mut rng = SeededRng::new(seed);
        let cycles = [[0, 1, 2, 3], [4, 5, 6, 7]];
        (0..traces)
            .map(|_| {
                let c = &cycles[rng.below(2)];
                let s = rng.below(4);
                let steps = (0..8)
                    .map(|t| {
                        let main = c[(s + t) % 4];
                        let q = rng.uniform(0.6, 0.9);
                        AmpDistribution::new(vec![(main, q), (8 + rng.below(2), 1.0 - q)]).unwrap()
                    })
                    .collect();
                PlanTrace::new(steps).unwrap()
            })
            .collect()
    }

    #[test]
    fn single_symbol_positive_loss_decreases() {
        let corpus = vec![PlanTrace::from_indices(&[0; 12]).unwrap(); 4];
        let cfg = AffinityConfig {
            epochs: 10,
            ..Default::default()
        };
        let (_, log) = train_affinity(&corpus, 1, &cfg).unwrap();
        for w in log.epochs.windows(2) {
            assert!(w[1].positive < w[0].positive, "{:?}", log.epochs);
        }
    }

    #[test]
    fn held_out_loss_drops() {
        let cfg = AffinityConfig {
            dim: 16,
            epochs: 20,
            seed: 5,
            ..Default::default()
        };
        let train = grammar(80, 1);
        let held = grammar(20, 2);
        let before = evaluate_loss(&AffinityModel::initial(10, &cfg).unwrap(), &held, 5, 9).unwrap();
        let (m, _) = train_affinity(&train, 10, &cfg).unwrap();
        let after = evaluate_loss(&m, &held, 5, 9).unwrap();
        assert!(after.total < before.total, "{after:?} vs {before:?}");
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = AffinityConfig {
            dim: 8,
            epochs: 4,
            seed: 11,
            ..Default::default()
        };
        let corpus = grammar(30, 3);
        let a = train_affinity(&corpus, 10, &cfg).unwrap();
        let b = train_affinity(&corpus, 10, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = train_affinity(&corpus, 10, &AffinityConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn rejects_bad_corpora() {
        let cfg = AffinityConfig::default();
        assert!(train_affinity(&[], 4, &cfg).is_err());
        let t = vec![PlanTrace::from_indices(&[0, 4]).unwrap()];
        assert!(train_affinity(&t, 4, &cfg).is_err());
        assert!(train_affinity(&t, 5, &AffinityConfig { dim: 0, ..cfg }).is_err());
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!(log_sigmoid(-800.0).is_finite());
        assert!(log_sigmoid(800.0) == 0.0);
    }
}
