//! Plan recognition from primitive-distribution traces.
//!
//! An affinity model holds two embedding tables over the primitive
//! vocabulary. Training is skip-gram with negative sampling where both ends
//! of a pair are distributions, so each pair contributes its loss weighted by
//! the product of the two probabilities. Recognition extends an observed
//! trace greedily, one primitive at a time.

mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::amp::{AmpDistribution, PlanTrace, RecognizedPlan};
use crate::error::{invalid, Error, Result};
use crate::numerics::{load_tensor, save_tensor, SeededRng, Tensor};

pub use train::{evaluate_loss, train_affinity, AffinityLoss, TrainLog};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffinityConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub lr: f64,
    pub negatives: usize,
    pub seed: u64,
}

impl Default for AffinityConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            window: 2,
            epochs: 60,
            lr: 0.05,
            negatives: 5,
            seed: 0,
        }
    }
}

/// Input and output embeddings, one row per primitive.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityModel {
    input: Tensor,
    output: Tensor,
    window: usize,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    vocab: usize,
    dim: usize,
    window: usize,
    seed: u64,
    input: String,
    output: String,
}

impl AffinityModel {
    pub fn from_parts(input: Tensor, output: Tensor, window: usize, seed: u64) -> Result<Self> {
        if input.rank() != 2 || input.shape() != output.shape() {
            return Err(invalid(format!(
                "embedding tables must be equal matrices, got {:?} and {:?}",
                input.shape(),
                output.shape()
            )));
        }
        if window == 0 {
            return Err(invalid("context window must be positive"));
        }
        if !input.is_finite() || !output.is_finite() {
            return Err(Error::NonFinite("AffinityModel::from_parts"));
        }
        Ok(Self {
            input,
            output,
            window,
            seed,
        })
    }

    /// The untrained model: inputs uniform in `±1/sqrt(dim)`, outputs zero.
    pub fn initial(vocab: usize, cfg: &AffinityConfig) -> Result<Self> {
        if vocab == 0 || cfg.dim == 0 {
            return Err(invalid("vocabulary and embedding dimension must be positive"));
        }
        let mut rng = SeededRng::new(cfg.seed);
        let s = 1.0 / (cfg.dim as f64).sqrt();
        let input = Tensor::new(vec![vocab, cfg.dim], rng.uniform_vec(vocab * cfg.dim, s))?;
        Self::from_parts(input, Tensor::zeros(&[vocab, cfg.dim]), cfg.window, cfg.seed)
    }

    pub fn vocab(&self) -> usize {
        self.input.rows()
    }

    pub fn dim(&self) -> usize {
        self.input.cols()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input(&self) -> &Tensor {
        &self.input
    }

    pub fn output(&self) -> &Tensor {
        &self.output
    }

    pub(crate) fn tables_mut(&mut self) -> (&mut Tensor, &mut Tensor) {
        (&mut self.input, &mut self.output)
    }

    /// Multiplies both tables by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_parts(
            self.input.map(|v| v * factor),
            self.output.map(|v| v * factor),
            self.window,
            self.seed,
        )
    }

    /// Probability-weighted mean of the input embeddings of `d`.
    pub fn expected_input(&self, d: &AmpDistribution) -> Result<Vec<f64>> {
        let mut e = vec![0.0; self.dim()];
        for &(idx, p) in d.entries() {
            if idx >= self.vocab() {
                return Err(invalid(format!(
                    "primitive {idx} outside vocabulary of {}",
                    self.vocab()
                )));
            }
            for (acc, v) in e.iter_mut().zip(self.input.row(idx)) {
                *acc += p * v;
            }
        }
        Ok(e)
    }

    /// Mean cosine between each context vector and the output embedding of
    /// `candidate`. Primitives never seen as context during training keep a
    /// zero output embedding and score negative infinity.
    pub fn score(&self, context: &[Vec<f64>], candidate: usize) -> f64 {
        let v = self.output.row(candidate);
        if v.iter().all(|&x| x == 0.0) {
            return f64::NEG_INFINITY;
        }
        context.iter().map(|e| cosine(e, v)).sum::<f64>() / context.len() as f64
    }

    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let header = ModelHeader {
            vocab: self.vocab(),
            dim: self.dim(),
            window: self.window,
            seed: self.seed,
            input: format!("{stem}_input.pdnt"),
            output: format!("{stem}_output.pdnt"),
        };
        save_tensor(dir.join(&header.input), &self.input)?;
        save_tensor(dir.join(&header.output), &self.output)?;
        fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&header)? + "\n",
        )?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>, stem: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let header: ModelHeader = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let input = load_tensor(dir.join(&header.input))?;
        let output = load_tensor(dir.join(&header.output))?;
        if input.shape() != [header.vocab, header.dim] {
            return Err(Error::Format(format!(
                "embedding table {:?} disagrees with header {}x{}",
                input.shape(),
                header.vocab,
                header.dim
            )));
        }
        Self::from_parts(input, output, header.window, header.seed)
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Predicts `k` future primitives after `obs`.
///
/// Each step scores every vocabulary entry against the expected input
/// embeddings of the last `window` trace elements and appends the best one
/// (lowest index on ties) as a point mass.
pub fn recognize(model: &AffinityModel, obs: &PlanTrace, k: usize, plan: usize) -> Result<RecognizedPlan> {
    if k == 0 {
        return Err(invalid("plan horizon must be positive"));
    }
    let mut context: Vec<Vec<f64>> = obs
        .steps()
        .iter()
        .map(|d| model.expected_input(d))
        .collect::<Result<_>>()?;
    let mut steps = Vec::with_capacity(k);
    for _ in 0..k {
        let recent = &context[context.len().saturating_sub(model.window())..];
        let mut best = (0, f64::NEG_INFINITY);
        for x in 0..model.vocab() {
            let s = model.score(recent, x);
            if s > best.1 {
                best = (x, s);
            }
        }
        steps.push(best.0);
        context.push(model.input.row(best.0).to_vec());
    }
    RecognizedPlan::new(plan, steps)
}

/// [`recognize`] on an observation of single primitive indices.
pub fn recognize_indices(model: &AffinityModel, obs: &[usize], k: usize, plan: usize) -> Result<RecognizedPlan> {
    recognize(model, &PlanTrace::from_indices(obs)?, k, plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cycle_corpus(cycle: &[usize], traces: usize, len: usize, seed: u64) -> Vec<PlanTrace> {
        let mut rng = SeededRng::new(seed);
        (0..traces)
            .map(|_| {
                let start = rng.below(cycle.len());
                let idx: Vec<usize> = (0..len).map(|t| cycle[(start + t) % cycle.len()]).collect();
                PlanTrace::from_indices(&idx).unwrap()
            })
            .collect()
    }

    fn trained_abc() -> AffinityModel {
        let mut corpus = cycle_corpus(&[0, 1, 2], 60, 9, 3);
        corpus.extend(cycle_corpus(&[3, 4, 5], 60, 9, 4));
        let cfg = AffinityConfig {
            dim: 16,
            epochs: 30,
            ..AffinityConfig::default()
        };
        train_affinity(&corpus, 7, &cfg).unwrap().0
    }

    #[test]
    fn cycle_context_similarity() {
        let m = trained_abc();
        assert_eq!(m.score(&[m.input().row(0).to_vec()], 6), f64::NEG_INFINITY);
        let b = m.input().row(1).to_vec();
        let to_c = cosine(&b, m.output().row(2));
        for d in 3..6 {
            assert!(to_c > cosine(&b, m.output().row(d)), "b->c should beat b->{d}");
        }
    }

    #[test]
    fn recognizes_next_in_cycle() {
        let m = trained_abc();
        let p = recognize_indices(&m, &[0, 1], 1, 1).unwrap();
        // Exhaustive oracle over the vocabulary.
        let ctx = vec![m.input().row(0).to_vec(), m.input().row(1).to_vec()];
        let oracle = (0..m.vocab())
            .max_by(|&a, &b| m.score(&ctx, a).total_cmp(&m.score(&ctx, b)).then(b.cmp(&a)))
            .unwrap();
        assert_eq!(p.steps, vec![oracle]);
        assert_eq!(p.steps, vec![2]);
        let long = recognize_indices(&m, &[0, 1], 5, 1).unwrap();
        assert_eq!(long.steps, vec![2, 0, 1, 2, 0]);
    }

    #[test]
    fn single_symbol_vocabulary() {
        let corpus = vec![PlanTrace::from_indices(&[0, 0, 0]).unwrap()];
        let (m, _) = train_affinity(
            &corpus,
            1,
            &AffinityConfig {
                epochs: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(recognize_indices(&m, &[0], 4, 2).unwrap().steps, vec![0; 4]);
    }

    #[test]
    fn point_masses_match_plain_indices() {
        let m = trained_abc();
        let dist = PlanTrace::new(vec![AmpDistribution::point(2), AmpDistribution::point(0)]).unwrap();
        assert_eq!(
            recognize(&m, &dist, 4, 1).unwrap(),
            recognize_indices(&m, &[2, 0], 4, 1).unwrap()
        );
    }

    #[test]
    fn recognition_errors() {
        let m = trained_abc();
        assert!(recognize_indices(&m, &[0], 0, 1).is_err());
        assert!(recognize_indices(&m, &[9], 1, 1).is_err());
        assert!(recognize_indices(&m, &[0], 1, 0).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = trained_abc();
        m.save(dir.path(), "affinity").unwrap();
        assert_eq!(AffinityModel::load(dir.path(), "affinity").unwrap(), m);
    }

    #[test]
    fn cosine_of_zero_is_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
        assert!((cosine(&[1.0, 0.0], &[2.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn output_shape_and_range(seed in any::<u64>(), k in 1usize..8, len in 1usize..5) {
            let cfg = AffinityConfig { dim: 8, epochs: 2, seed, ..Default::default() };
            let corpus = cycle_corpus(&[0, 3, 5, 1], 10, 6, seed);
            let (m, _) = train_affinity(&corpus, 7, &cfg).unwrap();
            let mut rng = SeededRng::new(seed);
            let obs: Vec<usize> = (0..len).map(|_| rng.below(7)).collect();
            let p = recognize_indices(&m, &obs, k, 1).unwrap();
            prop_assert!(p.validate(7, k).is_ok());
        }

        #[test]
        fn scaling_invariance(seed in any::<u64>(), factor in 0.01f64..100.0) {
            let mut rng = SeededRng::new(seed);
            let input = Tensor::new(vec![6, 4], rng.uniform_vec(24, 1.0)).unwrap();
            let output = Tensor::new(vec![6, 4], rng.uniform_vec(24, 1.0)).unwrap();
            let m = AffinityModel::from_parts(input, output, 2, 0).unwrap();
            let obs = [rng.below(6), rng.below(6), rng.below(6)];
            prop_assert_eq!(
                recognize_indices(&m, &obs, 5, 1).unwrap(),
                recognize_indices(&m.scaled(factor).unwrap(), &obs, 5, 1).unwrap()
            );
        }
    }
}
