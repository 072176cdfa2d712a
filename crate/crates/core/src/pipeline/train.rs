use std::fs;
use std::io::Write;
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amp::{kmeans_fit, AmpLibrary, KmeansReport};
use crate::config::RunConfig;
use crate::error::{invalid, Result};
use crate::features::FeatureVector;
use crate::numerics::{sgd_step, SeededRng};
use crate::pdn::{fit_dynamics, plan_vectors, DynamicsExample, DynamicsTarget, PdnParams};
use crate::planrec::{train_affinity, TrainLog};

use super::system::{glimpse_features, masked_from_glimpses, observe, observed_trace, recognize_glimpses};
use super::{
    classifier_loss_grad, classify_event, evaluate_map, prda_concentration, ClassifierParams, ClassifierShape,
    ErSystem, EventSample, Glimpse, MapReport, BATCH_FRAMES, CLASS_NAMES,
};

const SPLIT_STREAM: u64 = 0x5b11_7000;
const PDN_STREAM: u64 = 0x9d17_0001;
const CLASSIFIER_STREAM: u64 = 0xc1a5_0002;
const EPOCH_STREAM: u64 = 0xe90c_0003;
const CLIP: f64 = 5.0;

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean cross-entropy over the training split after the epoch.
    pub loss: f64,
    /// Mean AP on the held-out split after the epoch.
    pub mean_ap: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub metrics: Vec<EpochMetrics>,
    pub kmeans: KmeansReport,
    pub plan_log: TrainLog,
    pub dynamics_loss: Vec<f64>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..len` cut at `round(len * fraction)`; both parts are
/// returned sorted.
pub fn split_indices(len: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut SeededRng::new(seed ^ SPLIT_STREAM));
    let cut = (len as f64 * fraction).round() as usize;
    let (mut a, mut b) = (idx[..cut.min(len)].to_vec(), idx[cut.min(len)..].to_vec());
    if a.is_empty() || b.is_empty() {
        return Err(invalid(format!("a {len}-sample dataset leaves an empty split")));
    }
    a.sort_unstable();
    b.sort_unstable();
    Ok((a, b))
}

struct Observed {
    glimpses: Vec<Glimpse>,
    features: Vec<Vec<FeatureVector>>,
}

fn observe_all(samples: &[&EventSample], cfg: &RunConfig) -> Result<Vec<Observed>> {
    samples
        .par_iter()
        .map(|s| {
            let (_, glimpses) = observe(&s.frames, cfg)?;
            let features = glimpses
                .iter()
                .map(|g| glimpse_features(&s.frames, g, cfg))
                .collect::<Result<_>>()?;
            Ok(Observed { glimpses, features })
        })
        .collect()
}

/// Supervision for the dynamics fit: each glimpse follows the agent whose
/// second-frame centre is closest to the glimpse centroid, and step `k`
/// targets that agent's displacement from the second frame to frame `4 + k`
/// as a flat-index offset. `None` without ground truth.
pub fn dynamics_example(
    sample: &EventSample,
    glimpses: &[Glimpse],
    plans: &[crate::amp::RecognizedPlan],
    lib: &AmpLibrary,
    n: usize,
) -> Result<Option<DynamicsExample>> {
    if glimpses.is_empty() || sample.trajectories.is_empty() {
        return Ok(None);
    }
    let horizon = plans.first().map_or(0, |p| p.horizon());
    if sample.trajectories.iter().any(|t| t.len() < BATCH_FRAMES + horizon) {
        return Ok(None);
    }
    let mut targets = Vec::with_capacity(glimpses.len());
    for (g, plan) in glimpses.iter().zip(plans) {
        let (cr, cc) = g.centroid();
        let agent = sample
            .trajectories
            .iter()
            .min_by(|a, b| {
                let d = |t: &Vec<(usize, usize)>| (t[1].0 as f64 - cr).powi(2) + (t[1].1 as f64 - cc).powi(2);
                d(a).total_cmp(&d(b))
            })
            .expect("nonempty");
        let (r1, c1) = (agent[1].0 as f64, agent[1].1 as f64);
        let offsets = (0..horizon)
            .map(|k| {
                let (r, c) = agent[BATCH_FRAMES + k];
                -((r as f64 - r1) * n as f64 + (c as f64 - c1))
            })
            .collect();
        targets.push(DynamicsTarget {
            plan: g.plan,
            amps: plan_vectors(plan, lib)?,
            offsets,
        });
    }
    Ok(Some(DynamicsExample {
        image: masked_from_glimpses(&sample.frames, glimpses, n)?,
        targets,
    }))
}

fn class_count(dataset: &[EventSample]) -> usize {
    dataset
        .iter()
        .map(|s| s.label + 1)
        .max()
        .unwrap_or(0)
        .max(CLASS_NAMES.len())
}

fn mean_loss(features: &[Vec<Vec<f64>>], labels: &[usize], p: &ClassifierParams) -> Result<f64> {
    let losses = features
        .par_iter()
        .zip(labels.par_iter())
        .map(|(x, &l)| Ok(-classify_event(x, p)?[l].max(f64::MIN_POSITIVE).ln()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

fn scores_of(features: &[Vec<Vec<f64>>], p: &ClassifierParams) -> Result<Vec<Vec<f64>>> {
    features.par_iter().map(|x| classify_event(x, p)).collect()
}

/// Trains the whole recognizer on a 70/30-style split of `dataset`:
/// primitive library, plan affinities, pixel dynamics (when `lambda > 0`
/// and ground truth exists), then the event classifier.
pub fn train_er(dataset: &[EventSample], cfg: &RunConfig, seed: u64) -> Result<(ErSystem, TrainReport)> {
    let cfg = RunConfig { seed, ..cfg.clone() };
    cfg.validate()?;
    let (train, test) = split_indices(dataset.len(), cfg.train_fraction, seed)?;
    let train_set: Vec<&EventSample> = train.iter().map(|&i| &dataset[i]).collect();

    let observed = observe_all(&train_set, &cfg)?;
    let all_features: Vec<FeatureVector> = observed
        .iter()
        .flat_map(|o| o.features.iter().flatten().cloned())
        .collect();
    info!(
        "fitting {} primitives to {} feature vectors",
        cfg.clusters,
        all_features.len()
    );
    let (library, kmeans) = kmeans_fit(&all_features, cfg.clusters, seed, cfg.kmeans_iter)?;
    let library = library.with_distribution_size(cfg.distribution_size);

    let corpus = observed
        .iter()
        .flat_map(|o| o.features.iter())
        .map(|f| observed_trace(f, &library, cfg.distribution_size))
        .collect::<Result<Vec<_>>>()?;
    let (affinity, plan_log) = train_affinity(&corpus, library.clusters(), &cfg.affinity_config())?;

    let mut pdn = PdnParams::new(
        cfg.pdn_config(library.feature_len())?,
        &mut SeededRng::new(seed ^ PDN_STREAM),
    )?;
    let mut dynamics_loss = Vec::new();
    if cfg.lambda > 0.0 && cfg.dynamics_epochs > 0 {
        let examples: Vec<DynamicsExample> = train_set
            .par_iter()
            .zip(observed.par_iter())
            .map(|(s, o)| {
                let plans = recognize_glimpses(&s.frames, &o.glimpses, &library, &affinity, &cfg)?;
                dynamics_example(s, &o.glimpses, &plans, &library, cfg.n)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        if !examples.is_empty() {
            info!("fitting pixel dynamics on {} scenes", examples.len());
            dynamics_loss = fit_dynamics(&mut pdn, &examples, &cfg.fit_config())?;
        }
    }

    let shape = ClassifierShape {
        inputs: (cfg.n / cfg.er_pool).pow(2),
        proj: cfg.er_proj,
        hidden: cfg.er_hidden,
        classes: class_count(dataset),
    };
    let mut system = ErSystem {
        classifier: ClassifierParams::new(shape, &mut SeededRng::new(seed ^ CLASSIFIER_STREAM))?,
        config: cfg.clone(),
        library,
        affinity,
        pdn,
    };

    let feats = |idx: &[usize]| -> Result<Vec<Vec<Vec<f64>>>> {
        idx.par_iter()
            .map(|&i| system.features(&dataset[i].frames, cfg.lambda))
            .collect()
    };
    let train_x = feats(&train)?;
    let test_x = feats(&test)?;
    let train_y: Vec<usize> = train.iter().map(|&i| dataset[i].label).collect();
    let test_y: Vec<usize> = test.iter().map(|&i| dataset[i].label).collect();

    let mut rng = SeededRng::new(seed ^ EPOCH_STREAM);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.er_epochs);
    for epoch in 0..cfg.er_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (_, g) = classifier_loss_grad(&train_x[i], train_y[i], &system.classifier)?;
            sgd_step(&mut system.classifier, &g, cfg.er_lr, CLIP);
        }
        let loss = mean_loss(&train_x, &train_y, &system.classifier)?;
        let mean_ap = evaluate_map(&scores_of(&test_x, &system.classifier)?, &test_y)?.mean;
        info!("epoch {epoch}: loss {loss:.5}, held-out mean AP {mean_ap:.4}");
        metrics.push(EpochMetrics { epoch, loss, mean_ap });
    }

    Ok((
        system,
        TrainReport {
            metrics,
            kmeans,
            plan_log,
            dynamics_loss,
            train,
            test,
        },
    ))
}

/// Class scores and AP report of `system` on `samples`.
pub fn evaluate_system(system: &ErSystem, samples: &[EventSample]) -> Result<(Vec<Vec<f64>>, MapReport)> {
    let scores = samples
        .par_iter()
        .map(|s| system.predict(&s.frames))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let report = evaluate_map(&scores, &labels)?;
    Ok((scores, report))
}

/// Trajectory-to-background PRDA ratio per sample; `None` when the scene
/// has no glimpse or no ground truth.
pub fn concentration_ratios(system: &ErSystem, samples: &[EventSample]) -> Result<Vec<Option<f64>>> {
    samples
        .par_iter()
        .map(|s| {
            let cells = s.future_cells();
            if cells.is_empty() {
                return Ok(None);
            }
            let a = system.analyze(&s.frames, 1.0)?;
            Ok(a.prda.and_then(|p| prda_concentration(&p, &cells)))
        })
        .collect()
}

pub fn write_metrics_jsonl(path: impl AsRef<Path>, metrics: &[EpochMetrics]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for m in metrics {
        writeln!(f, "{}", serde_json::to_string(m)?)?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{synth_generate, SceneConfig};

    fn tiny_config() -> RunConfig {
        RunConfig {
            samples: 40,
            clusters: 12,
            plan_epochs: 10,
            plan_dim: 8,
            pdn_hidden: 8,
            pdn_kmax: 4,
            pdn_code: 4,
            dynamics_epochs: 1,
            er_epochs: 6,
            er_proj: 8,
            er_hidden: 8,
            ..RunConfig::default()
        }
    }

    fn data(cfg: &RunConfig) -> Vec<EventSample> {
        synth_generate(&cfg.scene_config(), 21).unwrap()
    }

    #[test]
    fn split_is_seeded_and_complete() {
        let (a, b) = split_indices(10, 0.7, 3).unwrap();
        assert_eq!((a.len(), b.len()), (7, 3));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(10, 0.7, 3).unwrap(), (a, b));
        assert!(split_indices(1, 0.7, 3).is_err());
    }

    #[test]
    fn loss_drops_and_runs_repeat() {
        let cfg = tiny_config();
        let d = data(&cfg);
        let (sys, rep) = train_er(&d, &cfg, 5).unwrap();
        let losses: Vec<f64> = rep.metrics.iter().map(|m| m.loss).collect();
        assert!(losses[..5].windows(2).all(|w| w[1] < w[0]), "{losses:?}");
        let (_, again) = train_er(&d, &cfg, 5).unwrap();
        assert_eq!(again.metrics, rep.metrics);
        assert!(!rep.dynamics_loss.is_empty());

        let dir = tempfile::tempdir().unwrap();
        sys.save(dir.path()).unwrap();
        let back = ErSystem::load(dir.path()).unwrap();
        let s = &d[rep.test[0]];
        assert_eq!(back.predict(&s.frames).unwrap(), sys.predict(&s.frames).unwrap());
    }

    #[test]
    fn metrics_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let m = vec![
            EpochMetrics {
                epoch: 0,
                loss: 1.5,
                mean_ap: 0.25,
            },
            EpochMetrics {
                epoch: 1,
                loss: 1.25,
                mean_ap: 0.5,
            },
        ];
        write_metrics_jsonl(&path, &m).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let back: Vec<EpochMetrics> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(back, m);
    }

    #[test]
    fn scene_with_no_ground_truth_has_no_dynamics_example() {
        let cfg = tiny_config();
        let mut s = synth_generate(
            &SceneConfig {
                samples: 1,
                ..cfg.scene_config()
            },
            1,
        )
        .unwrap()
        .remove(0);
        s.trajectories.clear();
        let lib = AmpLibrary::new(vec![vec![0.0; 32], vec![1.0; 32]], crate::features::FeatureKind::Hod, 0).unwrap();
        let (_, g) = observe(&s.frames, &cfg).unwrap();
        assert!(dynamics_example(&s, &g, &[], &lib, cfg.n).unwrap().is_none());
    }
}
