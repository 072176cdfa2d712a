use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use pdn_core::amp::{kmeans_fit, AmpLibrary, RecognizedPlan};
use pdn_core::features::FeatureVector;
use pdn_core::pdn::{generate_prda, pdn_spms};
use pdn_core::pipeline::{
    concentration_ratios, evaluate_system, glimpse_features, load_dataset, observe, observed_trace, recognize_glimpses,
    save_dataset, split_indices, synth_generate, train_er, write_metrics_jsonl, ErSystem, EventSample,
};
use pdn_core::planrec::{recognize_indices, train_affinity, AffinityModel};
use pdn_core::RunConfig;
use serde::{Deserialize, Serialize};

use crate::{Cli, Command, UsageError};

const DEFAULT_OUT: &str = "pdn-out";

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn data_dir(cfg: &RunConfig) -> Result<&Path> {
    cfg.data
        .as_deref()
        .ok_or_else(|| usage("a dataset is required (--data DIR or the `data` config key)"))
}

fn model_dir(cfg: &RunConfig, flag: &Option<PathBuf>) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.model.clone())
        .ok_or_else(|| usage("a trained model is required (--model DIR or the `model` config key)"))
}

fn dataset(cfg: &RunConfig) -> Result<Vec<EventSample>> {
    let dir = data_dir(cfg)?;
    load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn pick(samples: &[EventSample], index: usize) -> Result<&EventSample> {
    samples
        .get(index)
        .with_context(|| format!("sample {index} out of range (dataset has {})", samples.len()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize, Deserialize)]
struct GlimpseLine {
    plan: usize,
    area: usize,
    bbox: [usize; 4],
    features: Vec<FeatureVector>,
}

#[derive(Serialize, Deserialize)]
struct FeatureLine {
    sample: usize,
    label: usize,
    glimpses: Vec<GlimpseLine>,
}

fn extract(samples: &[EventSample], cfg: &RunConfig) -> Result<Vec<FeatureLine>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (_, glimpses) = observe(&s.frames, cfg)?;
            let glimpses = glimpses
                .iter()
                .map(|g| {
                    let r = g.bbox();
                    Ok(GlimpseLine {
                        plan: g.plan,
                        area: g.area(),
                        bbox: [r.x, r.y, r.w, r.h],
                        features: glimpse_features(&s.frames, g, cfg)?,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(FeatureLine {
                sample: i,
                label: s.label,
                glimpses,
            })
        })
        .collect()
}

fn feature_lines(cfg: &RunConfig, file: &Option<PathBuf>) -> Result<Vec<FeatureLine>> {
    match file {
        Some(path) => fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Ok(serde_json::from_str(l)?))
            .collect(),
        None => extract(&dataset(cfg)?, cfg),
    }
}

fn synth(cfg: &RunConfig) -> Result<()> {
    let out = out_dir(cfg)?;
    let samples = synth_generate(&cfg.scene_config(), cfg.seed)?;
    save_dataset(&out, &samples)?;
    println!("wrote {} scenes to {}", samples.len(), out.display());
    Ok(())
}

fn features(cfg: &RunConfig) -> Result<()> {
    let out = out_dir(cfg)?;
    let lines = extract(&dataset(cfg)?, cfg)?;
    let mut text = String::new();
    for l in &lines {
        text += &serde_json::to_string(l)?;
        text.push('\n');
    }
    fs::write(out.join("features.jsonl"), text)?;
    let count: usize = lines.iter().map(|l| l.glimpses.len()).sum();
    println!("wrote features of {count} glimpses over {} samples", lines.len());
    Ok(())
}

fn amp_fit(cfg: &RunConfig, file: &Option<PathBuf>) -> Result<()> {
    let out = out_dir(cfg)?;
    let feats: Vec<FeatureVector> = feature_lines(cfg, file)?
        .into_iter()
        .flat_map(|l| l.glimpses.into_iter().flat_map(|g| g.features))
        .collect();
    let (lib, report) = kmeans_fit(&feats, cfg.clusters, cfg.seed, cfg.kmeans_iter)?;
    let lib = lib.with_distribution_size(cfg.distribution_size);
    lib.save(&out, "amp")?;
    write_json(&out.join("amp_report.json"), &report)?;
    println!(
        "fitted {} primitives to {} vectors in {} iterations",
        lib.clusters(),
        feats.len(),
        report.iterations
    );
    Ok(())
}

fn plan_train(cfg: &RunConfig, amp: &Path, file: &Option<PathBuf>) -> Result<()> {
    let out = out_dir(cfg)?;
    let lib = AmpLibrary::load(amp, "amp").with_context(|| format!("loading library from {}", amp.display()))?;
    let corpus = feature_lines(cfg, file)?
        .iter()
        .flat_map(|l| l.glimpses.iter())
        .map(|g| observed_trace(&g.features, &lib, cfg.distribution_size))
        .collect::<pdn_core::Result<Vec<_>>>()?;
    let (model, log) = train_affinity(&corpus, lib.clusters(), &cfg.affinity_config())?;
    model.save(&out, "affinity")?;
    let mut text = String::new();
    for (epoch, l) in log.epochs.iter().enumerate() {
        text += &serde_json::to_string(&serde_json::json!({
            "epoch": epoch,
            "positive": l.positive,
            "total": l.total,
        }))?;
        text.push('\n');
    }
    fs::write(out.join("plan_log.jsonl"), text)?;
    println!("trained affinities on {} traces", corpus.len());
    Ok(())
}

fn plan_recognize(
    cfg: &RunConfig,
    affinity: &Path,
    amp: &Option<PathBuf>,
    indices: &Option<Vec<usize>>,
    sample: Option<usize>,
) -> Result<()> {
    let out = out_dir(cfg)?;
    let model = AffinityModel::load(affinity, "affinity")
        .with_context(|| format!("loading affinities from {}", affinity.display()))?;
    let plans: Vec<RecognizedPlan> = match (indices, sample) {
        (Some(idx), None) => vec![recognize_indices(&model, idx, cfg.horizon, 1)?],
        (None, Some(i)) => {
            let amp = amp.as_ref().ok_or_else(|| usage("--sample needs --amp DIR"))?;
            let lib = AmpLibrary::load(amp, "amp")?;
            let samples = dataset(cfg)?;
            let s = pick(&samples, i)?;
            let (_, glimpses) = observe(&s.frames, cfg)?;
            recognize_glimpses(&s.frames, &glimpses, &lib, &model, cfg)?
        }
        _ => return Err(usage("give exactly one of --indices or --sample")),
    };
    write_json(&out.join("plans.json"), &plans)?;
    println!("{}", serde_json::to_string(&plans)?);
    Ok(())
}

#[derive(Serialize)]
struct PrdaSummary {
    n: usize,
    plans: usize,
    horizon: usize,
    z: f64,
    prda_sum: f64,
    spm_sums: Vec<u64>,
}

fn prda(cfg: &RunConfig, model: &Option<PathBuf>, sample: usize) -> Result<()> {
    let out = out_dir(cfg)?;
    let sys = ErSystem::load(model_dir(cfg, model)?)?;
    let samples = dataset(cfg)?;
    let s = pick(&samples, sample)?;
    let a = sys.analyze(&s.frames, 1.0)?;
    let masked = match &a.masked {
        Some(m) => m,
        None => bail!("sample {sample} has no glimpse, so no plan drives attention"),
    };
    let spms = pdn_spms(masked, &a.plans, &sys.library, &sys.pdn)?;
    let prda = generate_prda(&spms, sys.config.z)?;
    prda.save_pgm(out.join("prda.pgm"))?;
    prda.save_pdnt(out.join("prda.pdnt"))?;
    for (i, spm) in spms.iter().enumerate() {
        spm.save_pdnt(out.join(format!("spm_{i:03}.pdnt")))?;
    }
    let summary = PrdaSummary {
        n: prda.n(),
        plans: a.plans.len(),
        horizon: sys.config.horizon,
        z: sys.config.z,
        prda_sum: prda.sum(),
        spm_sums: spms.iter().map(|s| s.total()).collect(),
    };
    write_json(&out.join("prda.json"), &summary)?;
    println!(
        "{} plans x {} steps, attention mass {}",
        summary.plans, summary.horizon, summary.prda_sum
    );
    Ok(())
}

fn train(cfg: &RunConfig) -> Result<()> {
    let out = out_dir(cfg)?;
    let samples = dataset(cfg)?;
    let (sys, report) = train_er(&samples, cfg, cfg.seed)?;
    sys.save(out.join("model"))?;
    write_metrics_jsonl(out.join("metrics.jsonl"), &report.metrics)?;
    write_json(
        &out.join("train_report.json"),
        &serde_json::json!({
            "train": report.train,
            "test": report.test,
            "kmeans": report.kmeans,
            "plan_loss": report.plan_log.epochs.iter().map(|e| e.total).collect::<Vec<_>>(),
            "dynamics_loss": report.dynamics_loss,
        }),
    )?;
    if let Some(last) = report.metrics.last() {
        println!("final loss {:.5}, held-out mean AP {:.4}", last.loss, last.mean_ap);
    }
    Ok(())
}

fn eval(cfg: &RunConfig, model: &Option<PathBuf>, all: bool) -> Result<()> {
    let out = out_dir(cfg)?;
    let sys = ErSystem::load(model_dir(cfg, model)?)?;
    let samples = dataset(cfg)?;
    let chosen: Vec<EventSample> = if all {
        samples
    } else {
        let (_, test) = split_indices(samples.len(), sys.config.train_fraction, sys.config.seed)?;
        test.iter().map(|&i| samples[i].clone()).collect()
    };
    let (scores, report) = evaluate_system(&sys, &chosen)?;
    let ratios = concentration_ratios(&sys, &chosen)?;
    let defined: Vec<f64> = ratios.iter().flatten().copied().collect();
    let passing = defined.iter().filter(|&&r| r >= 2.0).count();
    write_json(
        &out.join("eval.json"),
        &serde_json::json!({
            "samples": chosen.len(),
            "per_class_ap": report.per_class,
            "mean_ap": report.mean,
            "concentration": {
                "scenes": ratios.len(),
                "undefined": ratios.len() - defined.len(),
                "at_least_2x": passing,
                "mean_ratio": if defined.is_empty() { 0.0 } else { defined.iter().sum::<f64>() / defined.len() as f64 },
            },
            "scores": scores,
        }),
    )?;
    println!("mean AP {:.4} over {} samples", report.mean, chosen.len());
    Ok(())
}

fn export_map(cfg: &RunConfig, model: &Option<PathBuf>, sample: usize) -> Result<()> {
    let out = out_dir(cfg)?;
    let sys = ErSystem::load(model_dir(cfg, model)?)?;
    let samples = dataset(cfg)?;
    let a = sys.analyze(&pick(&samples, sample)?.frames, sys.config.lambda)?;
    a.bua.save_pgm(out.join("bua.pgm"))?;
    a.bua.save_pdnt(out.join("bua.pdnt"))?;
    a.attention.save_pgm(out.join("attention.pgm"))?;
    a.attention.save_pdnt(out.join("attention.pdnt"))?;
    if let Some(p) = &a.prda {
        p.save_pgm(out.join("prda.pgm"))?;
        p.save_pdnt(out.join("prda.pdnt"))?;
    }
    info!("{} glimpses", a.glimpses.len());
    println!("exported maps of sample {sample} to {}", out.display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.global.resolve()?;
    match &cli.command {
        Command::Synth => synth(&cfg),
        Command::Features => features(&cfg),
        Command::AmpFit { features } => amp_fit(&cfg, features),
        Command::PlanTrain { amp, features } => plan_train(&cfg, amp, features),
        Command::PlanRecognize {
            affinity,
            amp,
            indices,
            sample,
        } => plan_recognize(&cfg, affinity, amp, indices, *sample),
        Command::Prda { model, sample } => prda(&cfg, model, *sample),
        Command::Train => train(&cfg),
        Command::Eval { model, all } => eval(&cfg, model, *all),
        Command::ExportMap { model, sample } => export_map(&cfg, model, *sample),
    }
}
