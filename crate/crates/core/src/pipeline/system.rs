use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::amp::{assign_distribution, AmpLibrary, PlanTrace, RecognizedPlan};
use crate::config::RunConfig;
use crate::error::{invalid, Result};
use crate::features::{tube_features, FeatureVector, Frame, VideoTube};
use crate::pdn::{build_masked_image, pdn_forward, MaskedImage, PdnParams, PrdaMap, Region};
use crate::planrec::{recognize, AffinityModel};

use super::{
    attended_features, classify_event, combine_attention, compute_bua_with, segment_glimpses, AttentionMap,
    ClassifierParams, Glimpse, BATCH_FRAMES,
};

/// Smallest tube side around a glimpse.
const TUBE_MIN_SIDE: usize = 16;

/// Everything the recognizer needs after training.
#[derive(Clone, Debug)]
pub struct ErSystem {
    pub config: RunConfig,
    pub library: AmpLibrary,
    pub affinity: AffinityModel,
    pub pdn: PdnParams,
    pub classifier: ClassifierParams,
}

/// Intermediate maps of one frame batch.
#[derive(Clone, Debug)]
pub struct SceneAnalysis {
    pub bua: AttentionMap,
    pub glimpses: Vec<Glimpse>,
    pub plans: Vec<RecognizedPlan>,
    pub masked: Option<MaskedImage>,
    pub prda: Option<PrdaMap>,
    pub attention: AttentionMap,
}

fn check_batch(frames: &[Frame], n: usize) -> Result<()> {
    if frames.len() != BATCH_FRAMES {
        return Err(invalid(format!("expected {BATCH_FRAMES} frames, got {}", frames.len())));
    }
    if frames.iter().any(|f| f.height() != n || f.width() != n) {
        return Err(invalid(format!("frames must be {n}x{n}")));
    }
    Ok(())
}

/// Bottom-up map of the first frame pair and its glimpses.
pub fn observe(frames: &[Frame], cfg: &RunConfig) -> Result<(AttentionMap, Vec<Glimpse>)> {
    check_batch(frames, cfg.n)?;
    let bua = compute_bua_with(&frames[1], &frames[0], cfg.bua_sigma)?;
    let glimpses = segment_glimpses(&bua, cfg.glimpse_threshold, cfg.glimpse_min_area)?;
    Ok((bua, glimpses))
}

/// Motion features of the tube around `g` over the whole batch.
pub fn glimpse_features(frames: &[Frame], g: &Glimpse, cfg: &RunConfig) -> Result<Vec<FeatureVector>> {
    let rect = g.bbox().expanded(TUBE_MIN_SIDE, cfg.hog_cell, cfg.n, cfg.n);
    let tube = VideoTube::new(frames.to_vec(), rect)?;
    tube_features(&tube, cfg.feature, &cfg.feature_params())
}

pub fn observed_trace(features: &[FeatureVector], lib: &AmpLibrary, size: usize) -> Result<PlanTrace> {
    PlanTrace::new(
        features
            .iter()
            .map(|f| assign_distribution(f, lib, size))
            .collect::<Result<_>>()?,
    )
}

/// Per-glimpse recognized plans, in glimpse order.
pub fn recognize_glimpses(
    frames: &[Frame],
    glimpses: &[Glimpse],
    lib: &AmpLibrary,
    affinity: &AffinityModel,
    cfg: &RunConfig,
) -> Result<Vec<RecognizedPlan>> {
    glimpses
        .par_iter()
        .map(|g| {
            let trace = observed_trace(&glimpse_features(frames, g, cfg)?, lib, cfg.distribution_size)?;
            recognize(affinity, &trace, cfg.horizon, g.plan)
        })
        .collect()
}

/// Masked image over the second batch frame with one code per glimpse.
pub fn masked_from_glimpses(frames: &[Frame], glimpses: &[Glimpse], n: usize) -> Result<MaskedImage> {
    let regions: Vec<Region> = glimpses
        .iter()
        .map(|g| Region {
            pixels: g.pixels.clone(),
            plan: g.plan,
        })
        .collect();
    build_masked_image(&frames[1], n, &regions)
}

impl ErSystem {
    /// Runs the attention stages on one batch with the given PRDA weight.
    /// Without glimpses, or with `lambda == 0`, the PDN is skipped and the
    /// bottom-up map is used alone.
    pub fn analyze(&self, frames: &[Frame], lambda: f64) -> Result<SceneAnalysis> {
        let cfg = &self.config;
        let (bua, glimpses) = observe(frames, cfg)?;
        if lambda == 0.0 || glimpses.is_empty() {
            return Ok(SceneAnalysis {
                attention: bua.clone(),
                bua,
                glimpses,
                plans: Vec::new(),
                masked: None,
                prda: None,
            });
        }
        let plans = recognize_glimpses(frames, &glimpses, &self.library, &self.affinity, cfg)?;
        let masked = masked_from_glimpses(frames, &glimpses, cfg.n)?;
        let prda = pdn_forward(&masked, &plans, &self.library, &self.pdn)?;
        let attention = combine_attention(&bua, &prda, lambda)?;
        Ok(SceneAnalysis {
            bua,
            glimpses,
            plans,
            masked: Some(masked),
            prda: Some(prda),
            attention,
        })
    }

    pub fn features(&self, frames: &[Frame], lambda: f64) -> Result<Vec<Vec<f64>>> {
        let a = self.analyze(frames, lambda)?;
        attended_features(frames, &a.attention, self.config.er_pool)
    }

    /// Class distribution using the configured `lambda`.
    pub fn predict(&self, frames: &[Frame]) -> Result<Vec<f64>> {
        classify_event(&self.features(frames, self.config.lambda)?, &self.classifier)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.json"), self.config.to_json()?)?;
        self.library.save(dir, "amp")?;
        self.affinity.save(dir, "affinity")?;
        self.pdn.save(dir.join("pdn"))?;
        self.classifier.save(dir.join("classifier"))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let config: RunConfig = serde_json::from_str(&fs::read_to_string(dir.join("config.json"))?)?;
        config.validate()?;
        Ok(Self {
            config,
            library: AmpLibrary::load(dir, "amp")?,
            affinity: AffinityModel::load(dir, "affinity")?,
            pdn: PdnParams::load(dir.join("pdn"))?,
            classifier: ClassifierParams::load(dir.join("classifier"))?,
        })
    }
}
