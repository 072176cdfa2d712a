//! Run configuration shared by the library entry points and the CLI.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::features::{FeatureKind, FeatureParams};
use crate::pdn::{FitConfig, PdnConfig};
use crate::pipeline::SceneConfig;
use crate::planrec::AffinityConfig;

/// Every hyperparameter of a run. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Side of the square frames and attention maps.
    pub n: usize,
    pub samples: usize,
    pub scene: SceneConfig,

    pub feature: FeatureKind,
    pub hod_bins: usize,
    pub hog_bins: usize,
    pub hog_cell: usize,

    pub clusters: usize,
    pub distribution_size: usize,
    pub kmeans_iter: usize,

    pub horizon: usize,
    pub plan_epochs: usize,
    pub plan_dim: usize,
    pub plan_window: usize,
    pub plan_lr: f64,
    pub plan_negatives: usize,

    pub lambda: f64,
    pub z: f64,
    pub bua_sigma: f64,
    pub glimpse_threshold: f64,
    pub glimpse_min_area: usize,

    pub pdn_hidden: usize,
    pub pdn_kmax: usize,
    pub pdn_code: usize,
    pub pdn_filter: usize,
    pub dynamics_epochs: usize,
    pub dynamics_lr: f64,
    pub dynamics_batch: usize,

    pub er_epochs: usize,
    pub er_lr: f64,
    pub er_proj: usize,
    pub er_hidden: usize,
    pub er_pool: usize,
    pub train_fraction: f64,

    pub data: Option<PathBuf>,
    /// Directory of a trained recognizer.
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n: 64,
            samples: 800,
            scene: SceneConfig::default(),
            feature: FeatureKind::Hod,
            hod_bins: 32,
            hog_bins: 9,
            hog_cell: 8,
            clusters: 512,
            distribution_size: 3,
            kmeans_iter: 100,
            horizon: 5,
            plan_epochs: 60,
            plan_dim: 32,
            plan_window: 2,
            plan_lr: 0.05,
            plan_negatives: 5,
            lambda: 1.0,
            z: 1.0,
            bua_sigma: 1.5,
            glimpse_threshold: 0.5,
            glimpse_min_area: 9,
            pdn_hidden: 32,
            pdn_kmax: 16,
            pdn_code: 16,
            pdn_filter: 5,
            dynamics_epochs: 4,
            dynamics_lr: 0.02,
            dynamics_batch: 8,
            er_epochs: 30,
            er_lr: 0.05,
            er_proj: 32,
            er_hidden: 32,
            er_pool: 8,
            train_fraction: 0.7,
            data: None,
            model: None,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 8 {
            return Err(invalid(format!("n = {} is below the minimum frame side 8", self.n)));
        }
        if self.clusters < 2 || self.distribution_size == 0 || self.distribution_size > self.clusters {
            return Err(invalid("need clusters >= 2 and 1 <= distribution_size <= clusters"));
        }
        if self.horizon == 0 || self.plan_window == 0 {
            return Err(invalid("horizon and plan_window must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) || !(self.z > 0.0 && self.z.is_finite()) {
            return Err(invalid("lambda must be >= 0 and z > 0"));
        }
        if !(self.glimpse_threshold > 0.0 && self.glimpse_threshold < 1.0) {
            return Err(invalid("glimpse_threshold must lie in (0, 1)"));
        }
        if self.er_pool == 0 || !self.n.is_multiple_of(self.er_pool) {
            return Err(invalid(format!("er_pool {} must divide n = {}", self.er_pool, self.n)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(invalid("train_fraction must lie in (0, 1)"));
        }
        self.pdn_config(self.hod_bins)?.validate()?;
        self.scene_config().validate()
    }

    pub fn feature_params(&self) -> FeatureParams {
        FeatureParams {
            hod_bins: self.hod_bins,
            hog_bins: self.hog_bins,
            hog_cell: self.hog_cell,
        }
    }

    /// The scene generator settings with the run's side, count and horizon.
    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            n: self.n,
            samples: self.samples,
            horizon: self.horizon,
            ..self.scene.clone()
        }
    }

    pub fn affinity_config(&self) -> AffinityConfig {
        AffinityConfig {
            dim: self.plan_dim,
            window: self.plan_window,
            epochs: self.plan_epochs,
            lr: self.plan_lr,
            negatives: self.plan_negatives,
            seed: self.seed,
        }
    }

    pub fn pdn_config(&self, amp_dim: usize) -> Result<PdnConfig> {
        let cfg = PdnConfig {
            n: self.n,
            amp_dim,
            hidden: self.pdn_hidden,
            kmax: self.pdn_kmax,
            code: self.pdn_code,
            filter: self.pdn_filter,
            z: self.z,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            epochs: self.dynamics_epochs,
            lr: self.dynamics_lr,
            batch: self.dynamics_batch,
            clip: 5.0,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(
            (cfg.clusters, cfg.distribution_size, cfg.horizon, cfg.plan_epochs),
            (512, 3, 5, 60)
        );
        let back: RunConfig = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"clusters": 8, "bogus": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"scene": {"bogus": 1}}"#).is_err());
        let partial: RunConfig = serde_json::from_str(r#"{"clusters": 8}"#).unwrap();
        assert_eq!(partial.clusters, 8);
        assert_eq!(partial.n, 64);
    }

    #[test]
    fn invalid_values() {
        let bad = |f: fn(&mut RunConfig)| {
            let mut c = RunConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.distribution_size = 600));
        assert!(bad(|c| c.lambda = -1.0));
        assert!(bad(|c| c.er_pool = 7));
        assert!(bad(|c| c.glimpse_threshold = 1.0));
        assert!(bad(|c| c.train_fraction = 1.0));
    }
}
