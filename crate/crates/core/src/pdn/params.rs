use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{load_tensor, save_tensor, Dense, LstmParams, Parameters, SeededRng, Tensor};

/// Sizes of the network. `filter` is the (odd) side of each generated filter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdnConfig {
    pub n: usize,
    pub amp_dim: usize,
    pub hidden: usize,
    pub kmax: usize,
    pub code: usize,
    pub filter: usize,
    pub z: f64,
}

impl Default for PdnConfig {
    fn default() -> Self {
        Self {
            n: 64,
            amp_dim: 32,
            hidden: 32,
            kmax: 16,
            code: 16,
            filter: 5,
            z: 1.0,
        }
    }
}

impl PdnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.amp_dim == 0 || self.hidden == 0 || self.code == 0 {
            return Err(invalid("network sizes must be positive"));
        }
        if self.kmax == 0 || self.kmax > self.hidden {
            return Err(invalid(format!(
                "k-max size {} must be in 1..={}",
                self.kmax, self.hidden
            )));
        }
        if self.filter.is_multiple_of(2) {
            return Err(invalid(format!("filter side {} must be odd", self.filter)));
        }
        if !(self.z > 0.0 && self.z.is_finite()) {
            return Err(invalid("normalization constant must be positive"));
        }
        Ok(())
    }
}

/// Trainable weights of the filter-generation and offset layers.
///
/// The summarization layer has constant unit weights and is not stored.
#[derive(Clone, Debug, PartialEq)]
pub struct PdnParams {
    pub config: PdnConfig,
    /// Recurrence over the primitive vectors of a plan.
    pub lstm: LstmParams,
    /// Location map (flattened, scaled to `[0, 1)`) to a hidden-size gate.
    pub gate: Dense,
    /// K-max pooled gated state to the code (tanh).
    pub encoder: Dense,
    /// Code to the `filter x filter` values (linear).
    pub decoder: Dense,
    /// Scalar weight on the filtered colour sum.
    pub w4: Tensor,
    /// Per-position offset bias, `N x N`.
    pub b4: Tensor,
}

const TENSOR_NAMES: [&str; 11] = [
    "lstm_w_x",
    "lstm_w_h",
    "lstm_bias",
    "gate_weight",
    "gate_bias",
    "encoder_weight",
    "encoder_bias",
    "decoder_weight",
    "decoder_bias",
    "w4",
    "b4",
];

impl PdnParams {
    pub fn new(config: PdnConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let taps = config.filter * config.filter;
        let lstm = LstmParams::new(config.amp_dim, config.hidden, rng);
        let gate = Dense::new(config.n * config.n, config.hidden, rng);
        let encoder = Dense::new(config.kmax, config.code, rng);
        let decoder = Dense::new(config.code, taps, rng);
        let w4 = Tensor::new(vec![1], vec![rng.uniform(-1.0, 1.0)])?;
        let s = 1.0 / (taps as f64).sqrt();
        let b4 = Tensor::from_fn2(config.n, config.n, |_, _| rng.uniform(-s, s));
        Ok(Self {
            config,
            lstm,
            gate,
            encoder,
            decoder,
            w4,
            b4,
        })
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn w4(&self) -> f64 {
        self.w4.data()[0]
    }

    /// Writes `pdn.json` plus one PDNT file per tensor into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (name, t) in TENSOR_NAMES.iter().zip(self.tensors()) {
            save_tensor(dir.join(format!("{name}.pdnt")), t)?;
        }
        fs::write(dir.join("pdn.json"), serde_json::to_string_pretty(&self.config)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let config: PdnConfig = serde_json::from_str(&fs::read_to_string(dir.join("pdn.json"))?)?;
        let mut params = Self::new(config, &mut SeededRng::new(0))?;
        for (name, t) in TENSOR_NAMES.iter().zip(params.tensors_mut()) {
            let loaded = load_tensor(dir.join(format!("{name}.pdnt")))?;
            if loaded.shape() != t.shape() {
                return Err(Error::Format(format!(
                    "{name}: stored shape {:?}, expected {:?}",
                    loaded.shape(),
                    t.shape()
                )));
            }
            *t = loaded;
        }
        Ok(params)
    }
}

impl Parameters for PdnParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.lstm.tensors();
        v.extend(self.gate.tensors());
        v.extend(self.encoder.tensors());
        v.extend(self.decoder.tensors());
        v.push(&self.w4);
        v.push(&self.b4);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.lstm.tensors_mut();
        v.extend(self.gate.tensors_mut());
        v.extend(self.encoder.tensors_mut());
        v.extend(self.decoder.tensors_mut());
        v.push(&mut self.w4);
        v.push(&mut self.b4);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

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
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = PdnParams::new(small(), &mut SeededRng::new(3)).unwrap();
        p.save(dir.path()).unwrap();
        assert_eq!(PdnParams::load(dir.path()).unwrap(), p);
    }

    #[test]
    fn config_validation() {
        assert!(PdnConfig { filter: 4, ..small() }.validate().is_err());
        assert!(PdnConfig { kmax: 6, ..small() }.validate().is_err());
        assert!(PdnConfig { z: 0.0, ..small() }.validate().is_err());
        assert!(PdnConfig::default().validate().is_ok());
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = PdnParams::new(small(), &mut SeededRng::new(1)).unwrap();
        let b = PdnParams::new(small(), &mut SeededRng::new(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tensors().len(), TENSOR_NAMES.len());
    }
}
