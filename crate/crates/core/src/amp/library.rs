use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::features::FeatureKind;
use crate::numerics::{load_tensor, save_tensor, Tensor};

/// Primitive centroids and the metadata needed to reuse them.
#[derive(Clone, Debug, PartialEq)]
pub struct AmpLibrary {
    centroids: Vec<Vec<f64>>,
    kind: FeatureKind,
    seed: u64,
    distribution_size: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryHeader {
    clusters: usize,
    kind: FeatureKind,
    seed: u64,
    distribution_size: usize,
    feature_len: usize,
    centroids: String,
}

pub const DEFAULT_DISTRIBUTION_SIZE: usize = 3;

impl AmpLibrary {
    pub fn new(centroids: Vec<Vec<f64>>, kind: FeatureKind, seed: u64) -> Result<Self> {
        if centroids.len() < 2 {
            return Err(invalid("a primitive library needs at least two centroids"));
        }
        let len = centroids[0].len();
        if len == 0 || centroids.iter().any(|c| c.len() != len) {
            return Err(invalid("centroids must share a positive length"));
        }
        if centroids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("AmpLibrary::new"));
        }
        Ok(Self {
            centroids,
            kind,
            seed,
            distribution_size: DEFAULT_DISTRIBUTION_SIZE,
        })
    }

    pub fn with_distribution_size(mut self, size: usize) -> Self {
        self.distribution_size = size;
        self
    }

    pub fn clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn feature_len(&self) -> usize {
        self.centroids[0].len()
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn distribution_size(&self) -> usize {
        self.distribution_size
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn centroid(&self, index: usize) -> Option<&[f64]> {
        self.centroids.get(index).map(|c| c.as_slice())
    }

    /// Writes `<stem>.json` (header) and `<stem>.pdnt` (`A x L` centroid
    /// matrix) into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let matrix_name = format!("{stem}.pdnt");
        let flat: Vec<f64> = self.centroids.iter().flatten().copied().collect();
        save_tensor(
            dir.join(&matrix_name),
            &Tensor::new(vec![self.clusters(), self.feature_len()], flat)?,
        )?;
        let header = LibraryHeader {
            clusters: self.clusters(),
            kind: self.kind,
            seed: self.seed,
            distribution_size: self.distribution_size,
            feature_len: self.feature_len(),
            centroids: matrix_name,
        };
        fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&header)? + "\n",
        )?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>, stem: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let header: LibraryHeader = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let m = load_tensor(dir.join(&header.centroids))?;
        if m.shape() != [header.clusters, header.feature_len] {
            return Err(Error::Format(format!(
                "centroid matrix {:?} disagrees with header {}x{}",
                m.shape(),
                header.clusters,
                header.feature_len
            )));
        }
        let centroids = (0..header.clusters).map(|i| m.row(i).to_vec()).collect();
        Ok(Self::new(centroids, header.kind, header.seed)?.with_distribution_size(header.distribution_size))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let lib = AmpLibrary::new(
            vec![vec![0.1, 0.2], vec![0.3, 0.4], vec![1.0, 0.0]],
            FeatureKind::Hod,
            9,
        )
        .unwrap()
        .with_distribution_size(2);
        lib.save(dir.path(), "amp").unwrap();
        assert_eq!(AmpLibrary::load(dir.path(), "amp").unwrap(), lib);
    }

    #[test]
    fn rejects_degenerate_libraries() {
        assert!(AmpLibrary::new(vec![vec![1.0]], FeatureKind::Hod, 0).is_err());
        assert!(AmpLibrary::new(vec![vec![1.0], vec![1.0, 2.0]], FeatureKind::Hod, 0).is_err());
    }
}
