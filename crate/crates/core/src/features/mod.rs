//! Frames, video tubes and the histogram features clustered into motion
//! primitives.

mod frame;
mod hist;
mod pnm;

pub use frame::{Frame, Rect, VideoTube, MIN_FRAME_SIDE};
pub use hist::{hod, hog, l2_normalize, tube_features, FeatureParams};
pub use pnm::{read_ppm, write_pgm16, write_ppm};

use serde::{Deserialize, Serialize};

/// Which histogram a feature vector was built from.
///
/// Optical-flow histograms are not implemented; a flow extractor would add a
/// variant here.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    Hod,
    Hog,
    #[serde(rename = "hod+hog")]
    HodHog,
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureKind::Hod => "hod",
            FeatureKind::Hog => "hog",
            FeatureKind::HodHog => "hod+hog",
        })
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "hod" => Ok(FeatureKind::Hod),
            "hog" => Ok(FeatureKind::Hog),
            "hod+hog" => Ok(FeatureKind::HodHog),
            other => Err(crate::error::invalid(format!("unknown feature kind `{other}`"))),
        }
    }
}

/// A concatenation of histograms: nonnegative, and either unit L2 norm or
/// exactly zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}
