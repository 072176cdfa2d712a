//! Plan-recognition-driven attention.
//!
//! The crate is split along the processing chain:
//!
//! - [`numerics`]: dense tensors, hand-derived layer gradients and the
//!   finite-difference oracle used to check them.
//! - [`features`]: frames, video tubes and the HOD/HOG histograms.
//! - [`amp`]: the motion-primitive codebook (k-means), per-frame index
//!   distributions and trace compression.
//! - [`planrec`]: an affinity-embedding plan recognizer over distribution
//!   traces.
//! - [`pdn`]: the pixel dynamics network: action-conditional filters,
//!   masked convolution, translation pooling and the attention map.
//! - [`pipeline`]: bottom-up attention, glimpses, the event classifier,
//!   training, mean-AP evaluation and the synthetic scene generator.
//! - [`config`]: the run configuration shared with the command-line tool.

pub mod amp;
pub mod config;
pub mod error;
pub mod features;
pub mod numerics;
pub mod pdn;
pub mod pipeline;
pub mod planrec;

pub use amp::{AmpDistribution, AmpLibrary, PlanTrace, RecognizedPlan};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use features::{FeatureKind, FeatureVector, Frame, VideoTube};
pub use numerics::{SeededRng, Tensor};
pub use pdn::{Acf, MaskedImage, PdnParams, PrdaMap, Spm};
pub use pipeline::{AttentionMap, EventSample, Glimpse};
pub use planrec::AffinityModel;
