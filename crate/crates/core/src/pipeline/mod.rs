//! The event recognizer: bottom-up attention, glimpses, per-glimpse plan
//! recognition, plan-driven attention from the pixel dynamics network, and an
//! LSTM classifier over attended features. Also the synthetic scene
//! generator, dataset IO and evaluation.

mod attention;
mod classifier;
mod dataset;
mod glimpse;
mod metrics;
mod synth;
mod system;
mod train;

pub use attention::{combine_attention, compute_bua, compute_bua_with, gaussian_blur, AttentionMap, DEFAULT_BUA_SIGMA};
pub use classifier::{attended_features, classifier_loss_grad, classify_event, ClassifierParams, ClassifierShape};
pub use dataset::{load_dataset, load_frame_folder, save_dataset};
pub use glimpse::{segment_glimpses, Glimpse, DEFAULT_MIN_AREA, DEFAULT_THRESHOLD};
pub use metrics::{average_precision, evaluate_map, prda_concentration, MapReport};
pub use synth::{class_counts, synth_generate, EventSample, SceneConfig, BATCH_FRAMES, CLASS_NAMES};
pub use system::{
    glimpse_features, masked_from_glimpses, observe, observed_trace, recognize_glimpses, ErSystem, SceneAnalysis,
};
pub use train::{
    concentration_ratios, dynamics_example, evaluate_system, split_indices, train_er, write_metrics_jsonl,
    EpochMetrics, TrainReport,
};
