//! The pixel dynamics network.
//!
//! A recognized plan (a short sequence of primitive vectors) drives an LSTM
//! whose gated, k-max pooled states are decoded into one small filter per
//! step. Each filter is applied to the colour pixels of its plan's region to
//! produce a per-location offset; translation pooling moves every location by
//! its offset and counts arrivals, and the counts of all plans and steps are
//! summed into the attention map.

mod acf;
mod dynamics;
mod fit;
mod masked;
mod params;

pub use acf::{generate_acfs, location_input, Acf};
pub use dynamics::{
    acf_convolve, belief_update_oracle, generate_prda, pdn_forward, pdn_spms, plan_vectors, round_half_toward_zero,
    translation_pool, PrdaMap, Spm, ORACLE_MAX_SIDE,
};
pub use fit::{dynamics_grad, dynamics_loss, fit_dynamics, DynamicsExample, DynamicsTarget, FitConfig};
pub use masked::{build_masked_image, MaskedImage, Region};
pub use params::{PdnConfig, PdnParams};
