//! Declared representation targets for text-to-image generation.
//!
//! The pipeline makes the target explicit, turns it into a per-subgroup image
//! budget, runs generation against a pluggable backend, and audits the skin
//! tone of the outputs against the declared target.

pub mod allocate;
pub mod artifact;
pub mod audit;
pub mod demographics;
pub mod generation;
pub mod metrics;
pub mod prompts;
pub mod scheme;
pub mod sim;
pub mod target;

pub use allocate::{allocate, AllocEntry, AllocationPlan};
pub use scheme::{AttributeScheme, FitzpatrickType, SchemeKind};
pub use target::{
    aggregate_to_bins, extreme_target, fallback_target, intermediate_target, majority_group,
    uniform_target, Distribution, TargetError, TargetSetting,
};
