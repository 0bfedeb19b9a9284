//! Deterministic building blocks for weakly-supervised cross-modality
//! segmentation: NIfTI volumes, isotropic preprocessing, augmentation,
//! dice/cross-entropy losses, evaluation metrics, connected-component
//! cleanup, ensembling, and self-training dataset manifests.
//!
//! Every stage that does not involve a neural network lives here; training
//! and inference are delegated to an external runner through files (see
//! [`pipeline::run_model`]).

pub mod augment;
pub mod ensemble;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod numeric;
pub mod pipeline;
pub mod postprocess;
pub mod preprocess;
pub mod rng;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{Dims, LabelVolume, ProbabilityMap, Spacing, Volume};

/// Class id of the vestibular schwannoma.
pub const CLASS_VS: u8 = 1;
/// Class id of the cochleas.
pub const CLASS_COCHLEA: u8 = 2;
/// Number of classes including background.
pub const NUM_CLASSES: usize = 3;
