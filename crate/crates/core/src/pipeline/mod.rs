//! Self-training orchestration: round manifests, learning-rate schedules
//! and the external model runner.

pub mod manifest;
pub mod runner;
pub mod schedule;

pub use manifest::{
    assemble_round, entry_id, prediction_manifest, AugmentedCase, CasePools, DatasetManifest,
    ManifestEntry, PoolCase, Provenance, PseudoLabel, FINAL_ROUND, MANIFEST_SCHEMA_VERSION,
};
pub use runner::{run_model, shell_quote, PredictedLabel, RunArtifacts, RunMode, RunnerConfig};
pub use schedule::{lr_at_epoch, schedule, ScheduleSpec};
