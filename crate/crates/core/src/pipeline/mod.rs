//! Synthetic cores, artifact persistence and the end-to-end workflows.

mod config;
mod persist;
mod run;
mod surrogate;
mod synth;

pub use persist::{
    content_hash, derive_seed, from_artifact_str, load_artifact, save_artifact, sha256_hex, to_artifact_string,
    ARTIFACT_VERSION,
};
pub use synth::{generate_synthetic_core, CoreDataset, CoreRod};
pub use config::{BenchmarkConfig, CoresConfig, LutConfig, RunConfig, TrainingConfig, RUN_CONFIG_VERSION};
pub use run::{
    CoreEvaluation, CoreLabels, DesignSources, EvaluationReport, FileHash, ModelSelection, Pipeline, QoiEvaluation,
    ScreenSummary, StageRecord, STAGES,
};
pub use surrogate::SurrogateSet;
