//! Config-driven, resumable pipeline with per-stage manifests.

mod artifacts;
mod config;
mod manifest;
mod stages;

pub use artifacts::{read_classified, read_predictions, write_classified, write_predictions};
pub use config::{DataConfig, EvaluateConfig, GridConfig, Paths, PerturbConfig, RunConfig};
pub use manifest::{hash_entry, manifest_path, sha256_file, write_atomic, FileHash, Manifest, MANIFEST_FILE};
pub use stages::{report_text, run_all, run_stage, Stage, StageOutcome};
