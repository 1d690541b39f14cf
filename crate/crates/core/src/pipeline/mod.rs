//! Experiment configuration and the staged simulate, ramify, train,
//! rollout, eval and export pipeline.
//!
//! An output directory holds one run:
//!
//! ```text
//! config.json               the resolved experiment config
//! run_manifest.json         stage fingerprints and every file's SHA-256
//! simulate/trajectory.jsonl ground-truth trajectory
//! ramify/train/, ramify/eval/
//! train/checkpoint.json, train/summary.json
//! rollout/truth.json, rollout/model.json
//! eval/summary.json, eval/micro.csv, eval/macro.csv, eval/ar1_macro.csv
//! export/*.csv
//! ```

mod config;
mod export;
mod run;
mod stages;

pub use config::{
    AbmConfig, EvalConfig, ExperimentConfig, ModelChoice, PsiPreset, RamificationConfig, Tolerance, TrainingConfig,
    Transitions, XiPreset, PRESETS,
};
pub use export::{export_plot_data, write_snapshot_csv, ExportFormat};
pub use run::{
    run_pipeline, FileRecord, PipelineRun, RunLock, RunManifest, StageRecord, StageStatus, LOCK_FILE, MANIFEST_FILE,
    STAGES,
};
pub use stages::{
    ar1_report, build_model, evaluate_to, load_ensemble, ramify_to, rollout_ensembles, simulate_to, train_model,
    train_to, EvalInputs, EvalSummary, TrainSummary,
};
