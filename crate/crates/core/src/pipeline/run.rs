use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::export::{export_plot_data, ExportFormat};
use super::stages::{
    evaluate_to, load_ensemble, ramify_to, rollout_ensembles, simulate_to, train_to, EvalInputs,
};
use crate::checkpoint::load_model;
use crate::files::{create_dir, read_json, sha256_bytes, sha256_file, write_json};
use crate::ramify as store;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const LOCK_FILE: &str = ".lock";
const FORMAT: &str = "gdn-lab-run";
const VERSION: u32 = 1;

/// Stage names in execution order.
pub const STAGES: [&str; 6] = ["simulate", "ramify", "train", "rollout", "eval", "export"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    /// Digest of the stage parameters and the checksums of its inputs.
    pub fingerprint: String,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub outputs: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub config_fingerprint: String,
    pub stages: Vec<StageRecord>,
    /// Every file in the output directory except the manifest and the lock.
    pub files: Vec<FileRecord>,
    pub complete: bool,
}

impl RunManifest {
    fn new(config_fingerprint: String) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_fingerprint,
            stages: Vec::new(),
            files: Vec::new(),
            complete: false,
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn file(&self, path: &str) -> Option<&FileRecord> {
        self.files.iter().find(|f| f.path == path)
    }

    /// Checks that the listing matches the directory exactly.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        let actual = scan(dir)?;
        if actual.len() != self.files.len() {
            return Err(Error::format(
                dir.join(MANIFEST_FILE),
                format!("{} files on disk, {} listed", actual.len(), self.files.len()),
            ));
        }
        for (a, b) in actual.iter().zip(&self.files) {
            if a != b {
                return Err(Error::Checksum(dir.join(&a.path)));
            }
        }
        Ok(())
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn relative(dir: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(dir).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Checksums of every regular file under `dir`, sorted by path.
fn scan(dir: &Path) -> Result<Vec<FileRecord>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<FileRecord>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
                continue;
            }
            let rel = relative(root, &path);
            if rel == MANIFEST_FILE || rel == LOCK_FILE {
                continue;
            }
            let bytes = fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len();
            out.push(FileRecord {
                sha256: sha256_file(&path)?,
                path: rel,
                bytes,
            });
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Advisory lock: a file created exclusively and removed on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        create_dir(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// What one invocation of [`run_pipeline`] did.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub manifest: RunManifest,
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
}

struct Runner<'a> {
    dir: &'a Path,
    manifest: RunManifest,
    previous: Option<RunManifest>,
    executed: Vec<String>,
    skipped: Vec<String>,
}

impl Runner<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn checksum(&self, rel: &str) -> Result<String> {
        sha256_file(&self.path(rel))
    }

    /// Runs `body` unless a previous run recorded the same fingerprint and
    /// every output it listed is still on disk unchanged. `body` returns
    /// the stage outputs relative to the output directory.
    fn stage<F>(&mut self, name: &str, params: serde_json::Value, inputs: &[&str], body: F) -> Result<()>
    where
        F: FnOnce(&Path, &str) -> Result<Vec<String>>,
    {
        let mut key = serde_json::json!({ "stage": name, "params": params });
        let mut sums = Vec::new();
        for rel in inputs {
            sums.push(serde_json::json!([rel, self.checksum(rel)?]));
        }
        key["inputs"] = serde_json::Value::Array(sums);
        let fingerprint = sha256_bytes(&serde_json::to_vec(&key)?);

        if let Some(prev) = self.previous.as_ref().and_then(|m| m.stage(name)) {
            let prev_files = &self.previous.as_ref().expect("checked").files;
            let intact = prev.fingerprint == fingerprint
                && prev.status == StageStatus::Completed
                && prev.outputs.iter().all(|o| {
                    let listed = prev_files.iter().find(|f| &f.path == o);
                    listed.is_some_and(|f| sha256_file(&self.dir.join(o)).is_ok_and(|s| s == f.sha256))
                });
            if intact {
                self.manifest.stages.push(prev.clone());
                self.skipped.push(name.to_string());
                return Ok(());
            }
        }

        let started = now();
        let result = body(self.dir, &fingerprint);
        let (status, error, outputs) = match &result {
            Ok(out) => (StageStatus::Completed, None, out.clone()),
            Err(e) => (StageStatus::Failed, Some(e.to_string()), Vec::new()),
        };
        self.manifest.stages.push(StageRecord {
            name: name.to_string(),
            fingerprint,
            status,
            error,
            outputs,
            started_unix: started,
            finished_unix: now(),
        });
        self.executed.push(name.to_string());
        self.flush()?;
        result.map(|_| ())
    }

    fn flush(&mut self) -> Result<()> {
        self.manifest.files = scan(self.dir)?;
        write_json(&self.path(MANIFEST_FILE), &self.manifest)
    }
}

fn dataset_files(dir: &Path, sub: &str) -> Result<Vec<String>> {
    let m: store::Manifest = read_json(&dir.join(sub).join(store::MANIFEST_FILE))?;
    let mut out = vec![format!("{sub}/{}", store::MANIFEST_FILE)];
    out.extend(m.files.iter().map(|f| format!("{sub}/{}", f.path)));
    Ok(out)
}

/// Executes simulate, ramify, train, rollout, eval and export in `dir`,
/// skipping stages whose inputs and parameters are unchanged since a
/// previous run there.
pub fn run_pipeline(config: &ExperimentConfig, dir: &Path) -> Result<PipelineRun> {
    config.validate()?;
    let _lock = RunLock::acquire(dir)?;
    let previous = match RunManifest::load(dir) {
        Ok(m) if m.config_fingerprint == config.fingerprint() => Some(m),
        _ => None,
    };
    let mut r = Runner {
        dir,
        manifest: RunManifest::new(config.fingerprint()),
        previous,
        executed: Vec::new(),
        skipped: Vec::new(),
    };
    let mut stored = config.clone();
    stored.output = None;
    stored.save(&dir.join("config.json"))?;

    let seed = config.seed;
    let horizon = config.eval.horizon;
    let abm = serde_json::to_value(&config.abm)?;

    r.stage(
        "simulate",
        serde_json::json!({ "abm": abm, "horizon": horizon, "seed": seed }),
        &[],
        |dir, _| {
            create_dir(&dir.join("simulate"))?;
            let engine = config.abm.engine(horizon, seed)?;
            simulate_to(&engine, &dir.join("simulate/trajectory.jsonl"))?;
            Ok(vec!["simulate/trajectory.jsonl".into()])
        },
    )?;

    r.stage(
        "ramify",
        serde_json::json!({
            "abm": abm, "ramification": config.ramification, "states": config.eval.states,
            "branches": config.eval.branches, "seed": seed,
        }),
        &[],
        |dir, _| {
            let engine = config.abm.engine(config.ramification.steps, seed)?;
            ramify_to(&engine, &config.ramification, &config.eval, seed, &dir.join("ramify"))?;
            let mut out = dataset_files(dir, "ramify/train")?;
            out.extend(dataset_files(dir, "ramify/eval")?);
            Ok(out)
        },
    )?;

    let train_manifest = "ramify/train/manifest.json";
    let eval_manifest = "ramify/eval/manifest.json";
    r.stage(
        "train",
        serde_json::json!({ "training": config.training, "seed": seed }),
        &[train_manifest],
        |dir, fingerprint| {
            create_dir(&dir.join("train"))?;
            let data = store::load(&dir.join("ramify/train"))?;
            train_to(
                &config.training,
                &data,
                seed,
                &dir.join("train/checkpoint.json"),
                &dir.join("train/summary.json"),
                fingerprint,
            )?;
            Ok(vec!["train/checkpoint.json".into(), "train/summary.json".into()])
        },
    )?;

    let checkpoint = "train/checkpoint.json";
    r.stage(
        "rollout",
        serde_json::json!({ "abm": abm, "horizon": horizon, "runs": config.eval.runs, "seed": seed }),
        &[checkpoint, train_manifest],
        |dir, _| {
            create_dir(&dir.join("rollout"))?;
            let data = store::load(&dir.join("ramify/train"))?;
            let model = load_model(&dir.join(checkpoint))?;
            let (truth, pred) =
                rollout_ensembles(&data.engine, &model, &data.main[0], horizon, config.eval.runs, seed)?;
            write_json(&dir.join("rollout/truth.json"), &truth)?;
            write_json(&dir.join("rollout/model.json"), &pred)?;
            Ok(vec!["rollout/truth.json".into(), "rollout/model.json".into()])
        },
    )?;

    r.stage(
        "eval",
        serde_json::json!({ "samples": config.eval.samples, "seed": seed }),
        &[checkpoint, train_manifest, eval_manifest, "rollout/truth.json", "rollout/model.json"],
        |dir, _| {
            let train = store::load(&dir.join("ramify/train"))?;
            let future = store::load(&dir.join("ramify/eval"))?;
            let model = load_model(&dir.join(checkpoint))?;
            let truth = load_ensemble(&dir.join("rollout/truth.json"))?;
            let pred = load_ensemble(&dir.join("rollout/model.json"))?;
            let inputs = EvalInputs {
                train: &train,
                future: &future,
                truth: &truth,
                pred: &pred,
            };
            evaluate_to(&model, &inputs, config.eval.samples, seed, &dir.join("eval"))?;
            Ok(["summary.json", "micro.csv", "macro.csv", "ar1_macro.csv"]
                .iter()
                .map(|f| format!("eval/{f}"))
                .collect())
        },
    )?;

    let sources = ["simulate/trajectory.jsonl", "rollout/truth.json", "rollout/model.json"];
    r.stage("export", serde_json::json!({ "format": "csv" }), &sources, |dir, _| {
        let mut out = Vec::new();
        for src in sources {
            for p in export_plot_data(&dir.join(src), ExportFormat::Csv, &dir.join("export"))? {
                out.push(relative(dir, &p));
            }
        }
        Ok(out)
    })?;

    r.manifest.complete = true;
    r.flush()?;
    Ok(PipelineRun {
        manifest: r.manifest,
        executed: r.executed,
        skipped: r.skipped,
    })
}
