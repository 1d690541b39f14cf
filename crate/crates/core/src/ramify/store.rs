//! On-disk layout of a dataset directory:
//!
//! ```text
//! manifest.json          parameters, counts, per-file SHA-256
//! main.jsonl             main-branch states (r = 0)
//! siblings_t0000.jsonl   siblings r = 1..=R of main[0]
//! siblings_t0001.jsonl   ...
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RamificationDataset;
use crate::abm::snapshot::{self, SnapshotHeader};
use crate::abm::Engine;
use crate::files::{create_dir, read_json, sha256_file, write_json};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "gdn-lab-ramification";
const VERSION: u32 = 1;
const SEED_DERIVATION: &str = "splitmix64-fold(root, [stream, t, r])";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub engine: Engine,
    pub root_seed: u64,
    pub seed_derivation: String,
    pub stream: u64,
    pub requested_steps: usize,
    pub steps: usize,
    pub branches: usize,
    pub agents: usize,
    /// Digest of each conditioning state `main[t]`, `t < steps`.
    pub parent_digests: Vec<String>,
    pub files: Vec<FileEntry>,
}

fn sibling_file(t: usize) -> String {
    format!("siblings_t{t:04}.jsonl")
}

pub fn save(dataset: &RamificationDataset, dir: &Path) -> Result<Manifest> {
    dataset.validate()?;
    create_dir(dir)?;
    let header = SnapshotHeader::new(&dataset.engine, dataset.root_seed);
    let mut files = Vec::new();

    let main_path = dir.join("main.jsonl");
    snapshot::save(&main_path, &header, dataset.main.iter().map(|s| (0, s)))?;
    files.push(FileEntry {
        path: "main.jsonl".into(),
        sha256: sha256_file(&main_path)?,
    });
    for (t, group) in dataset.siblings.iter().enumerate() {
        let name = sibling_file(t);
        let path = dir.join(&name);
        snapshot::save(&path, &header, group.iter().enumerate().map(|(k, s)| (k + 1, s)))?;
        files.push(FileEntry {
            sha256: sha256_file(&path)?,
            path: name,
        });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        engine: dataset.engine.clone(),
        root_seed: dataset.root_seed,
        seed_derivation: SEED_DERIVATION.into(),
        stream: dataset.stream,
        requested_steps: dataset.requested_steps,
        steps: dataset.steps(),
        branches: dataset.branches,
        agents: dataset.num_agents(),
        parent_digests: dataset.main[..dataset.steps()].iter().map(|s| s.digest()).collect(),
        files,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<RamificationDataset> {
    let mpath = dir.join(MANIFEST_FILE);
    let manifest: Manifest = read_json(&mpath)?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::format(
            &mpath,
            format!("unsupported dataset {} v{}", manifest.format, manifest.version),
        ));
    }
    for f in &manifest.files {
        let path = dir.join(&f.path);
        if sha256_file(&path)? != f.sha256 {
            return Err(Error::Checksum(path));
        }
    }

    let read_states = |name: &str| -> Result<Vec<(usize, crate::abm::SystemState)>> {
        let path = dir.join(name);
        let (header, states) = snapshot::load(&path)?;
        if header.engine != manifest.engine {
            return Err(Error::format(&path, "engine differs from manifest"));
        }
        Ok(states)
    };

    let main: Vec<_> = read_states("main.jsonl")?.into_iter().map(|(_, s)| s).collect();
    if main.len() != manifest.steps + 1 {
        return Err(Error::format(
            dir.join("main.jsonl"),
            format!("{} states for {} steps", main.len(), manifest.steps),
        ));
    }
    let mut siblings = Vec::with_capacity(manifest.steps);
    for t in 0..manifest.steps {
        if main[t].digest() != manifest.parent_digests[t] {
            return Err(Error::Checksum(dir.join("main.jsonl")));
        }
        let group: Vec<_> = read_states(&sibling_file(t))?;
        if group.iter().enumerate().any(|(k, (r, _))| *r != k + 1) {
            return Err(Error::format(dir.join(sibling_file(t)), "sibling indices out of order"));
        }
        siblings.push(group.into_iter().map(|(_, s)| s).collect());
    }
    let dataset = RamificationDataset {
        engine: manifest.engine,
        root_seed: manifest.root_seed,
        stream: manifest.stream,
        requested_steps: manifest.requested_steps,
        branches: manifest.branches,
        main,
        siblings,
    };
    dataset
        .validate()
        .map_err(|e| Error::format(&mpath, e.to_string()))?;
    Ok(dataset)
}
