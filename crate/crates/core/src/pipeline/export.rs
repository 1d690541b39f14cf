//! Long-form CSV tables for external plotting.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::abm::{snapshot, SystemState};
use crate::eval::{write_ensemble_csv, Ensemble};
use crate::files::{create_dir, read_json, write_atomic};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            other => Err(Error::Parameter(format!("unknown export format `{other}` (supported: csv)"))),
        }
    }
}

#[derive(Serialize)]
struct AgentRow<'a> {
    run: usize,
    t: usize,
    id: usize,
    #[serde(rename = "type")]
    kind: &'a str,
    phase: &'a str,
    x: Option<usize>,
    y: Option<usize>,
}

/// One row per agent per state, ordered by run, then `t`, then id. Phase
/// is empty for Schelling; coordinates are empty off-grid.
pub fn write_snapshot_csv(path: &Path, states: &[(usize, SystemState)]) -> Result<usize> {
    let mut order: Vec<&(usize, SystemState)> = states.iter().collect();
    order.sort_by_key(|(r, s)| (*r, s.t));
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut rows = 0;
    for (r, s) in order {
        let mut agents: Vec<_> = s.agents.iter().collect();
        agents.sort_by_key(|a| a.id);
        for a in agents {
            w.serialize(AgentRow {
                run: *r,
                t: s.t,
                id: a.id,
                kind: a.kind.name(),
                phase: a.phase.map_or("", |p| p.name()),
                x: a.pos.map(|p| p.0),
                y: a.pos.map(|p| p.1),
            })?;
            rows += 1;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)?;
    Ok(rows)
}

/// Converts a state snapshot (`.jsonl`) or an ensemble (`.json`) into CSV
/// files in `out_dir`; returns the written paths.
pub fn export_plot_data(input: &Path, format: ExportFormat, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let ExportFormat::Csv = format;
    create_dir(out_dir)?;
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Parameter(format!("cannot name output for {}", input.display())))?;
    match input.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => {
            let (_, states) = snapshot::load(input)?;
            let out = out_dir.join(format!("{stem}_snapshots.csv"));
            write_snapshot_csv(&out, &states)?;
            Ok(vec![out])
        }
        Some("json") => {
            let ensemble: Ensemble = read_json(input)?;
            let out = out_dir.join(format!("{stem}_ensemble.csv"));
            write_ensemble_csv(&out, &ensemble)?;
            Ok(vec![out])
        }
        _ => Err(Error::Parameter(format!(
            "cannot export {}: expected a .jsonl snapshot or a .json ensemble",
            input.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abm::{Engine, SchellingParams};

    #[test]
    fn snapshot_rows_are_agents_times_states_in_order() {
        let e = Engine::Schelling(SchellingParams {
            grid: 6,
            steps: 3,
            ..SchellingParams::default()
        });
        let traj = e.simulate().unwrap();
        // Shuffled input order must not change the output.
        let mut states: Vec<(usize, SystemState)> = traj.iter().cloned().map(|s| (0, s)).collect();
        states.reverse();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let rows = write_snapshot_csv(&p, &states).unwrap();
        assert_eq!(rows, traj.len() * traj[0].len());
        let mut rdr = csv::Reader::from_path(&p).unwrap();
        assert_eq!(rdr.headers().unwrap(), vec!["run", "t", "id", "type", "phase", "x", "y"]);
        let keys: Vec<(usize, usize)> = rdr
            .records()
            .map(|r| {
                let r = r.unwrap();
                (r[1].parse().unwrap(), r[2].parse().unwrap())
            })
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn unknown_formats_and_inputs_are_rejected() {
        assert!("csv".parse::<ExportFormat>().is_ok());
        assert!(matches!("parquet".parse::<ExportFormat>(), Err(Error::Parameter(_))));
        let dir = tempfile::tempdir().unwrap();
        assert!(export_plot_data(&dir.path().join("x.bin"), ExportFormat::Csv, dir.path()).is_err());
    }
}
