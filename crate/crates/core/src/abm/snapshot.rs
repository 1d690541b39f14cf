//! JSON-lines state snapshots.
//!
//! The first line is a [`SnapshotHeader`]; every further line is one agent
//! at one `(t, r)`:
//!
//! ```text
//! {"t":0,"r":0,"id":5,"type":"prey","phase":"dead","x":"off","y":"off"}
//! ```
//!
//! Records of one state are contiguous and in ascending id order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Agent, AgentType, Engine, Phase, SystemState};
use crate::{Error, Result};

pub const FORMAT: &str = "gdn-lab-snapshot";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub format: String,
    pub version: u32,
    pub engine: Engine,
    pub seed: u64,
}

impl SnapshotHeader {
    pub fn new(engine: &Engine, seed: u64) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            engine: engine.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum OffGrid {
    #[serde(rename = "off")]
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Coord {
    Cell(usize),
    Off(OffGrid),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    t: usize,
    r: usize,
    id: usize,
    #[serde(rename = "type")]
    kind: AgentType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phase: Option<Phase>,
    x: Coord,
    y: Coord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent: Option<usize>,
}

pub fn write_jsonl<'a, W: Write>(
    mut w: W,
    header: &SnapshotHeader,
    states: impl IntoIterator<Item = (usize, &'a SystemState)>,
) -> std::io::Result<()> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for (r, s) in states {
        for a in &s.agents {
            let (x, y) = match a.pos {
                Some((x, y)) => (Coord::Cell(x), Coord::Cell(y)),
                None => (Coord::Off(OffGrid::Off), Coord::Off(OffGrid::Off)),
            };
            let rec = Record {
                t: s.t,
                r,
                id: a.id,
                kind: a.kind,
                phase: a.phase,
                x,
                y,
                parent: a.parent,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()
}

pub fn save<'a>(
    path: &Path,
    header: &SnapshotHeader,
    states: impl IntoIterator<Item = (usize, &'a SystemState)>,
) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl(BufWriter::new(f), header, states).map_err(|e| Error::io(path, e))
}

/// Parses a snapshot; `path` is only used in error messages.
pub fn read_jsonl<R: BufRead>(reader: R, path: &Path) -> Result<(SnapshotHeader, Vec<(usize, SystemState)>)> {
    let mut lines = reader.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty snapshot"))?;
    let first = first.map_err(|e| Error::io(path, e))?;
    let header: SnapshotHeader = serde_json::from_str(&first)
        .map_err(|e| Error::format(path, format!("line 1: bad header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::format(
            path,
            format!("unsupported snapshot {} v{}", header.format, header.version),
        ));
    }
    let (model, grid) = (header.engine.kind(), header.engine.grid());

    let mut states: Vec<(usize, SystemState)> = Vec::new();
    for (ln, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", ln + 1)))?;
        let pos = match (rec.x, rec.y) {
            (Coord::Cell(x), Coord::Cell(y)) => Some((x, y)),
            (Coord::Off(_), Coord::Off(_)) => None,
            _ => {
                return Err(Error::format(
                    path,
                    format!("line {}: x and y disagree on being off-grid", ln + 1),
                ))
            }
        };
        let agent = Agent {
            id: rec.id,
            kind: rec.kind,
            phase: rec.phase,
            pos,
            parent: rec.parent,
        };
        let starts_new = match states.last() {
            Some((r, s)) => *r != rec.r || s.t != rec.t || rec.id == 0,
            None => true,
        };
        if starts_new {
            states.push((
                rec.r,
                SystemState {
                    model,
                    grid,
                    t: rec.t,
                    agents: Vec::new(),
                },
            ));
        }
        let (_, s) = states.last_mut().expect("pushed above");
        if agent.id != s.agents.len() {
            return Err(Error::format(
                path,
                format!("line {}: agent id {} out of order", ln + 1, agent.id),
            ));
        }
        s.agents.push(agent);
    }
    for (_, s) in &states {
        s.validate()
            .map_err(|e| Error::format(path, format!("state t={}: {e}", s.t)))?;
    }
    Ok((header, states))
}

pub fn load(path: &Path) -> Result<(SnapshotHeader, Vec<(usize, SystemState)>)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(BufReader::new(f), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abm::{PredPreyParams, SchellingParams};

    fn roundtrip(engine: Engine) {
        let traj = engine.simulate().unwrap();
        let header = SnapshotHeader::new(&engine, engine.seed());
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &header, traj.iter().map(|s| (0, s))).unwrap();
        let (h, states) = read_jsonl(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(h, header);
        let back: Vec<SystemState> = states.into_iter().map(|(_, s)| s).collect();
        assert_eq!(back, traj);
    }

    #[test]
    fn schelling_roundtrip() {
        roundtrip(Engine::Schelling(SchellingParams {
            grid: 8,
            steps: 3,
            seed: 5,
            ..SchellingParams::default()
        }));
    }

    #[test]
    fn predprey_roundtrip_with_off_grid_agents() {
        let engine = Engine::PredPrey(PredPreyParams {
            grid: 6,
            steps: 4,
            seed: 2,
            ..PredPreyParams::default()
        });
        roundtrip(engine.clone());
        let s = engine.initial_state().unwrap();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &SnapshotHeader::new(&engine, 2), [(0, &s)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"x\":\"off\""));
        assert!(text.contains("\"phase\":\"unborn\""));
    }

    #[test]
    fn garbage_is_a_format_error() {
        let engine = Engine::Schelling(SchellingParams::default());
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &SnapshotHeader::new(&engine, 0), []).unwrap();
        buf.extend_from_slice(b"{\"t\":0}\n");
        assert!(matches!(
            read_jsonl(&buf[..], Path::new("mem")),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            read_jsonl(&b"not json\n"[..], Path::new("mem")),
            Err(Error::Format { .. })
        ));
    }
}
