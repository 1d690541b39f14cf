//! Ground-truth simulators.
//!
//! Both models share one state representation, [`SystemState`], so the
//! codec, graph builder, datasets and evaluators never branch on the model
//! beyond what the rules require.

mod predprey;
mod schelling;
pub mod snapshot;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use predprey::{AliveRow, Outcome, PredPreyParams, TransitionMatrix};
pub use schelling::SchellingParams;

use crate::seed::{self, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Schelling,
    #[serde(rename = "predprey")]
    PredPrey,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Schelling => "schelling",
            ModelKind::PredPrey => "predprey",
        }
    }
}

/// Fixed per-agent category: color for Schelling, kind for Predator-Prey.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentType {
    #[serde(rename = "C1")]
    C1,
    #[serde(rename = "C2")]
    C2,
    #[serde(rename = "prey")]
    Prey,
    #[serde(rename = "predator")]
    Predator,
}

impl AgentType {
    pub fn name(self) -> &'static str {
        match self {
            AgentType::C1 => "C1",
            AgentType::C2 => "C2",
            AgentType::Prey => "prey",
            AgentType::Predator => "predator",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Unborn,
    Alive,
    Pregnant,
    Dead,
}

impl Phase {
    /// Canonical ordering, also used for one-hot encoding.
    pub const ALL: [Phase; 4] = [Phase::Unborn, Phase::Alive, Phase::Pregnant, Phase::Dead];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Unborn => "unborn",
            Phase::Alive => "alive",
            Phase::Pregnant => "pregnant",
            Phase::Dead => "dead",
        }
    }

    /// Alive and Pregnant agents occupy a cell.
    pub fn is_active(self) -> bool {
        matches!(self, Phase::Alive | Phase::Pregnant)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Agent {
    pub id: usize,
    pub kind: AgentType,
    /// Life phase; `None` for models without one.
    pub phase: Option<Phase>,
    /// Grid cell, `None` when off-grid.
    pub pos: Option<Cell>,
    pub parent: Option<usize>,
}

/// Every agent at one timestep. `agents[i].id == i` always holds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemState {
    pub model: ModelKind,
    pub grid: usize,
    pub t: usize,
    pub agents: Vec<Agent>,
}

impl SystemState {
    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn agent(&self, id: usize) -> Result<&Agent> {
        self.agents.get(id).ok_or(Error::UnknownAgent(id))
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring `t`.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{:?}|{}|", self.model, self.grid));
        for a in &self.agents {
            h.update(serde_json::to_vec(a).expect("agents serialize"));
        }
        hex::encode(h.finalize())
    }

    /// Checks the structural invariants shared by both models.
    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.agents.iter().enumerate() {
            if a.id != i {
                return Err(Error::Parameter(format!("agent at index {i} has id {}", a.id)));
            }
            if let Some((x, y)) = a.pos {
                if x >= self.grid || y >= self.grid {
                    return Err(Error::Parameter(format!(
                        "agent {i} at ({x}, {y}) outside {0}x{0} grid",
                        self.grid
                    )));
                }
            }
            match (self.model, a.phase) {
                (ModelKind::Schelling, None) => {
                    if a.pos.is_none() {
                        return Err(Error::Parameter(format!("schelling agent {i} off-grid")));
                    }
                }
                (ModelKind::PredPrey, Some(p)) => {
                    if p.is_active() != a.pos.is_some() {
                        return Err(Error::Parameter(format!(
                            "agent {i} is {} but {} on the grid",
                            p.name(),
                            if a.pos.is_some() { "is" } else { "is not" }
                        )));
                    }
                    if let Some(pid) = a.parent {
                        let parent = self.agent(pid)?;
                        if parent.kind != a.kind || pid == i {
                            return Err(Error::Parameter(format!(
                                "agent {i} has invalid parent {pid}"
                            )));
                        }
                    }
                }
                _ => {
                    return Err(Error::Parameter(format!(
                        "agent {i} phase does not match model {:?}",
                        self.model
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Summary statistics tracked at the system level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum MacroStats {
    Schelling {
        happy: usize,
        agents: usize,
    },
    #[serde(rename = "predprey")]
    PredPrey {
        prey_active: usize,
        predator_active: usize,
    },
}

impl MacroStats {
    /// Named series values, in a fixed order per model.
    pub fn series(&self) -> Vec<(&'static str, f64)> {
        match *self {
            MacroStats::Schelling { happy, .. } => vec![("happy", happy as f64)],
            MacroStats::PredPrey {
                prey_active,
                predator_active,
            } => vec![
                ("prey_active", prey_active as f64),
                ("predator_active", predator_active as f64),
            ],
        }
    }
}

/// Result of advancing one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub next: SystemState,
    /// The input state was terminal (converged or extinct); `next` is a copy.
    pub terminal: bool,
}

/// A configured ground-truth model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum Engine {
    Schelling(SchellingParams),
    #[serde(rename = "predprey")]
    PredPrey(PredPreyParams),
}

impl Engine {
    pub fn kind(&self) -> ModelKind {
        match self {
            Engine::Schelling(_) => ModelKind::Schelling,
            Engine::PredPrey(_) => ModelKind::PredPrey,
        }
    }

    pub fn grid(&self) -> usize {
        match self {
            Engine::Schelling(p) => p.grid,
            Engine::PredPrey(p) => p.grid,
        }
    }

    pub fn steps(&self) -> usize {
        match self {
            Engine::Schelling(p) => p.steps,
            Engine::PredPrey(p) => p.steps,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Engine::Schelling(p) => p.seed,
            Engine::PredPrey(p) => p.seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            Engine::Schelling(p) => p.seed = seed,
            Engine::PredPrey(p) => p.seed = seed,
        }
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        match &mut self {
            Engine::Schelling(p) => p.steps = steps,
            Engine::PredPrey(p) => p.steps = steps,
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Engine::Schelling(p) => p.validate(),
            Engine::PredPrey(p) => p.validate(),
        }
    }

    pub fn init(&self, rng: &mut Rng) -> Result<SystemState> {
        match self {
            Engine::Schelling(p) => p.init(rng),
            Engine::PredPrey(p) => p.init(rng),
        }
    }

    /// Initial state drawn from the configured seed's init stream.
    pub fn initial_state(&self) -> Result<SystemState> {
        self.init(&mut seed::derive_rng(self.seed(), &[seed::stream::INIT]))
    }

    pub fn step(&self, state: &SystemState, rng: &mut Rng) -> Result<Step> {
        match self {
            Engine::Schelling(p) => p.step(state, rng),
            Engine::PredPrey(p) => p.step(state, rng),
        }
    }

    pub fn macro_stats(&self, state: &SystemState) -> MacroStats {
        match self {
            Engine::Schelling(p) => p.macro_stats(state),
            Engine::PredPrey(p) => PredPreyParams::macro_stats(p, state),
        }
    }

    /// Runs from `state` for up to `steps` transitions, stopping at a
    /// terminal state. The returned trajectory starts with `state`.
    pub fn run_from(&self, state: SystemState, steps: usize, rng: &mut Rng) -> Result<Vec<SystemState>> {
        let mut traj = vec![state];
        for _ in 0..steps {
            let step = self.step(traj.last().expect("non-empty"), rng)?;
            if step.terminal {
                break;
            }
            traj.push(step.next);
        }
        Ok(traj)
    }

    /// Full trajectory from the configured seed: init stream for the
    /// initial state, `derive(seed, [TRUTH])` for the dynamics.
    pub fn simulate(&self) -> Result<Vec<SystemState>> {
        self.validate()?;
        let init = self.initial_state()?;
        let mut rng = seed::derive_rng(self.seed(), &[seed::stream::TRUTH]);
        self.run_from(init, self.steps(), &mut rng)
    }
}

/// Torus wrap of `v + d` into `0..l`.
pub(crate) fn wrap(v: usize, d: i64, l: usize) -> usize {
    (v as i64 + d).rem_euclid(l as i64) as usize
}

pub(crate) const VON_NEUMANN: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

pub(crate) const MOORE: [(i64, i64); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

pub(crate) fn neighbor_cells(cell: Cell, offsets: &[(i64, i64)], l: usize) -> impl Iterator<Item = Cell> + '_ {
    offsets
        .iter()
        .map(move |&(dx, dy)| (wrap(cell.0, dx, l), wrap(cell.1, dy, l)))
}

/// Cell -> agents lookup over on-grid agents, tolerant of shared cells.
pub(crate) struct CellIndex {
    l: usize,
    offsets: Vec<usize>,
    ids: Vec<usize>,
}

impl CellIndex {
    pub(crate) fn build(state: &SystemState) -> Self {
        let l = state.grid;
        let on_grid = |a: &Agent| a.pos.filter(|_| a.phase.is_none_or(Phase::is_active));
        let mut offsets = vec![0usize; l * l + 1];
        for a in &state.agents {
            if let Some((x, y)) = on_grid(a) {
                offsets[y * l + x + 1] += 1;
            }
        }
        for i in 0..l * l {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut ids = vec![0; offsets[l * l]];
        for a in &state.agents {
            if let Some((x, y)) = on_grid(a) {
                let c = y * l + x;
                ids[fill[c]] = a.id;
                fill[c] += 1;
            }
        }
        Self { l, offsets, ids }
    }

    pub(crate) fn at(&self, (x, y): Cell) -> &[usize] {
        let c = y * self.l + x;
        &self.ids[self.offsets[c]..self.offsets[c + 1]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_is_modular() {
        assert_eq!(wrap(0, -1, 5), 4);
        assert_eq!(wrap(4, 1, 5), 0);
        assert_eq!(wrap(2, -12, 5), 0);
    }

    #[test]
    fn engine_json_is_tagged_by_model() {
        let e = Engine::Schelling(SchellingParams::default());
        let s = serde_json::to_string(&e).unwrap();
        assert!(s.contains("\"model\":\"schelling\""));
        let back: Engine = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
        let p = Engine::PredPrey(PredPreyParams::default());
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"model\":\"predprey\""));
        assert_eq!(serde_json::from_str::<Engine>(&s).unwrap(), p);
    }

    #[test]
    fn digest_ignores_time_only() {
        let e = Engine::Schelling(SchellingParams {
            grid: 5,
            ..SchellingParams::default()
        });
        let s = e.initial_state().unwrap();
        let mut s2 = s.clone();
        s2.t = 7;
        assert_eq!(s.digest(), s2.digest());
        s2.agents[0].pos = Some((s.agents[0].pos.unwrap().0, (s.agents[0].pos.unwrap().1 + 1) % 5));
        assert_ne!(s.digest(), s2.digest());
    }
}
