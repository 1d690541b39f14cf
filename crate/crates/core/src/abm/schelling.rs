use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{neighbor_cells, wrap, Agent, AgentType, Cell, CellIndex, MacroStats, ModelKind, Step, SystemState, MOORE};
use crate::seed::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchellingParams {
    pub grid: usize,
    /// Minimum same-color neighbor fraction for an agent to be happy.
    pub tolerance: f64,
    pub density: f64,
    pub steps: usize,
    /// Largest relocation jump in cells; the grid size when unset.
    pub max_distance: Option<f64>,
    pub max_trials: usize,
    pub seed: u64,
}

impl Default for SchellingParams {
    fn default() -> Self {
        Self {
            grid: 51,
            tolerance: 0.75,
            density: 0.75,
            steps: 10,
            max_distance: None,
            max_trials: 100,
            seed: 0,
        }
    }
}

impl SchellingParams {
    pub fn max_distance(&self) -> f64 {
        self.max_distance.unwrap_or(self.grid as f64)
    }

    pub fn num_agents(&self) -> usize {
        (self.density * (self.grid * self.grid) as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid < 3 {
            return Err(Error::Parameter(format!("grid size {} below 3", self.grid)));
        }
        if !(0.0..=1.0).contains(&self.tolerance) {
            return Err(Error::Parameter(format!("tolerance {} outside [0, 1]", self.tolerance)));
        }
        if self.density > 1.0 {
            return Err(Error::Capacity(format!(
                "density {} exceeds one agent per cell",
                self.density
            )));
        }
        if !(self.density > 0.0) || self.num_agents() == 0 {
            return Err(Error::Parameter(format!("density {} places no agents", self.density)));
        }
        if !(self.max_distance() >= 1.0) {
            return Err(Error::Parameter("max relocation distance below 1".into()));
        }
        if self.max_trials == 0 {
            return Err(Error::Parameter("max relocation trials must be at least 1".into()));
        }
        Ok(())
    }

    /// Agents at distinct uniformly drawn cells with colors split 1:1.
    pub fn init(&self, rng: &mut Rng) -> Result<SystemState> {
        self.validate()?;
        let l = self.grid;
        let n = self.num_agents();
        let cells = rand::seq::index::sample(rng, l * l, n);
        let mut colors: Vec<AgentType> = (0..n)
            .map(|i| if i < n / 2 { AgentType::C1 } else { AgentType::C2 })
            .collect();
        colors.shuffle(rng);
        let agents = cells
            .iter()
            .zip(colors)
            .enumerate()
            .map(|(id, (c, kind))| Agent {
                id,
                kind,
                phase: None,
                pos: Some((c % l, c / l)),
                parent: None,
            })
            .collect();
        Ok(SystemState {
            model: ModelKind::Schelling,
            grid: l,
            t: 0,
            agents,
        })
    }

    /// Same-color fraction of the agent's occupied Moore neighbors and
    /// whether that meets the tolerance.
    pub fn similarity(&self, state: &SystemState, id: usize) -> Result<(f64, bool)> {
        state.agent(id)?;
        Ok(self.similarity_with(state, &CellIndex::build(state), id))
    }

    fn similarity_with(&self, state: &SystemState, cells: &CellIndex, id: usize) -> (f64, bool) {
        let me = &state.agents[id];
        let Some(cell) = me.pos else {
            return (0.0, false);
        };
        let (mut same, mut all) = (0usize, 0usize);
        for c in neighbor_cells(cell, &MOORE, state.grid) {
            for &j in cells.at(c) {
                all += 1;
                if state.agents[j].kind == me.kind {
                    same += 1;
                }
            }
        }
        let r = if all == 0 { 0.0 } else { same as f64 / all as f64 };
        (r, r >= self.tolerance)
    }

    /// Ids of unhappy agents, ascending.
    pub fn unhappy(&self, state: &SystemState) -> Vec<usize> {
        let cells = CellIndex::build(state);
        (0..state.len())
            .filter(|&i| !self.similarity_with(state, &cells, i).1)
            .collect()
    }

    /// Random-direction search for an empty cell. Returns the agent's
    /// current cell when every trial lands on an occupied one. The agent's
    /// own cell counts as empty.
    pub fn relocate(&self, state: &SystemState, id: usize, rng: &mut Rng) -> Result<Cell> {
        state.agent(id)?;
        let occ = Occupancy::build(state);
        Ok(self.relocate_with(state, &occ, id, rng))
    }

    fn relocate_with(&self, state: &SystemState, occ: &Occupancy, id: usize, rng: &mut Rng) -> Cell {
        let start = state.agents[id].pos.expect("schelling agents are on-grid");
        let (l, d_max) = (state.grid, self.max_distance());
        for _ in 0..self.max_trials {
            let theta = rng.random_range(0.0..TAU);
            let d = rng.random_range(0.0..d_max);
            let dx = (d * theta.cos()).floor() as i64;
            let dy = (d * theta.sin()).floor() as i64;
            let target = (wrap(start.0, dx, l), wrap(start.1, dy, l));
            let others = occ.count(target) - u32::from(target == start);
            if others == 0 {
                return target;
            }
        }
        start
    }

    /// One synchronous round: unhappiness is judged on the time-`t` layout,
    /// then unhappy agents relocate in ascending id order, each seeing the
    /// moves already committed this round.
    pub fn step(&self, state: &SystemState, rng: &mut Rng) -> Result<Step> {
        let unhappy = self.unhappy(state);
        let mut next = state.clone();
        next.t = state.t + 1;
        if unhappy.is_empty() {
            return Ok(Step { next, terminal: true });
        }
        let mut occ = Occupancy::build(state);
        for id in unhappy {
            let from = next.agents[id].pos.expect("on-grid");
            let to = self.relocate_with(&next, &occ, id, rng);
            if to != from {
                occ.remove(from);
                occ.add(to);
                next.agents[id].pos = Some(to);
            }
        }
        Ok(Step { next, terminal: false })
    }

    pub fn macro_stats(&self, state: &SystemState) -> MacroStats {
        let cells = CellIndex::build(state);
        let happy = (0..state.len())
            .filter(|&i| self.similarity_with(state, &cells, i).1)
            .count();
        MacroStats::Schelling {
            happy,
            agents: state.len(),
        }
    }
}

/// Agents per cell, updated as relocations commit.
struct Occupancy {
    l: usize,
    counts: Vec<u32>,
}

impl Occupancy {
    fn build(state: &SystemState) -> Self {
        let l = state.grid;
        let mut counts = vec![0; l * l];
        for a in &state.agents {
            if let Some((x, y)) = a.pos {
                counts[y * l + x] += 1;
            }
        }
        Self { l, counts }
    }

    fn count(&self, (x, y): Cell) -> u32 {
        self.counts[y * self.l + x]
    }

    fn add(&mut self, (x, y): Cell) {
        self.counts[y * self.l + x] += 1;
    }

    fn remove(&mut self, (x, y): Cell) {
        self.counts[y * self.l + x] -= 1;
    }
}
