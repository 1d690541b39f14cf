use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{neighbor_cells, Agent, AgentType, Cell, MacroStats, ModelKind, Phase, Step, SystemState, VON_NEUMANN};
use crate::seed::Rng;
use crate::{Error, Result};

/// Outcome columns of the transition matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Die,
    Move,
    TurnPregnant,
    TurnAlive,
    StayDead,
    StayUnborn,
}

impl Outcome {
    pub const ALL: [Outcome; 6] = [
        Outcome::Die,
        Outcome::Move,
        Outcome::TurnPregnant,
        Outcome::TurnAlive,
        Outcome::StayDead,
        Outcome::StayUnborn,
    ];
}

/// Rows of the transition matrix that apply to Alive agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AliveRow {
    PredatorWithPrey = 0,
    PredatorAlone = 1,
    PreyWithPredator = 2,
    PreyAlone = 3,
}

impl AliveRow {
    pub fn select(kind: AgentType, opposite_neighbor: bool) -> Self {
        match (kind, opposite_neighbor) {
            (AgentType::Predator, true) => AliveRow::PredatorWithPrey,
            (AgentType::Predator, false) => AliveRow::PredatorAlone,
            (_, true) => AliveRow::PreyWithPredator,
            (_, false) => AliveRow::PreyAlone,
        }
    }
}

/// Seven rows of outcome probabilities over the six [`Outcome`] columns.
///
/// Rows 0-3 are the Alive rows ([`AliveRow`]); rows 4-6 are the deterministic
/// Pregnant (turn alive), Dead (stay dead) and Unborn-with-non-pregnant-parent
/// (stay unborn) rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix(pub [[f64; 6]; 7]);

const DETERMINISTIC_ROWS: [[f64; 6]; 3] = [
    [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
];

impl TransitionMatrix {
    /// Builds a matrix from the four Alive rows given as (die, move, pregnant).
    pub fn from_alive_rows(rows: [[f64; 3]; 4]) -> Self {
        let mut m = [[0.0; 6]; 7];
        for (i, r) in rows.iter().enumerate() {
            m[i][..3].copy_from_slice(r);
        }
        m[4..].copy_from_slice(&DETERMINISTIC_ROWS);
        Self(m)
    }

    /// The four shipped parameterizations, numbered 1 to 4.
    pub fn preset(n: usize) -> Result<Self> {
        let rows = match n {
            1 => [
                [0.15, 0.45, 0.40],
                [0.25, 0.55, 0.20],
                [0.30, 0.45, 0.25],
                [0.15, 0.40, 0.45],
            ],
            2 => [
                [0.35, 0.45, 0.20],
                [0.25, 0.60, 0.15],
                [0.45, 0.50, 0.05],
                [0.35, 0.35, 0.30],
            ],
            3 => [
                [0.15, 0.30, 0.55],
                [0.30, 0.55, 0.15],
                [0.70, 0.20, 0.10],
                [0.10, 0.40, 0.50],
            ],
            4 => [
                [0.15, 0.35, 0.50],
                [0.25, 0.45, 0.30],
                [0.45, 0.40, 0.15],
                [0.30, 0.40, 0.30],
            ],
            _ => return Err(Error::Parameter(format!("no transition preset {n}"))),
        };
        Ok(Self::from_alive_rows(rows))
    }

    pub fn alive_row(&self, row: AliveRow) -> &[f64; 6] {
        &self.0[row as usize]
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.0.iter().enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Parameter(format!("transition row {i} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Parameter(format!("transition row {i} sums to {sum}")));
            }
            if i < 4 && row[3..].iter().any(|p| *p != 0.0) {
                return Err(Error::Parameter(format!(
                    "alive row {i} puts mass on a non-alive transition"
                )));
            }
        }
        if self.0[4..] != DETERMINISTIC_ROWS {
            return Err(Error::Parameter(
                "pregnant, dead and unborn rows must be deterministic".into(),
            ));
        }
        Ok(())
    }

    /// Draws an outcome for an Alive agent.
    pub fn sample_alive(&self, row: AliveRow, rng: &mut Rng) -> Outcome {
        let probs = self.alive_row(row);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in probs.iter().enumerate().take(3) {
            acc += p;
            if u < acc {
                return Outcome::ALL[k];
            }
        }
        // Rounding left u above the cumulative sum; take the last non-zero column.
        let last = (0..3).rev().find(|&k| probs[k] > 0.0).unwrap_or(1);
        Outcome::ALL[last]
    }
}

impl Default for TransitionMatrix {
    fn default() -> Self {
        Self::preset(1).expect("preset 1 exists")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredPreyParams {
    pub grid: usize,
    pub transitions: TransitionMatrix,
    /// Fraction of cells holding an Alive agent at t = 0.
    pub density: f64,
    /// Total agents including the initially Unborn; `2 * grid^2` when unset.
    pub agents: Option<usize>,
    pub steps: usize,
    pub seed: u64,
}

impl Default for PredPreyParams {
    fn default() -> Self {
        Self {
            grid: 32,
            transitions: TransitionMatrix::default(),
            density: 0.3,
            agents: None,
            steps: 10,
            seed: 0,
        }
    }
}

impl PredPreyParams {
    pub fn num_agents(&self) -> usize {
        self.agents.unwrap_or(2 * self.grid * self.grid)
    }

    pub fn num_alive(&self) -> usize {
        (self.density * (self.grid * self.grid) as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid < 3 {
            return Err(Error::Parameter(format!("grid size {} below 3", self.grid)));
        }
        self.transitions.validate()?;
        if self.density > 1.0 {
            return Err(Error::Capacity(format!(
                "alive density {} exceeds one agent per cell",
                self.density
            )));
        }
        let (n, alive) = (self.num_agents(), self.num_alive());
        if alive < 2 {
            return Err(Error::Parameter(format!(
                "density {} gives fewer than one alive agent per kind",
                self.density
            )));
        }
        if alive > n {
            return Err(Error::Capacity(format!("{alive} alive agents but only {n} in total")));
        }
        if n / 2 < alive / 2 || n - n / 2 < alive - alive / 2 {
            return Err(Error::Capacity("alive agents do not fit the 1:1 kind split".into()));
        }
        Ok(())
    }

    /// Kinds split 1:1; `round(density * L^2)` Alive agents at distinct cells
    /// (also split 1:1); everyone else Unborn with a parent drawn uniformly
    /// from the initially Alive agents of the same kind.
    pub fn init(&self, rng: &mut Rng) -> Result<SystemState> {
        self.validate()?;
        let l = self.grid;
        let (n, alive) = (self.num_agents(), self.num_alive());
        let mut kinds: Vec<AgentType> = (0..n)
            .map(|i| if i < n - n / 2 { AgentType::Prey } else { AgentType::Predator })
            .collect();
        kinds.shuffle(rng);

        let alive_pred = alive / 2;
        let alive_prey = alive - alive_pred;
        let mut is_alive = vec![false; n];
        let mut parents: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (k, kind) in [AgentType::Prey, AgentType::Predator].into_iter().enumerate() {
            let mut ids: Vec<usize> = (0..n).filter(|&i| kinds[i] == kind).collect();
            ids.shuffle(rng);
            let take = if k == 0 { alive_prey } else { alive_pred };
            for &i in &ids[..take] {
                is_alive[i] = true;
            }
            parents[k] = ids[..take].to_vec();
            parents[k].sort_unstable();
        }

        let cells = rand::seq::index::sample(rng, l * l, alive);
        let mut cells = cells.iter();
        let mut agents = Vec::with_capacity(n);
        for (id, &kind) in kinds.iter().enumerate() {
            let agent = if is_alive[id] {
                let c = cells.next().expect("one cell per alive agent");
                Agent {
                    id,
                    kind,
                    phase: Some(Phase::Alive),
                    pos: Some((c % l, c / l)),
                    parent: None,
                }
            } else {
                let pool = &parents[usize::from(kind == AgentType::Predator)];
                Agent {
                    id,
                    kind,
                    phase: Some(Phase::Unborn),
                    pos: None,
                    parent: Some(pool[rng.random_range(0..pool.len())]),
                }
            };
            agents.push(agent);
        }
        Ok(SystemState {
            model: ModelKind::PredPrey,
            grid: l,
            t: 0,
            agents,
        })
    }

    /// Whether an on-grid agent of the opposite kind sits in a Von Neumann
    /// cell of `cell`.
    fn opposite_nearby(counts: &KindCounts, cell: Cell, kind: AgentType, l: usize) -> bool {
        neighbor_cells(cell, &VON_NEUMANN, l).any(|c| counts.opposite(c, kind) > 0)
    }

    /// Simultaneous update: every decision reads the time-`t` state.
    pub fn step(&self, state: &SystemState, rng: &mut Rng) -> Result<Step> {
        let l = state.grid;
        let mut next = state.clone();
        next.t = state.t + 1;
        if !state.agents.iter().any(|a| a.phase.is_some_and(Phase::is_active)) {
            return Ok(Step { next, terminal: true });
        }
        let counts = KindCounts::build(state);
        let uniform_neighbor = |cell: Cell, rng: &mut Rng| {
            let (dx, dy) = VON_NEUMANN[rng.random_range(0..4)];
            (super::wrap(cell.0, dx, l), super::wrap(cell.1, dy, l))
        };

        for (a, out) in state.agents.iter().zip(next.agents.iter_mut()) {
            let phase = a.phase.ok_or_else(|| {
                Error::Parameter(format!("predator-prey agent {} without phase", a.id))
            })?;
            match phase {
                Phase::Alive => {
                    let cell = a.pos.expect("alive agents are on-grid");
                    let row = AliveRow::select(a.kind, Self::opposite_nearby(&counts, cell, a.kind, l));
                    match self.transitions.sample_alive(row, rng) {
                        Outcome::Move => out.pos = Some(uniform_neighbor(cell, rng)),
                        Outcome::TurnPregnant => out.phase = Some(Phase::Pregnant),
                        Outcome::Die => {
                            out.phase = Some(Phase::Dead);
                            out.pos = None;
                        }
                        other => unreachable!("validated alive rows never yield {other:?}"),
                    }
                }
                Phase::Pregnant => out.phase = Some(Phase::Alive),
                Phase::Dead => {}
                Phase::Unborn => {
                    let pid = a.parent.ok_or_else(|| {
                        Error::Parameter(format!("unborn agent {} has no parent", a.id))
                    })?;
                    let parent = state.agent(pid)?;
                    if parent.phase == Some(Phase::Pregnant) {
                        let cell = parent.pos.expect("pregnant agents are on-grid");
                        out.phase = Some(Phase::Alive);
                        out.pos = Some(uniform_neighbor(cell, rng));
                    }
                }
            }
        }
        Ok(Step { next, terminal: false })
    }

    pub fn macro_stats(&self, state: &SystemState) -> MacroStats {
        let count = |kind| {
            state
                .agents
                .iter()
                .filter(|a| a.kind == kind && a.phase.is_some_and(Phase::is_active))
                .count()
        };
        MacroStats::PredPrey {
            prey_active: count(AgentType::Prey),
            predator_active: count(AgentType::Predator),
        }
    }
}

/// Per-cell counts of on-grid agents by kind.
struct KindCounts {
    l: usize,
    prey: Vec<u32>,
    predator: Vec<u32>,
}

impl KindCounts {
    fn build(state: &SystemState) -> Self {
        let l = state.grid;
        let mut c = Self {
            l,
            prey: vec![0; l * l],
            predator: vec![0; l * l],
        };
        for a in &state.agents {
            if let (Some((x, y)), Some(p)) = (a.pos, a.phase) {
                if p.is_active() {
                    match a.kind {
                        AgentType::Predator => c.predator[y * l + x] += 1,
                        _ => c.prey[y * l + x] += 1,
                    }
                }
            }
        }
        c
    }

    fn opposite(&self, (x, y): Cell, kind: AgentType) -> u32 {
        match kind {
            AgentType::Predator => self.prey[y * self.l + x],
            _ => self.predator[y * self.l + x],
        }
    }
}
