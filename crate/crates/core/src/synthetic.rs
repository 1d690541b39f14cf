//! Synthetic transition tasks with known conditional distributions, for
//! checking that a surrogate recovers neighbor-dependent randomness.
//!
//! Every layout places the same collection of prey clusters on a
//! Predator-Prey grid: singletons, dominoes and 2x2 squares, one per 3x3
//! tile, so each agent has 0, 1 or 2 Von Neumann neighbors. Shuffling which
//! tile holds which cluster changes every agent's neighbor count while
//! keeping the agent count fixed. In the next state each agent becomes
//! Pregnant with probability `probs[neighbors]` and otherwise stays Alive,
//! in place.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::abm::{Agent, AgentType, ModelKind, Phase, SystemState};
use crate::encode::build_graph;
use crate::seed::Rng;
use crate::{Error, Result};

const SHAPES: [&[(usize, usize)]; 3] = [&[(0, 0)], &[(0, 0), (1, 0)], &[(0, 0), (1, 0), (0, 1), (1, 1)]];

#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliTask {
    pub grid: usize,
    /// Number of clusters of each shape (singleton, domino, square).
    pub clusters: [usize; 3],
    /// Pregnancy probability for 0, 1 and 2 neighbors.
    pub probs: [f64; 3],
}

impl BernoulliTask {
    pub fn new(grid: usize, clusters: [usize; 3], probs: [f64; 3]) -> Result<Self> {
        let tiles = (grid / 3) * (grid / 3);
        if clusters.iter().sum::<usize>() > tiles {
            return Err(Error::Capacity(format!(
                "{} clusters do not fit {tiles} tiles",
                clusters.iter().sum::<usize>()
            )));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Parameter("probabilities must lie in [0, 1]".into()));
        }
        Ok(Self { grid, clusters, probs })
    }

    pub fn num_agents(&self) -> usize {
        self.clusters.iter().zip(SHAPES).map(|(c, s)| c * s.len()).sum()
    }

    /// A random arrangement of the clusters; agent ids follow tile order.
    pub fn layout(&self, rng: &mut Rng) -> SystemState {
        let per_row = self.grid / 3;
        let mut tiles: Vec<usize> = (0..per_row * per_row).collect();
        tiles.shuffle(rng);
        let mut assigned: Vec<(usize, usize)> = Vec::new();
        let mut k = 0;
        for (shape, &count) in self.clusters.iter().enumerate() {
            for _ in 0..count {
                assigned.push((tiles[k], shape));
                k += 1;
            }
        }
        assigned.sort_unstable();
        let mut agents = Vec::with_capacity(self.num_agents());
        for (tile, shape) in assigned {
            let (tx, ty) = (3 * (tile % per_row), 3 * (tile / per_row));
            for &(dx, dy) in SHAPES[shape] {
                agents.push(Agent {
                    id: agents.len(),
                    kind: AgentType::Prey,
                    phase: Some(Phase::Alive),
                    pos: Some((tx + dx, ty + dy)),
                    parent: None,
                });
            }
        }
        SystemState {
            model: ModelKind::PredPrey,
            grid: self.grid,
            t: 0,
            agents,
        }
    }

    /// Neighbor count of every agent of `state`.
    pub fn neighbor_counts(&self, state: &SystemState) -> Vec<usize> {
        let g = build_graph(state);
        (0..state.len()).map(|i| g.in_neighbors(i).len()).collect()
    }

    /// One draw of the next state.
    pub fn outcome(&self, state: &SystemState, rng: &mut Rng) -> SystemState {
        let counts = self.neighbor_counts(state);
        let mut next = state.clone();
        next.t += 1;
        for (a, &c) in next.agents.iter_mut().zip(&counts) {
            if rng.random_bool(self.probs[c.min(2)]) {
                a.phase = Some(Phase::Pregnant);
            }
        }
        next
    }

    /// `layouts` random conditions with `outcomes` draws each.
    pub fn dataset(&self, layouts: usize, outcomes: usize, rng: &mut Rng) -> Vec<(SystemState, Vec<SystemState>)> {
        (0..layouts)
            .map(|_| {
                let s = self.layout(rng);
                let o = (0..outcomes).map(|_| self.outcome(&s, rng)).collect();
                (s, o)
            })
            .collect()
    }

    /// Per neighbor count: Pregnant frequency pooled over `samples`, and the
    /// number of agent draws behind it.
    pub fn frequencies(&self, state: &SystemState, samples: &[SystemState]) -> [(f64, usize); 3] {
        let counts = self.neighbor_counts(state);
        let mut hits = [0usize; 3];
        let mut total = [0usize; 3];
        for s in samples {
            for (a, &c) in s.agents.iter().zip(&counts) {
                total[c.min(2)] += 1;
                if a.phase == Some(Phase::Pregnant) {
                    hits[c.min(2)] += 1;
                }
            }
        }
        std::array::from_fn(|k| (hits[k] as f64 / total[k].max(1) as f64, total[k]))
    }

    /// Mean over agents of the phase EMD between each agent's sampled
    /// distribution and its true Bernoulli outcome.
    pub fn conditional_emd(&self, state: &SystemState, samples: &[SystemState]) -> f64 {
        let counts = self.neighbor_counts(state);
        let n = state.len();
        let mut total = 0.0;
        for i in 0..n {
            let p = self.probs[counts[i].min(2)];
            let preg = samples
                .iter()
                .filter(|s| s.agents[i].phase == Some(Phase::Pregnant))
                .count() as f64
                / samples.len() as f64;
            let alive = samples
                .iter()
                .filter(|s| s.agents[i].phase == Some(Phase::Alive))
                .count() as f64
                / samples.len() as f64;
            let other = 1.0 - preg - alive;
            total += 0.5 * ((preg - p).abs() + (alive - (1.0 - p)).abs() + other.abs());
        }
        total / n as f64
    }
}
