use std::cell::Cell as StdCell;

use serde::{Deserialize, Serialize};

use crate::abm::{neighbor_cells, CellIndex, ModelKind, Phase, SystemState, MOORE, VON_NEUMANN};

thread_local! {
    static BUILDS: StdCell<u64> = const { StdCell::new(0) };
}

/// Number of graphs built on the current thread so far.
pub fn graph_builds() -> u64 {
    BUILDS.with(StdCell::get)
}

/// Permutation-invariant reduction over in-neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    Sum,
    Mean,
}

impl Aggregation {
    pub fn for_model(model: ModelKind) -> Self {
        match model {
            ModelKind::Schelling => Aggregation::Mean,
            ModelKind::PredPrey => Aggregation::Sum,
        }
    }
}

/// Directed edges `j -> i` meaning `j` is in the neighborhood of `i`,
/// stored grouped by target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionGraph {
    pub t: usize,
    offsets: Vec<usize>,
    sources: Vec<usize>,
}

impl InteractionGraph {
    /// Builds a graph from explicit `(source, target)` pairs over `n` nodes.
    pub fn from_edges(t: usize, n: usize, edges: &[(usize, usize)]) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for &(_, dst) in edges {
            offsets[dst + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut sources = vec![0; edges.len()];
        for &(src, dst) in edges {
            sources[fill[dst]] = src;
            fill[dst] += 1;
        }
        for i in 0..n {
            sources[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Self { t, offsets, sources }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.sources.len()
    }

    /// Sources of edges into `i`, ascending.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.sources[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |i| self.in_neighbors(i).iter().map(move |&j| (j, i)))
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.in_neighbors(dst).binary_search(&src).is_ok()
    }

    /// Reduces neighbor rows of the row-major `n x d` matrix `x` into an
    /// `n x d` matrix. Nodes without in-edges get zeros.
    pub fn aggregate(&self, x: &[f64], d: usize, agg: Aggregation) -> Vec<f64> {
        let n = self.num_nodes();
        assert_eq!(x.len(), n * d, "feature matrix does not match graph");
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let nb = self.in_neighbors(i);
            if nb.is_empty() {
                continue;
            }
            let row = &mut out[i * d..(i + 1) * d];
            for &j in nb {
                for (o, v) in row.iter_mut().zip(&x[j * d..(j + 1) * d]) {
                    *o += v;
                }
            }
            if agg == Aggregation::Mean {
                let k = nb.len() as f64;
                row.iter_mut().for_each(|o| *o /= k);
            }
        }
        out
    }
}

/// Neighborhood graph of a state: Moore cells for Schelling; Von Neumann
/// cells among on-grid agents plus a parent edge into every Unborn agent for
/// Predator-Prey. Agents sharing a cell are not neighbors.
pub fn build_graph(state: &SystemState) -> InteractionGraph {
    BUILDS.with(|b| b.set(b.get() + 1));
    let offsets: &[(i64, i64)] = match state.model {
        ModelKind::Schelling => &MOORE,
        ModelKind::PredPrey => &VON_NEUMANN,
    };
    let cells = CellIndex::build(state);
    let mut edges = Vec::new();
    for a in &state.agents {
        let on_grid = a.phase.is_none_or(Phase::is_active);
        match (a.pos, on_grid) {
            (Some(cell), true) => {
                for c in neighbor_cells(cell, offsets, state.grid) {
                    edges.extend(cells.at(c).iter().map(|&j| (j, a.id)));
                }
            }
            _ => {
                if a.phase == Some(Phase::Unborn) {
                    if let Some(p) = a.parent {
                        edges.push((p, a.id));
                    }
                }
            }
        }
    }
    InteractionGraph::from_edges(state.t, state.len(), &edges)
}
