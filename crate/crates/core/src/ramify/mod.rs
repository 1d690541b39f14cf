//! Branch-structured datasets.
//!
//! A dataset holds a main trajectory `main[0..=T]` and, for every step
//! `t < T`, `R` sibling successors of `main[t]` drawn with independent
//! streams. Child `(t, r)` is stepped with `derive(root, [stream, t, r])`;
//! `r = 0` is the main successor and `r = 1..=R` are the siblings.

mod store;

use rand::Rng as _;

pub use store::{load, save, Manifest, MANIFEST_FILE};

use crate::abm::{Agent, Engine, SystemState};
use crate::seed::{self, stream, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RamificationDataset {
    pub engine: Engine,
    pub root_seed: u64,
    /// Stream tag the children were derived under.
    pub stream: u64,
    /// Number of transitions asked for; `main.len() - 1` may be smaller when
    /// the engine terminated early.
    pub requested_steps: usize,
    pub branches: usize,
    pub main: Vec<SystemState>,
    /// `siblings[t][r - 1]` is sibling `r` of `main[t]`.
    pub siblings: Vec<Vec<SystemState>>,
}

/// One agent's conditioning context and sibling outcome.
#[derive(Debug, Clone, Copy)]
pub struct TransitionTuple<'a> {
    pub t: usize,
    pub r: usize,
    pub agent: usize,
    /// The whole main-branch state at `t`; neighbors come from its graph.
    pub condition: &'a SystemState,
    pub target: &'a Agent,
}

impl RamificationDataset {
    /// Number of transitions actually stored.
    pub fn steps(&self) -> usize {
        self.main.len() - 1
    }

    pub fn num_agents(&self) -> usize {
        self.main[0].len()
    }

    pub fn truncated(&self) -> bool {
        self.steps() < self.requested_steps
    }

    pub fn num_tuples(&self) -> usize {
        self.steps() * self.branches * self.num_agents()
    }

    /// Conditioning state and sibling `r` (1-based) at step `t`.
    pub fn pair(&self, t: usize, r: usize) -> Result<(&SystemState, &SystemState)> {
        if t >= self.steps() || r == 0 || r > self.branches {
            return Err(Error::Parameter(format!(
                "no sibling ({t}, {r}) in a {}x{} dataset",
                self.steps(),
                self.branches
            )));
        }
        Ok((&self.main[t], &self.siblings[t][r - 1]))
    }

    /// Uniform `(t, r)` with `t < T` and `1 <= r <= R`.
    pub fn sample_pair(&self, rng: &mut Rng) -> Result<(usize, usize)> {
        if self.steps() == 0 || self.branches == 0 {
            return Err(Error::EmptyDataset(format!(
                "{} steps x {} branches",
                self.steps(),
                self.branches
            )));
        }
        Ok((
            rng.random_range(0..self.steps()),
            rng.random_range(1..=self.branches),
        ))
    }

    /// Every tuple, ordered by `t`, then `r`, then agent.
    pub fn tuples(&self) -> impl Iterator<Item = TransitionTuple<'_>> + '_ {
        (0..self.steps()).flat_map(move |t| {
            (1..=self.branches).flat_map(move |r| {
                let cond = &self.main[t];
                self.siblings[t][r - 1]
                    .agents
                    .iter()
                    .enumerate()
                    .map(move |(agent, target)| TransitionTuple {
                        t,
                        r,
                        agent,
                        condition: cond,
                        target,
                    })
            })
        })
    }

    /// Checks sibling/parent structure.
    pub fn validate(&self) -> Result<()> {
        if self.main.is_empty() {
            return Err(Error::EmptyDataset("no main-branch states".into()));
        }
        if self.siblings.len() != self.steps() {
            return Err(Error::Parameter(format!(
                "{} sibling groups for {} steps",
                self.siblings.len(),
                self.steps()
            )));
        }
        let n = self.num_agents();
        for (t, group) in self.siblings.iter().enumerate() {
            if group.len() != self.branches {
                return Err(Error::Parameter(format!(
                    "step {t} has {} siblings, expected {}",
                    group.len(),
                    self.branches
                )));
            }
            for s in group.iter().chain([&self.main[t + 1]]) {
                if s.len() != n || s.t != self.main[t].t + 1 {
                    return Err(Error::Parameter(format!("malformed child at step {t}")));
                }
            }
        }
        Ok(())
    }
}

/// Children of `state` for `r = 0..=branches` at dataset step `t`.
fn children(
    engine: &Engine,
    state: &SystemState,
    root: u64,
    tag: u64,
    t: usize,
    branches: usize,
) -> Result<Option<Vec<SystemState>>> {
    let mut out = Vec::with_capacity(branches + 1);
    for r in 0..=branches {
        let mut rng = seed::derive_rng(root, &[tag, t as u64, r as u64]);
        let step = engine.step(state, &mut rng)?;
        if step.terminal {
            return Ok(None);
        }
        out.push(step.next);
    }
    Ok(Some(out))
}

/// Ramification from an explicit starting state.
pub fn generate_from(
    engine: &Engine,
    start: SystemState,
    steps: usize,
    branches: usize,
    root: u64,
    tag: u64,
) -> Result<RamificationDataset> {
    engine.validate()?;
    let mut main = vec![start];
    let mut siblings = Vec::with_capacity(steps);
    for t in 0..steps {
        let Some(mut kids) = children(engine, &main[t], root, tag, t, branches)? else {
            break;
        };
        let first = kids.remove(0);
        main.push(first);
        siblings.push(kids);
    }
    Ok(RamificationDataset {
        engine: engine.clone(),
        root_seed: root,
        stream: tag,
        requested_steps: steps,
        branches,
        main,
        siblings,
    })
}

/// Training ramification: initial state from `derive(root, [INIT])`,
/// children under the `BRANCH` stream.
pub fn generate(engine: &Engine, steps: usize, branches: usize, root: u64) -> Result<RamificationDataset> {
    let init = engine.init(&mut seed::derive_rng(root, &[stream::INIT]))?;
    generate_from(engine, init, steps, branches, root, stream::BRANCH)
}

/// Out-of-training ramification starting from the last main-branch state of
/// `dataset`. `states` counts states including the start, so it yields
/// `states - 1` conditioning steps. Children use the `FUTURE` stream.
pub fn future_ramification(
    engine: &Engine,
    dataset: &RamificationDataset,
    states: usize,
    branches: usize,
) -> Result<RamificationDataset> {
    if states == 0 {
        return Err(Error::Parameter("future ramification needs at least one state".into()));
    }
    let start = dataset.main.last().expect("validated non-empty").clone();
    generate_from(engine, start, states - 1, branches, dataset.root_seed, stream::FUTURE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abm::{PredPreyParams, SchellingParams};

    fn schelling() -> Engine {
        Engine::Schelling(SchellingParams {
            grid: 8,
            ..SchellingParams::default()
        })
    }

    #[test]
    fn counts_by_construction() {
        let d = generate(&schelling(), 2, 3, 1).unwrap();
        d.validate().unwrap();
        assert_eq!(d.main.len(), 3);
        assert_eq!(d.siblings.iter().map(Vec::len).sum::<usize>(), 6);
        assert_eq!(d.num_tuples(), 2 * 3 * d.num_agents());
        assert_eq!(d.tuples().count(), d.num_tuples());
    }

    #[test]
    fn tuples_condition_on_the_main_branch() {
        let d = generate(&schelling(), 3, 2, 4).unwrap();
        for tup in d.tuples() {
            assert_eq!(tup.condition, &d.main[tup.t]);
            assert_eq!(tup.target, &d.siblings[tup.t][tup.r - 1].agents[tup.agent]);
        }
    }

    #[test]
    fn same_root_same_dataset() {
        let e = Engine::PredPrey(PredPreyParams {
            grid: 6,
            ..PredPreyParams::default()
        });
        assert_eq!(generate(&e, 3, 4, 9).unwrap(), generate(&e, 3, 4, 9).unwrap());
        assert_ne!(generate(&e, 3, 4, 9).unwrap().main, generate(&e, 3, 4, 10).unwrap().main);
    }

    #[test]
    fn converged_engine_truncates() {
        let e = Engine::Schelling(SchellingParams {
            grid: 8,
            tolerance: 0.0,
            ..SchellingParams::default()
        });
        let d = generate(&e, 5, 2, 0).unwrap();
        assert_eq!(d.steps(), 0);
        assert!(d.truncated());
        assert!(matches!(d.sample_pair(&mut seed::rng(0)), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn future_starts_at_the_terminal_state() {
        let d = generate(&schelling(), 4, 2, 3).unwrap();
        let f = future_ramification(&schelling(), &d, 25, 3).unwrap();
        assert_eq!(f.main[0], *d.main.last().unwrap());
        assert_eq!(f.steps(), 24);
        assert_eq!(f.stream, stream::FUTURE);
        // Child (0, 1) of the future set differs from what the training
        // stream would have produced from the same state.
        let mut rng = seed::derive_rng(3, &[stream::BRANCH, 0, 1]);
        let alt = schelling().step(&f.main[0], &mut rng).unwrap().next;
        assert_ne!(alt, f.siblings[0][0]);
    }

    #[test]
    fn pair_sampling_is_uniform() {
        let d = generate(&schelling(), 4, 5, 2).unwrap();
        let mut rng = seed::rng(77);
        let mut counts = vec![0usize; 20];
        let draws = 100_000;
        for _ in 0..draws {
            let (t, r) = d.sample_pair(&mut rng).unwrap();
            counts[t * 5 + r - 1] += 1;
        }
        let e = draws as f64 / 20.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 99th percentile of chi-square with 19 degrees of freedom.
        assert!(chi2 < 36.19, "chi2 = {chi2}");
    }
}
