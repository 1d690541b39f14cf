//! Anything that can propose successor states: the ground-truth engines and
//! the learned models share this interface so the evaluation protocols can
//! treat them alike.

use crate::abm::{Engine, SystemState};
use crate::gdn::GdnModel;
use crate::seed::{self, stream, Rng};
use crate::Result;

pub trait Surrogate {
    /// Short label for reports.
    fn label(&self) -> String;

    /// `samples` independent successors of `state`, all agents committed
    /// simultaneously.
    fn sample_next(&self, state: &SystemState, samples: usize, rng: &mut Rng) -> Result<Vec<SystemState>>;
}

impl Surrogate for Engine {
    fn label(&self) -> String {
        format!("{}-engine", self.kind().name())
    }

    fn sample_next(&self, state: &SystemState, samples: usize, rng: &mut Rng) -> Result<Vec<SystemState>> {
        (0..samples).map(|_| Ok(self.step(state, rng)?.next)).collect()
    }
}

impl Surrogate for GdnModel {
    fn label(&self) -> String {
        match self.variant() {
            crate::gdn::Variant::Gdn => "gdn".into(),
            crate::gdn::Variant::DiffusionOnly { .. } => "diffusion-only".into(),
        }
    }

    fn sample_next(&self, state: &SystemState, samples: usize, rng: &mut Rng) -> Result<Vec<SystemState>> {
        self.sample_states(state, samples, rng)
    }
}

/// `runs` trajectories of `steps` transitions from `init`, each feeding one
/// sampled successor back as the next input. Run `r` draws from
/// `derive(root, [ROLLOUT, r])`.
pub fn rollout<S: Surrogate + ?Sized>(
    model: &S,
    init: &SystemState,
    steps: usize,
    runs: usize,
    root: u64,
) -> Result<Vec<Vec<SystemState>>> {
    (0..runs)
        .map(|r| {
            let mut rng = seed::derive_rng(root, &[stream::ROLLOUT, r as u64]);
            let mut traj = Vec::with_capacity(steps + 1);
            traj.push(init.clone());
            for _ in 0..steps {
                let next = model
                    .sample_next(traj.last().expect("non-empty"), 1, &mut rng)?
                    .pop()
                    .expect("one sample");
                traj.push(next);
            }
            Ok(traj)
        })
        .collect()
}
