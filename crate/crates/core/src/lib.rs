//! Agent-based model laboratory built around Graph Diffusion Network (GDN)
//! surrogates.
//!
//! The crate is organized bottom-up:
//!
//! - [`nn`]: dense reverse-mode autodiff, layers, initializers and Adam.
//! - [`abm`]: the Schelling and Predator-Prey ground-truth simulators.
//! - [`ramify`]: branch-structured ("ramification") datasets.
//! - [`encode`]: feature codec and interaction-graph construction.
//! - [`gdn`]: noise schedule, message-passing embedder, conditional denoiser,
//!   training loop, ancestral sampler and rollout.
//! - [`ablate`]: the diffusion-only and GNN-only baselines.
//! - [`eval`]: EMD/sMAPE metrics, micro and macro protocols, AR(1) baseline.
//! - [`pipeline`]: experiment configs, staged runs, manifests and plot export.

pub mod ablate;
pub mod abm;
pub mod checkpoint;
pub mod encode;
pub mod error;
pub mod eval;
pub mod files;
pub mod gdn;
pub mod nn;
pub mod pipeline;
pub mod ramify;
pub mod seed;
pub mod surrogate;
pub mod synthetic;

pub use error::{Error, Result};
