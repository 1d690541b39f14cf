//! Graph Diffusion Network surrogate.
//!
//! Each agent's next dynamic features are drawn from a denoising diffusion
//! model conditioned on the agent's own encoding, a message-passing
//! embedding of its neighborhood and the diffusion step.

mod embed;
mod model;
mod sample;
mod schedule;
mod train;

pub use embed::sinusoidal_embedding;
pub use model::{Architecture, Context, GdnModel, ModelSpec, Variant};
pub use sample::{ddpm_reverse, MAX_ROWS};
pub use schedule::{cosine_beta, NoiseSchedule, ScheduleConfig, SigmaMode};
pub use train::{train, train_on, TrainConfig, TrainReport, Trainer, TrainingSet};
