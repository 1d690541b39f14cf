//! Metrics and evaluation protocols.
//!
//! Micro: per-agent distance between ground-truth and surrogate next-state
//! distributions from identical conditions. Macro: sMAPE between the mean
//! trajectories of ground-truth and surrogate ensembles.

mod ar1;
mod emd;
mod ensemble;
mod micro;
mod report;
mod smape;

pub use ar1::{ar1_fit, ar1_forecast, Ar1Model};
pub use emd::{emd, emd_1d, emd_categorical, EmpiricalDistribution};
pub use ensemble::{
    ar1_ensemble, compare, macro_eval, model_ensemble, split_ensemble_floor, truth_ensemble, Ensemble, MacroReport,
    MacroSeries,
};
pub use micro::{compare_outcomes, micro_eval, micro_features, split_half_floor, MicroEntry, MicroReport};
pub use report::{write_ensemble_csv, write_macro_csv, write_micro_csv};
pub use smape::{smape, smape_predprey};
