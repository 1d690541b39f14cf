//! Feature codec between agent states and model vectors, and interaction
//! graph construction.

mod codec;
mod graph;

pub use codec::{FeatureCodec, FeatureKind, FeatureSpec};
pub use graph::{build_graph, graph_builds, Aggregation, InteractionGraph};
