//! Layer-wise pipeline simulation.

pub mod sim;
pub mod stages;

pub use sim::{compare_to_model, simulate, size_fifos, ModelGap, PipelineTrace, StageModel, StageSpan};
pub use stages::{pixel_need, stages_from_config, Granularity};
