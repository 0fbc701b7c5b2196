//! Functional model of the layer pipeline: line buffer, multi-mode PE array,
//! OR pooling, classification head and whole-network execution.

pub mod conv;
pub mod fc;
pub mod line_buffer;
pub mod network;
pub mod pool;
pub mod tally;

pub use conv::{conv_depthwise, conv_layer, conv_pointwise, conv_standard};
pub use fc::{flatten, fully_connected};
pub use line_buffer::{LineBuffer, ReceptiveWindow};
pub use network::{
    argmax, layer_label, propagate_shapes, run_network, LayerActivity, Network, NetworkState,
    RunOutput, StepOutput,
};
pub use pool::{pool_layer, pool_or};
pub use tally::AccessTally;
