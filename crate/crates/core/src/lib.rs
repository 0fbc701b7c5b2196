//! Bit-exact functional model of a single-timestep spiking CNN accelerator
//! with an output-stationary dataflow, plus closed-form cost models and a
//! discrete-event pipeline simulator.

pub mod codec;
pub mod config;
pub mod cost;
pub mod dataflow;
pub mod encoder;
pub mod error;
pub mod idx;
pub mod layer;
pub mod neuron;
pub mod pipeline;
pub mod spike;
pub mod weights;

pub use config::{parse_config, NetworkConfig};
pub use error::{Error, Result};
pub use layer::{LayerMode, LayerSpec, Leak, NeuronParams, QuantizedWeights};
pub use neuron::{integrate_inputs, neuron_step, MembraneState};
pub use spike::{sfr_of_frame, SpikeFrame, SpikeTensor, SpikeVector};
