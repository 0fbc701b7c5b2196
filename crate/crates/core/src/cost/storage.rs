use serde::Serialize;

use crate::config::NetworkConfig;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerVmem {
    pub layer: usize,
    pub label: String,
    pub neurons: u64,
    pub vmem_width: u8,
    pub bytes: u64,
}

/// Membrane-potential storage of every accelerator convolution layer.
/// Single-timestep inference needs none.
pub fn vmem_bytes(config: &NetworkConfig, timesteps: u64) -> Result<Vec<LayerVmem>> {
    Ok(config
        .conv_layers()?
        .into_iter()
        .map(|l| {
            let neurons = l.geometry.output_neurons();
            let width = l.spec.neuron.vmem_width;
            let bytes = if timesteps <= 1 {
                0
            } else {
                (neurons * u64::from(width)).div_ceil(8)
            };
            LayerVmem {
                layer: l.index,
                label: l.label,
                neurons,
                vmem_width: width,
                bytes,
            }
        })
        .collect())
}

pub fn total_vmem_bytes(layers: &[LayerVmem]) -> u64 {
    layers.iter().map(|l| l.bytes).sum()
}
