//! Stage models derived from a network configuration.

use serde::Serialize;

use crate::config::NetworkConfig;
use crate::cost::access::ConvGeometry;
use crate::dataflow::network::layer_label;
use crate::error::Result;
use crate::layer::{LayerMode, LayerSpec};
use crate::pipeline::sim::StageModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// One unit per frame.
    Coarse,
    /// One unit per output pixel.
    Fine,
}

/// Raster-order inputs an output pixel depends on, counted from the start
/// of the input frame.
pub fn pixel_need(spec: &LayerSpec, input: (usize, usize), out: (usize, usize)) -> u64 {
    let (h, w) = input;
    let (y, x) = out;
    let last = |o: usize, k: usize| (o * spec.stride + k - 1).saturating_sub(spec.padding);
    let row = last(y, spec.kernel_h).min(h - 1);
    let col = last(x, spec.kernel_w).min(w - 1);
    (row * w + col + 1) as u64
}

/// Conv and pool layers as pipeline stages. The encoder and the
/// classification head run outside the modeled pipeline.
pub fn stages_from_config(
    config: &NetworkConfig,
    granularity: Granularity,
    capacity: Option<u64>,
) -> Result<Vec<StageModel>> {
    let mut dims = config.spike_input_dims()?;
    let shapes = config.shapes()?;
    let mut stages = Vec::new();
    let mut prev_units = 0;
    for (i, (spec, &next)) in config.layers.iter().zip(&shapes).enumerate() {
        if spec.mode == LayerMode::FullyConnected {
            break;
        }
        let (h_o, w_o) = (next.0, next.1);
        let pixel = if spec.mode == LayerMode::Pool {
            1
        } else {
            let g = ConvGeometry::of(spec, dims)?;
            config.latency.pixel_cycles(&g, spec.parallel_factor as u64)
        }
        .max(1);
        let first = stages.is_empty();
        let (service_cycles, need) = match granularity {
            Granularity::Coarse => (pixel * (h_o * w_o) as u64, vec![1]),
            Granularity::Fine if first => (pixel, vec![1; h_o * w_o]),
            Granularity::Fine => {
                let mut need: Vec<u64> = (0..h_o)
                    .flat_map(|y| (0..w_o).map(move |x| (y, x)))
                    .map(|o| pixel_need(spec, (dims.0, dims.1), o))
                    .scan(0, |hi, n| {
                        *hi = n.max(*hi);
                        Some(*hi)
                    })
                    .collect();
                // inputs no window reads are still drained with the frame
                *need.last_mut().expect("non-empty output") = prev_units;
                (pixel, need)
            }
        };
        prev_units = need.len() as u64;
        stages.push(StageModel {
            label: layer_label(i, spec),
            service_cycles,
            capacity,
            need,
        });
        dims = next;
    }
    Ok(stages)
}
