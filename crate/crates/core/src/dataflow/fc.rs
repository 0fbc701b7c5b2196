//! Classification head. Reports raw potentials; the caller takes the argmax.

use crate::dataflow::tally::AccessTally;
use crate::error::{Error, Result};
use crate::layer::{LayerMode, LayerSpec, QuantizedWeights};
use crate::neuron::integrate_inputs;
use crate::spike::{SpikeFrame, SpikeVector};

/// Row-major spatial, channel-minor: bit `(y·W + x)·C + c`.
pub fn flatten(frame: &SpikeFrame) -> SpikeVector {
    let c = frame.channels();
    let mut flat = SpikeVector::zeros(frame.neuron_count());
    for (p, v) in frame.vectors().iter().enumerate() {
        for ch in v.iter_ones() {
            flat.set(p * c + ch, true);
        }
    }
    flat
}

pub fn fully_connected(
    input: &SpikeFrame,
    spec: &LayerSpec,
    weights: &QuantizedWeights,
) -> Result<Vec<i32>> {
    fully_connected_with_tally(input, spec, weights).map(|(p, _)| p)
}

pub fn fully_connected_with_tally(
    input: &SpikeFrame,
    spec: &LayerSpec,
    weights: &QuantizedWeights,
) -> Result<(Vec<i32>, AccessTally)> {
    if spec.mode != LayerMode::FullyConnected {
        return Err(Error::InvalidLayer(format!("expected fc, got {}", spec.mode)));
    }
    weights.check(spec)?;
    if input.neuron_count() != spec.in_channels {
        return Err(Error::shape(format!(
            "fc layer expects {} inputs, frame has {}",
            spec.in_channels,
            input.neuron_count()
        )));
    }
    let flat = flatten(input);
    let potentials = (0..spec.out_channels)
        .map(|co| integrate_inputs(&flat, weights.filter(co), weights.bias()[co]))
        .collect::<Result<Vec<_>>>()?;
    let scalar = (spec.in_channels * spec.out_channels) as u64;
    let tally = AccessTally {
        input_vector_fetches: input.vectors().len() as u64,
        input_reads: scalar,
        weight_fetches: scalar,
        weight_reads: scalar,
        psum_accesses: 0,
        accumulates: flat.count_ones() * spec.out_channels as u64,
    };
    Ok((potentials, tally))
}
