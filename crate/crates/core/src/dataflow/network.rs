//! Whole-network execution, one timestep at a time.

use num_rational::Ratio;

use crate::config::NetworkConfig;
use crate::dataflow::conv::conv_layer;
use crate::dataflow::fc::fully_connected_with_tally;
use crate::dataflow::pool::pool_layer;
use crate::dataflow::tally::AccessTally;
use crate::error::{Error, Result};
use crate::layer::{LayerMode, LayerSpec, QuantizedWeights};
use crate::neuron::MembraneState;
use crate::spike::{SpikeFrame, SpikeTensor};

pub type Dims = (usize, usize, usize);

pub fn layer_label(index: usize, spec: &LayerSpec) -> String {
    let prefix = match spec.mode {
        LayerMode::Standard => "conv",
        LayerMode::Depthwise => "dw",
        LayerMode::Pointwise => "pw",
        LayerMode::FullyConnected => "fc",
        LayerMode::Pool => "pool",
    };
    format!("{prefix}{index}")
}

/// Output dims of every layer, checking that the chain lines up.
pub fn propagate_shapes(input: Dims, layers: &[LayerSpec]) -> Result<Vec<Dims>> {
    let mut dims = input;
    let mut out = Vec::with_capacity(layers.len());
    for (i, spec) in layers.iter().enumerate() {
        let fail = |reason: String| Error::Config {
            index: i,
            label: layer_label(i, spec),
            reason,
        };
        spec.validate().map_err(|e| fail(e.to_string()))?;
        let (h, w, c) = dims;
        if spec.mode == LayerMode::FullyConnected {
            if i + 1 != layers.len() {
                return Err(fail("fully connected layers are only supported as the head".into()));
            }
            if spec.in_channels != h * w * c {
                return Err(fail(format!(
                    "expects {} inputs, previous layer yields {h}x{w}x{c} = {}",
                    spec.in_channels,
                    h * w * c
                )));
            }
        } else if spec.in_channels != c {
            return Err(fail(format!(
                "expects {} input channels, previous layer yields {c}",
                spec.in_channels
            )));
        }
        let (oh, ow) = spec.output_dims(h, w).map_err(|e| fail(e.to_string()))?;
        dims = (oh, ow, spec.out_channels);
        out.push(dims);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkState {
    pub membranes: Vec<MembraneState>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerActivity {
    pub layer: usize,
    pub spikes: u64,
    /// Neurons in one frame of the layer's output.
    pub neurons: u64,
}

impl LayerActivity {
    pub fn sfr(&self) -> Ratio<u64> {
        Ratio::new(self.spikes, self.neurons.max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepOutput {
    pub scores: Vec<i32>,
    pub activity: Vec<LayerActivity>,
    pub tallies: Vec<AccessTally>,
    /// Output of the last spiking layer.
    pub last_frame: SpikeFrame,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOutput {
    /// Summed over timesteps.
    pub class_scores: Vec<i32>,
    /// Spikes summed over timesteps, one entry per spiking layer.
    pub activity: Vec<LayerActivity>,
    pub tallies: Vec<AccessTally>,
}

impl RunOutput {
    /// Index of the largest score; ties go to the lowest class.
    pub fn predicted_class(&self) -> Option<usize> {
        argmax(&self.class_scores)
    }

    pub fn per_layer_sfr(&self) -> Vec<Ratio<u64>> {
        self.activity.iter().map(LayerActivity::sfr).collect()
    }
}

pub fn argmax(scores: &[i32]) -> Option<usize> {
    scores
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, i32)>, (i, &s)| match best {
            Some((_, b)) if b >= s => best,
            _ => Some((i, s)),
        })
        .map(|(i, _)| i)
}

/// An immutable layer chain with its weights.
#[derive(Clone, Debug)]
pub struct Network {
    input: Dims,
    layers: Vec<LayerSpec>,
    weights: Vec<QuantizedWeights>,
    shapes: Vec<Dims>,
}

impl Network {
    pub fn new(input: Dims, layers: Vec<LayerSpec>, weights: Vec<QuantizedWeights>) -> Result<Self> {
        let shapes = propagate_shapes(input, &layers)?;
        if weights.len() != layers.len() {
            return Err(Error::shape(format!(
                "{} weight records for {} layers",
                weights.len(),
                layers.len()
            )));
        }
        for (i, (spec, w)) in layers.iter().zip(&weights).enumerate() {
            w.check(spec).map_err(|e| Error::Config {
                index: i,
                label: layer_label(i, spec),
                reason: e.to_string(),
            })?;
        }
        Ok(Self {
            input,
            layers,
            weights,
            shapes,
        })
    }

    pub fn from_config(config: &NetworkConfig, weights: Vec<QuantizedWeights>) -> Result<Self> {
        Self::new(config.spike_input_dims()?, config.layers.clone(), weights)
    }

    pub fn input_dims(&self) -> Dims {
        self.input
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn shapes(&self) -> &[Dims] {
        &self.shapes
    }

    /// Fresh membranes. Single-timestep inference allocates nothing.
    pub fn initial_state(&self, timesteps: usize) -> NetworkState {
        let membranes = self
            .layers
            .iter()
            .zip(&self.shapes)
            .map(|(spec, &(h, w, c))| {
                if timesteps > 1 && spec.mode.is_conv() {
                    MembraneState::zeros(h * w * c)
                } else {
                    MembraneState::stateless()
                }
            })
            .collect();
        NetworkState { membranes }
    }

    /// Bytes of membrane storage held by `state`.
    pub fn vmem_bytes(&self, state: &NetworkState) -> Vec<u64> {
        self.layers
            .iter()
            .zip(&state.membranes)
            .map(|(spec, m)| m.storage_bytes(spec.neuron.vmem_width))
            .collect()
    }

    /// Runs every layer once on `frame`, threading `state`.
    pub fn step(&self, frame: &SpikeFrame, state: &mut NetworkState) -> Result<StepOutput> {
        if frame.dims() != self.input {
            return Err(Error::shape(format!(
                "input frame {:?}, network expects {:?}",
                frame.dims(),
                self.input
            )));
        }
        if state.membranes.len() != self.layers.len() {
            return Err(Error::shape("membrane state does not match the layer count"));
        }
        let mut current = frame.clone();
        let mut scores = None;
        let mut activity = Vec::new();
        let mut tallies = Vec::with_capacity(self.layers.len());
        for (i, (spec, w)) in self.layers.iter().zip(&self.weights).enumerate() {
            let wrap = |e: Error| Error::Config {
                index: i,
                label: layer_label(i, spec),
                reason: e.to_string(),
            };
            match spec.mode {
                LayerMode::FullyConnected => {
                    let (p, t) = fully_connected_with_tally(&current, spec, w).map_err(wrap)?;
                    scores = Some(p);
                    tallies.push(t);
                }
                LayerMode::Pool => {
                    let (f, t) = pool_layer(&current, spec).map_err(wrap)?;
                    current = f;
                    tallies.push(t);
                }
                _ => {
                    let (f, t) =
                        conv_layer(&current, spec, w, &mut state.membranes[i]).map_err(wrap)?;
                    current = f;
                    tallies.push(t);
                }
            }
            if spec.mode != LayerMode::FullyConnected {
                activity.push(LayerActivity {
                    layer: i,
                    spikes: current.spike_count(),
                    neurons: current.neuron_count() as u64,
                });
            }
        }
        // Without a head, score each output channel by its spike count.
        let scores = scores.unwrap_or_else(|| {
            let mut counts = vec![0i32; current.channels()];
            for v in current.vectors() {
                for c in v.iter_ones() {
                    counts[c] += 1;
                }
            }
            counts
        });
        Ok(StepOutput {
            scores,
            activity,
            tallies,
            last_frame: current,
        })
    }

    pub fn run(&self, input: &SpikeTensor) -> Result<RunOutput> {
        let mut state = self.initial_state(input.timesteps());
        self.run_with_state(input, &mut state)
    }

    pub fn run_with_state(&self, input: &SpikeTensor, state: &mut NetworkState) -> Result<RunOutput> {
        let mut total: Option<RunOutput> = None;
        for frame in input.frames() {
            let step = self.step(frame, state)?;
            match &mut total {
                None => {
                    total = Some(RunOutput {
                        class_scores: step.scores,
                        activity: step.activity,
                        tallies: step.tallies,
                    })
                }
                Some(acc) => {
                    for (a, s) in acc.class_scores.iter_mut().zip(step.scores) {
                        *a = a.saturating_add(s);
                    }
                    for (a, s) in acc.activity.iter_mut().zip(step.activity) {
                        a.spikes += s.spikes;
                    }
                    for (a, s) in acc.tallies.iter_mut().zip(step.tallies) {
                        *a += s;
                    }
                }
            }
        }
        Ok(total.expect("spike tensors have at least one timestep"))
    }
}

/// Runs the accelerator layers of `config` on an already-encoded spike tensor.
pub fn run_network(
    config: &NetworkConfig,
    weights: &[QuantizedWeights],
    input: &SpikeTensor,
) -> Result<RunOutput> {
    if input.timesteps() != config.timesteps {
        return Err(Error::shape(format!(
            "input has {} timesteps, config expects {}",
            input.timesteps(),
            config.timesteps
        )));
    }
    Network::from_config(config, weights.to_vec())?.run(input)
}
