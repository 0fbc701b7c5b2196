//! Integer integrate-and-fire dynamics.
//!
//! Each timestep accumulates the weights selected by incoming spikes, leaks the
//! stored potential, adds the two, saturates to the Vmem width and compares
//! against the threshold. A firing neuron is hard-reset to zero.

use crate::error::{Error, Result};
use crate::layer::NeuronParams;
use crate::spike::SpikeVector;

/// `bias + Σ weights[j]` over the channels that spiked.
pub fn integrate_inputs(spikes: &SpikeVector, weights: &[i8], bias: i32) -> Result<i32> {
    if weights.len() != spikes.len() {
        return Err(Error::shape(format!(
            "{} weights for a {}-channel spike vector",
            weights.len(),
            spikes.len()
        )));
    }
    let sum: i64 = spikes.iter_ones().map(|j| i64::from(weights[j])).sum();
    Ok(saturate_i32(sum + i64::from(bias)))
}

/// One membrane update. Returns the stored potential and whether the neuron fired.
#[inline]
pub fn neuron_step(u_prev: i32, input: i32, params: &NeuronParams) -> (i32, bool) {
    let limit = params.vmem_limit();
    let u = (params.leak.apply(i64::from(u_prev)) + i64::from(input)).clamp(-limit, limit);
    if u >= i64::from(params.threshold) {
        (0, true)
    } else {
        (u as i32, false)
    }
}

pub(crate) fn saturate_i32(v: i64) -> i32 {
    v.clamp(i64::from(i32::MIN), i64::from(i32::MAX)) as i32
}

/// Per-neuron potentials of one layer, persisted between timesteps.
///
/// A stateless instance models single-timestep inference: every step starts
/// from zero and nothing is written back.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct MembraneState {
    potentials: Option<Vec<i32>>,
    steps: u32,
}

impl MembraneState {
    pub fn stateless() -> Self {
        Self::default()
    }

    pub fn zeros(neurons: usize) -> Self {
        Self {
            potentials: Some(vec![0; neurons]),
            steps: 0,
        }
    }

    pub fn from_potentials(potentials: Vec<i32>, steps: u32) -> Self {
        Self {
            potentials: Some(potentials),
            steps,
        }
    }

    pub fn is_stateless(&self) -> bool {
        self.potentials.is_none()
    }

    pub fn potentials(&self) -> &[i32] {
        self.potentials.as_deref().unwrap_or(&[])
    }

    pub fn neurons(&self) -> usize {
        self.potentials().len()
    }

    /// Timesteps already applied.
    pub fn steps(&self) -> u32 {
        self.steps
    }

    /// Storage held, in bytes, at `vmem_width` bits per neuron.
    pub fn storage_bytes(&self, vmem_width: u8) -> u64 {
        (self.neurons() as u64 * u64::from(vmem_width)).div_ceil(8)
    }

    pub(crate) fn expect_neurons(&self, neurons: usize) -> Result<()> {
        match &self.potentials {
            Some(p) if p.len() != neurons => Err(Error::shape(format!(
                "membrane state holds {} neurons, layer has {neurons}",
                p.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Potential carried into this step and whether it had to be fetched.
    #[inline]
    pub(crate) fn load(&self, index: usize) -> (i32, bool) {
        match &self.potentials {
            Some(p) if self.steps > 0 => (p[index], true),
            _ => (0, false),
        }
    }

    #[inline]
    pub(crate) fn store(&mut self, index: usize, u: i32) {
        if let Some(p) = &mut self.potentials {
            p[index] = u;
        }
    }

    pub(crate) fn finish_step(&mut self) {
        if self.potentials.is_some() {
            self.steps += 1;
        }
    }
}
