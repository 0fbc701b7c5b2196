//! Per-layer cost table for a whole configuration.

use serde::Serialize;

use crate::config::NetworkConfig;
use crate::cost::access::{access_counts_mode, access_counts_os, access_counts_ws, AccessCounts, ConvGeometry};
use crate::cost::energy::energy_estimate;
use crate::cost::latency::{conv_latency, pipeline_latency};
use crate::cost::storage::vmem_bytes;
use crate::error::Result;
use crate::layer::LayerMode;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerCost {
    pub layer: usize,
    pub label: String,
    pub mode: LayerMode,
    pub geometry: ConvGeometry,
    pub parallel_factor: u64,
    /// Per-scalar output-stationary traffic.
    pub os: AccessCounts,
    /// Per-scalar weight-stationary traffic.
    pub ws: AccessCounts,
    /// Spike-vector and kernel-slice fetches of the line-buffered design.
    pub fetch: AccessCounts,
    /// Dense accumulate operations.
    pub accumulates: u64,
    /// Cycles per frame, all timesteps.
    pub latency_cycles: u64,
    pub vmem_bytes: u64,
    pub energy_pj: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub timesteps: u64,
    pub layers: Vec<LayerCost>,
    pub total_vmem_bytes: u64,
    /// Steady-state cycles per frame of the layer pipeline.
    pub bottleneck_cycles: u64,
    /// Cycles to push one frame through every layer.
    pub frame_cycles: u64,
    pub energy_pj: f64,
}

/// Geometry seen by a dense loop nest: depthwise filters reduce over one channel.
fn dense(g: &ConvGeometry) -> ConvGeometry {
    ConvGeometry {
        c_i: g.reduction_depth(),
        ..*g
    }
}

pub fn cost_report(config: &NetworkConfig, timesteps: u64) -> Result<CostReport> {
    let vmem = vmem_bytes(config, timesteps)?;
    let mut layers = Vec::new();
    for (l, v) in config.conv_layers()?.into_iter().zip(vmem) {
        let g = l.geometry;
        let p = l.spec.parallel_factor as u64;
        let os = access_counts_os(&dense(&g), timesteps);
        let latency_cycles = conv_latency(&g, &config.latency, p) * timesteps;
        let accumulates = os.input_reads;
        layers.push(LayerCost {
            layer: l.index,
            label: l.label,
            mode: g.mode,
            geometry: g,
            parallel_factor: p,
            os,
            ws: access_counts_ws(&dense(&g), timesteps),
            fetch: access_counts_mode(g.mode, &g, timesteps)?,
            accumulates,
            latency_cycles,
            vmem_bytes: v.bytes,
            energy_pj: energy_estimate(&[os], &[accumulates], &config.energy, latency_cycles),
        });
    }
    let cycles: Vec<u64> = layers.iter().map(|l| l.latency_cycles).collect();
    let (bottleneck_cycles, frame_cycles) = match pipeline_latency(&cycles, 1) {
        Ok(p) => (p.bottleneck_cycles, p.makespan),
        Err(_) => (0, 0),
    };
    Ok(CostReport {
        timesteps,
        total_vmem_bytes: layers.iter().map(|l| l.vmem_bytes).sum(),
        energy_pj: layers.iter().map(|l| l.energy_pj).sum(),
        bottleneck_cycles,
        frame_cycles,
        layers,
    })
}
