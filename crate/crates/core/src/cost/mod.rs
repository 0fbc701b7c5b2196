//! Closed-form cost models: memory traffic, convolution and pipeline latency,
//! membrane storage, energy and parallel-factor search.

pub mod access;
pub mod energy;
pub mod latency;
pub mod report;
pub mod search;
pub mod storage;

pub use access::{access_counts_mode, access_counts_os, access_counts_ws, AccessCounts, ConvGeometry};
pub use energy::{energy_estimate, EnergyConstants};
pub use latency::{conv_latency, pipeline_latency, LatencyParams, PipelineLatency};
pub use report::{cost_report, CostReport, LayerCost};
pub use search::best_parallel_factors;
pub use storage::{total_vmem_bytes, vmem_bytes, LayerVmem};

/// Bytes per kilobyte used when reporting storage.
pub const KB: u64 = 1000;

/// Bottleneck latency with all factors at 1 over bottleneck latency with `factors`.
pub fn bottleneck_speedup(layers: &[ConvGeometry], lp: &LatencyParams, factors: &[u64]) -> f64 {
    let worst = |ps: &mut dyn Iterator<Item = u64>| {
        layers
            .iter()
            .zip(ps)
            .map(|(g, p)| conv_latency(g, lp, p))
            .max()
            .unwrap_or(0)
    };
    let base = worst(&mut std::iter::repeat(1));
    let tuned = worst(&mut factors.iter().copied());
    base as f64 / tuned as f64
}
