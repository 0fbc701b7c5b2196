use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::cost::access::ConvGeometry;
use crate::error::{Error, Result};

/// Cycle costs of the convolution inner loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyParams {
    /// Weight read.
    pub t_rw: u64,
    /// Per-input-channel accumulate inside a PE.
    pub t_pe: u64,
    /// Reduction of the partial sums of all PEs.
    pub t_pes: u64,
}

impl Default for LatencyParams {
    /// Weight reads hidden behind accumulation, single-cycle adder tree.
    fn default() -> Self {
        Self {
            t_rw: 0,
            t_pe: 1,
            t_pes: 0,
        }
    }
}

impl LatencyParams {
    /// Cycles spent on one output pixel.
    pub fn pixel_cycles(&self, g: &ConvGeometry, p: u64) -> u64 {
        let groups = g.c_o.div_ceil(p.max(1));
        groups * (g.reduction_depth() * (self.t_rw + self.t_pe) + self.t_pes)
    }
}

/// `H_o·W_o·⌈C_o/p⌉·[C_i·(T_rw + T_pe) + T_pes]`.
pub fn conv_latency(g: &ConvGeometry, lp: &LatencyParams, p: u64) -> u64 {
    g.h_o * g.w_o * lp.pixel_cycles(g, p)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PipelineLatency {
    /// Cycles to drain all frames: `N·T_ci + Σ_{j≠i} T_cj`.
    pub makespan: u64,
    pub frames: u64,
    pub bottleneck_index: usize,
    pub bottleneck_cycles: u64,
}

impl PipelineLatency {
    /// Exact `makespan / N`, i.e. `T_ci + Σ_{j≠i} T_cj / N`.
    pub fn average(&self) -> Ratio<u64> {
        Ratio::new(self.makespan, self.frames)
    }

    pub fn average_f64(&self) -> f64 {
        self.makespan as f64 / self.frames as f64
    }
}

/// Makespan of a layer-wise pipeline; the first slowest layer is the bottleneck.
pub fn pipeline_latency(layer_cycles: &[u64], frames: u64) -> Result<PipelineLatency> {
    if frames == 0 {
        return Err(Error::Degenerate("pipeline needs at least one frame".into()));
    }
    let (bottleneck_index, &bottleneck_cycles) = layer_cycles
        .iter()
        .enumerate()
        .rev()
        .max_by_key(|(_, &c)| c)
        .ok_or_else(|| Error::Degenerate("pipeline needs at least one layer".into()))?;
    let rest: u64 = layer_cycles.iter().sum::<u64>() - bottleneck_cycles;
    Ok(PipelineLatency {
        makespan: frames * bottleneck_cycles + rest,
        frames,
        bottleneck_index,
        bottleneck_cycles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> ConvGeometry {
        ConvGeometry::standard(4, 3, 3, 3, 2, 2, 2, 2)
    }

    #[test]
    fn conv_latency_examples() {
        let lp = LatencyParams { t_rw: 1, t_pe: 1, t_pes: 2 };
        assert_eq!(conv_latency(&small(), &lp, 1), 120);
        let hidden = LatencyParams { t_rw: 0, ..lp };
        assert_eq!(conv_latency(&small(), &hidden, 1), 72);
        assert_eq!(conv_latency(&small(), &lp, 3), 2 * 2 * (4 * 2 + 2));
    }

    #[test]
    fn pipeline_examples() {
        let p = pipeline_latency(&[10, 5, 7], 4).unwrap();
        assert_eq!(p.makespan, 52);
        assert_eq!(p.average(), Ratio::from_integer(13));
        assert_eq!(pipeline_latency(&[10, 5, 7], 1).unwrap().makespan, 22);
        assert!(pipeline_latency(&[], 3).is_err());
        assert!(pipeline_latency(&[1], 0).is_err());
        // ties: first slowest layer
        assert_eq!(pipeline_latency(&[4, 9, 9], 2).unwrap().bottleneck_index, 1);
    }

    proptest! {
        #[test]
        fn parallelism_bounds(co in 1u64..64, ci in 1u64..16, p in 1u64..16, t_rw in 0u64..3, t_pes in 0u64..3) {
            let g = ConvGeometry { c_o: co, c_i: ci, ..small() };
            let lp = LatencyParams { t_rw, t_pe: 1, t_pes };
            let one = conv_latency(&g, &lp, 1);
            let at_p = conv_latency(&g, &lp, p);
            prop_assert!(at_p >= conv_latency(&g, &lp, 2 * p));
            prop_assert!(one <= p * at_p);
            if co % p == 0 {
                prop_assert_eq!(one, p * at_p);
            }
        }

        #[test]
        fn average_nonincreasing_to_bottleneck(cycles in proptest::collection::vec(1u64..1000, 1..8), n in 1u64..500) {
            let a = pipeline_latency(&cycles, n).unwrap();
            let b = pipeline_latency(&cycles, n + 1).unwrap();
            prop_assert!(b.average() <= a.average());
            let max = *cycles.iter().max().unwrap();
            prop_assert!(a.average() >= Ratio::from_integer(max));
            let far = pipeline_latency(&cycles, 1_000_000).unwrap();
            prop_assert!(far.average_f64() - max as f64 <= cycles.iter().sum::<u64>() as f64 / 1e6);
        }
    }
}
