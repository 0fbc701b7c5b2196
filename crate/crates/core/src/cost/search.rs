//! Per-layer output-channel parallelism under a PE budget.
//!
//! A layer running at factor `p` occupies `p·K_h·K_w` PEs. The search finds the
//! smallest achievable bottleneck latency, then gives every layer the least
//! factor that meets it. That assignment is componentwise minimal, so it is
//! also the unique cheapest one among all optimal assignments.

use crate::cost::access::ConvGeometry;
use crate::cost::latency::{conv_latency, LatencyParams};
use crate::error::{Error, Result};

fn min_factor(g: &ConvGeometry, lp: &LatencyParams, target: u64) -> Option<u64> {
    if conv_latency(g, lp, g.c_o) > target {
        return None;
    }
    // latency is nonincreasing in p
    let (mut lo, mut hi) = (1, g.c_o);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if conv_latency(g, lp, mid) <= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Some(lo)
}

fn pes_for(layers: &[ConvGeometry], lp: &LatencyParams, target: u64) -> Option<(Vec<u64>, u64)> {
    let mut factors = Vec::with_capacity(layers.len());
    let mut pes = 0;
    for g in layers {
        let p = min_factor(g, lp, target)?;
        pes += p * g.kernel_area();
        factors.push(p);
    }
    Some((factors, pes))
}

pub fn best_parallel_factors(
    layers: &[ConvGeometry],
    lp: &LatencyParams,
    pe_budget: u64,
) -> Result<Vec<u64>> {
    let floor: u64 = layers.iter().map(ConvGeometry::kernel_area).sum();
    if pe_budget < floor {
        return Err(Error::Infeasible(format!(
            "{pe_budget} PEs cannot host one PE set per layer ({floor} needed)"
        )));
    }
    let mut targets: Vec<u64> = layers
        .iter()
        .flat_map(|g| {
            let mut v = Vec::new();
            let mut p = 1;
            // distinct ⌈C_o/p⌉ values only
            while p <= g.c_o {
                let groups = g.c_o.div_ceil(p);
                v.push(conv_latency(g, lp, p));
                if groups == 1 {
                    break;
                }
                p = g.c_o.div_ceil(groups - 1);
            }
            v
        })
        .collect();
    targets.sort_unstable();
    targets.dedup();
    let feasible = |t: u64| pes_for(layers, lp, t).is_some_and(|(_, pes)| pes <= pe_budget);
    let idx = targets.partition_point(|&t| !feasible(t));
    let target = *targets
        .get(idx)
        .ok_or_else(|| Error::Infeasible("no factor assignment fits the budget".into()))?;
    Ok(pes_for(layers, lp, target).expect("feasible target").0)
}
