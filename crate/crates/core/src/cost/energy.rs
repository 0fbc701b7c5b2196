//! Energy proxy. The default constants are placeholders of plausible
//! magnitude for an FPGA BRAM/LUT design; only ratios between runs are
//! meaningful.

use serde::{Deserialize, Serialize};

use crate::cost::access::AccessCounts;

/// Energies in picojoules per event, static power in picojoules per cycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyConstants {
    pub e_acc: f64,
    pub e_input_read: f64,
    pub e_weight_read: f64,
    pub e_psum: f64,
    pub p_static: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        Self {
            e_acc: 0.1,
            e_input_read: 2.0,
            e_weight_read: 2.0,
            e_psum: 4.0,
            p_static: 1.0,
        }
    }
}

impl EnergyConstants {
    pub fn zero() -> Self {
        Self {
            e_acc: 0.0,
            e_input_read: 0.0,
            e_weight_read: 0.0,
            e_psum: 0.0,
            p_static: 0.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.e_acc, self.e_input_read, self.e_weight_read, self.e_psum, self.p_static]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// `Σ accesses × e_read + Σ ops × e_acc + p_static × runtime`, in picojoules.
pub fn energy_estimate(
    accesses: &[AccessCounts],
    ops: &[u64],
    ec: &EnergyConstants,
    runtime_cycles: u64,
) -> f64 {
    let memory: f64 = accesses
        .iter()
        .map(|a| {
            a.input_reads as f64 * ec.e_input_read
                + a.weight_reads as f64 * ec.e_weight_read
                + a.psum_accesses as f64 * ec.e_psum
        })
        .sum();
    let compute: f64 = ops.iter().map(|&n| n as f64 * ec.e_acc).sum();
    memory + compute + ec.p_static * runtime_cycles as f64
}
