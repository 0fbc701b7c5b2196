use std::ops::AddAssign;

use serde::Serialize;

use crate::cost::AccessCounts;

/// Memory-traffic counters gathered while a layer executes.
///
/// Two granularities are kept: per-scalar reads as the PE array consumes them
/// (`input_reads`, `weight_reads`) and the wide fetches the memory system
/// actually serves (`input_vector_fetches` for whole spike vectors entering the
/// line buffer, `weight_fetches` for kernel slices broadcast to the array).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AccessTally {
    pub input_vector_fetches: u64,
    pub input_reads: u64,
    pub weight_fetches: u64,
    pub weight_reads: u64,
    pub psum_accesses: u64,
    /// Additions actually performed (one per spike that met a weight).
    pub accumulates: u64,
}

impl AccessTally {
    /// Per-scalar view, comparable with the OS dataflow formulas.
    pub fn scalar_counts(&self) -> AccessCounts {
        AccessCounts {
            input_reads: self.input_reads,
            weight_reads: self.weight_reads,
            psum_accesses: self.psum_accesses,
        }
    }

    /// Line-buffered view, comparable with the per-mode formulas.
    pub fn fetch_counts(&self) -> AccessCounts {
        AccessCounts {
            input_reads: self.input_vector_fetches,
            weight_reads: self.weight_fetches,
            psum_accesses: self.psum_accesses,
        }
    }
}

impl AddAssign for AccessTally {
    fn add_assign(&mut self, o: Self) {
        self.input_vector_fetches += o.input_vector_fetches;
        self.input_reads += o.input_reads;
        self.weight_fetches += o.weight_fetches;
        self.weight_reads += o.weight_reads;
        self.psum_accesses += o.psum_accesses;
        self.accumulates += o.accumulates;
    }
}
