use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use crate::dataflow::network::Dims;
use crate::error::{Error, Result};
use crate::layer::{LayerMode, LayerSpec};

/// Geometry of one convolution layer, as consumed by the closed-form models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub mode: LayerMode,
    pub c_i: u64,
    pub c_o: u64,
    pub k_h: u64,
    pub k_w: u64,
    pub h_i: u64,
    pub w_i: u64,
    pub h_o: u64,
    pub w_o: u64,
}

impl ConvGeometry {
    /// Standard convolution geometry from explicit sizes.
    #[allow(clippy::too_many_arguments)]
    pub fn standard(c_i: u64, c_o: u64, k_h: u64, k_w: u64, h_i: u64, w_i: u64, h_o: u64, w_o: u64) -> Self {
        Self {
            mode: LayerMode::Standard,
            c_i,
            c_o,
            k_h,
            k_w,
            h_i,
            w_i,
            h_o,
            w_o,
        }
    }

    pub fn of(spec: &LayerSpec, input: Dims) -> Result<Self> {
        let (h, w, _) = input;
        let (h_o, w_o) = spec.output_dims(h, w)?;
        Ok(Self {
            mode: spec.mode,
            c_i: spec.in_channels as u64,
            c_o: spec.out_channels as u64,
            k_h: spec.kernel_h as u64,
            k_w: spec.kernel_w as u64,
            h_i: h as u64,
            w_i: w as u64,
            h_o: h_o as u64,
            w_o: w_o as u64,
        })
    }

    pub fn with_mode(mut self, mode: LayerMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn output_neurons(&self) -> u64 {
        self.c_o * self.h_o * self.w_o
    }

    pub fn kernel_area(&self) -> u64 {
        self.k_h * self.k_w
    }

    /// Input channels a PE reduces over for one output channel.
    pub fn reduction_depth(&self) -> u64 {
        if self.mode == LayerMode::Depthwise {
            1
        } else {
            self.c_i
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessCounts {
    pub input_reads: u64,
    pub weight_reads: u64,
    pub psum_accesses: u64,
}

impl AccessCounts {
    pub fn total(&self) -> u64 {
        self.input_reads + self.weight_reads + self.psum_accesses
    }
}

impl Add for AccessCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            input_reads: self.input_reads + o.input_reads,
            weight_reads: self.weight_reads + o.weight_reads,
            psum_accesses: self.psum_accesses + o.psum_accesses,
        }
    }
}

impl Mul<u64> for AccessCounts {
    type Output = Self;
    fn mul(self, k: u64) -> Self {
        Self {
            input_reads: self.input_reads * k,
            weight_reads: self.weight_reads * k,
            psum_accesses: self.psum_accesses * k,
        }
    }
}

/// Output-stationary traffic counted per scalar, standard convolution.
pub fn access_counts_os(g: &ConvGeometry, t: u64) -> AccessCounts {
    let per_pass = g.c_i * g.k_w * g.k_h * g.c_o * g.w_o * g.h_o;
    AccessCounts {
        input_reads: per_pass * t,
        weight_reads: per_pass * t,
        psum_accesses: g.c_o * g.w_o * g.h_o * t.saturating_sub(1),
    }
}

/// Weight-stationary traffic counted per scalar, standard convolution.
pub fn access_counts_ws(g: &ConvGeometry, t: u64) -> AccessCounts {
    AccessCounts {
        input_reads: g.k_w * g.k_h * g.w_o * g.h_o * g.c_i * g.c_o * t,
        weight_reads: g.c_i * g.k_w * g.k_h * g.c_o * t,
        psum_accesses: g.c_i * g.c_o * g.w_o * g.h_o * t,
    }
}

/// Output-stationary traffic with line-buffered spike vectors and
/// kernel-slice weight fetches, per convolution mode.
pub fn access_counts_mode(mode: LayerMode, g: &ConvGeometry, t: u64) -> Result<AccessCounts> {
    let weights = match mode {
        LayerMode::Standard | LayerMode::Pointwise => g.c_i * g.c_o * g.h_o * g.w_o * t,
        LayerMode::Depthwise => g.c_o * g.h_o * g.w_o * t,
        other => {
            return Err(Error::InvalidLayer(format!(
                "no access model for {other} layers"
            )))
        }
    };
    Ok(AccessCounts {
        input_reads: g.h_i * g.w_i * t,
        weight_reads: weights,
        psum_accesses: g.c_o * g.h_o * g.w_o * t.saturating_sub(1),
    })
}
