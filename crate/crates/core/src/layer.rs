//! Layer geometry and int8 weight storage.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_VMEM_WIDTH: u8 = 18;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerMode {
    Standard,
    Depthwise,
    Pointwise,
    FullyConnected,
    Pool,
}

impl LayerMode {
    pub fn is_conv(self) -> bool {
        matches!(
            self,
            LayerMode::Standard | LayerMode::Depthwise | LayerMode::Pointwise
        )
    }

    /// Wire code used by the weight file.
    pub fn code(self) -> u8 {
        match self {
            LayerMode::Standard => 0,
            LayerMode::Depthwise => 1,
            LayerMode::Pointwise => 2,
            LayerMode::FullyConnected => 3,
            LayerMode::Pool => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => LayerMode::Standard,
            1 => LayerMode::Depthwise,
            2 => LayerMode::Pointwise,
            3 => LayerMode::FullyConnected,
            4 => LayerMode::Pool,
            _ => return None,
        })
    }
}

impl fmt::Display for LayerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerMode::Standard => "standard",
            LayerMode::Depthwise => "depthwise",
            LayerMode::Pointwise => "pointwise",
            LayerMode::FullyConnected => "fc",
            LayerMode::Pool => "pool",
        })
    }
}

/// Membrane leak as an 8.8 fixed-point multiplier; `Leak::ONE` is a plain IF neuron.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Leak(pub i16);

impl Leak {
    pub const FRAC_BITS: u32 = 8;
    pub const ONE: Leak = Leak(1 << Self::FRAC_BITS);

    /// Nearest representable 8.8 value.
    pub fn from_f64(factor: f64) -> Self {
        let raw = (factor * f64::from(1u32 << Self::FRAC_BITS)).round();
        Leak(raw.clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16)
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.0) / f64::from(1u32 << Self::FRAC_BITS)
    }

    /// `leak × u`, truncated toward zero.
    #[inline]
    pub fn apply(self, u: i64) -> i64 {
        (u * i64::from(self.0)) / (1 << Self::FRAC_BITS)
    }
}

impl Default for Leak {
    fn default() -> Self {
        Leak::ONE
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronParams {
    pub threshold: i32,
    pub leak: Leak,
    pub vmem_width: u8,
}

impl NeuronParams {
    pub fn integrate_and_fire(threshold: i32) -> Self {
        Self {
            threshold,
            leak: Leak::ONE,
            vmem_width: DEFAULT_VMEM_WIDTH,
        }
    }

    /// Largest representable magnitude, `2^(w-1) - 1`.
    pub fn vmem_limit(&self) -> i64 {
        (1i64 << (self.vmem_width - 1)) - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.threshold <= 0 {
            return Err(Error::InvalidLayer(format!(
                "threshold must be positive, got {}",
                self.threshold
            )));
        }
        if !(2..=32).contains(&self.vmem_width) {
            return Err(Error::InvalidLayer(format!(
                "vmem width {} outside 2..=32",
                self.vmem_width
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub mode: LayerMode,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub neuron: NeuronParams,
    pub parallel_factor: usize,
}

impl LayerSpec {
    /// Stride-1 convolution with "same" zero padding for odd kernels.
    pub fn conv(
        mode: LayerMode,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        threshold: i32,
    ) -> Self {
        Self {
            mode,
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride: 1,
            padding: kernel.saturating_sub(1) / 2,
            neuron: NeuronParams::integrate_and_fire(threshold),
            parallel_factor: 1,
        }
    }

    pub fn standard(in_channels: usize, out_channels: usize, kernel: usize, threshold: i32) -> Self {
        Self::conv(LayerMode::Standard, in_channels, out_channels, kernel, threshold)
    }

    pub fn depthwise(channels: usize, kernel: usize, threshold: i32) -> Self {
        Self::conv(LayerMode::Depthwise, channels, channels, kernel, threshold)
    }

    pub fn pointwise(in_channels: usize, out_channels: usize, threshold: i32) -> Self {
        Self::conv(LayerMode::Pointwise, in_channels, out_channels, 1, threshold)
    }

    pub fn pool(channels: usize, window: usize) -> Self {
        Self {
            mode: LayerMode::Pool,
            in_channels: channels,
            out_channels: channels,
            kernel_h: window,
            kernel_w: window,
            stride: window,
            padding: 0,
            neuron: NeuronParams::integrate_and_fire(1),
            parallel_factor: 1,
        }
    }

    /// Classification head over a flattened `inputs`-long spike vector.
    pub fn fully_connected(inputs: usize, classes: usize) -> Self {
        Self {
            mode: LayerMode::FullyConnected,
            in_channels: inputs,
            out_channels: classes,
            kernel_h: 1,
            kernel_w: 1,
            stride: 1,
            padding: 0,
            neuron: NeuronParams::integrate_and_fire(1),
            parallel_factor: 1,
        }
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_neuron(mut self, neuron: NeuronParams) -> Self {
        self.neuron = neuron;
        self
    }

    pub fn with_parallel_factor(mut self, p: usize) -> Self {
        self.parallel_factor = p;
        self
    }

    pub fn kernel_area(&self) -> usize {
        self.kernel_h * self.kernel_w
    }

    pub fn has_weights(&self) -> bool {
        self.mode != LayerMode::Pool
    }

    /// Number of int8 weights the layer expects.
    pub fn weight_count(&self) -> usize {
        match self.mode {
            LayerMode::Pool => 0,
            LayerMode::Depthwise => self.out_channels * self.kernel_area(),
            _ => self.out_channels * self.in_channels * self.kernel_area(),
        }
    }

    pub fn bias_count(&self) -> usize {
        if self.has_weights() {
            self.out_channels
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidLayer(msg));
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad(format!("{} layer has zero channels", self.mode));
        }
        if self.kernel_h == 0 || self.kernel_w == 0 || self.stride == 0 {
            return bad(format!("{} layer has a zero kernel or stride", self.mode));
        }
        match self.mode {
            LayerMode::Depthwise if self.in_channels != self.out_channels => {
                return bad(format!(
                    "depthwise layer needs C_i = C_o, got {} and {}",
                    self.in_channels, self.out_channels
                ));
            }
            LayerMode::Pointwise if self.kernel_h != 1 || self.kernel_w != 1 => {
                return bad(format!(
                    "pointwise layer needs a 1x1 kernel, got {}x{}",
                    self.kernel_h, self.kernel_w
                ));
            }
            LayerMode::Pool => {
                if self.in_channels != self.out_channels {
                    return bad("pooling cannot change the channel count".into());
                }
                return Ok(());
            }
            _ => {}
        }
        if self.mode.is_conv() && self.stride != 1 {
            return bad(format!("only stride 1 is supported, got {}", self.stride));
        }
        if self.parallel_factor == 0 || self.parallel_factor > self.out_channels {
            return bad(format!(
                "parallel factor {} outside 1..={}",
                self.parallel_factor, self.out_channels
            ));
        }
        self.neuron.validate()
    }

    /// Output spatial size for an `h × w` input.
    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        match self.mode {
            LayerMode::FullyConnected => Ok((1, 1)),
            LayerMode::Pool => {
                if !h.is_multiple_of(self.kernel_h) || !w.is_multiple_of(self.kernel_w) {
                    return Err(Error::shape(format!(
                        "pool window {}x{} does not divide {h}x{w}",
                        self.kernel_h, self.kernel_w
                    )));
                }
                Ok((h / self.kernel_h, w / self.kernel_w))
            }
            _ => {
                let ph = h + 2 * self.padding;
                let pw = w + 2 * self.padding;
                if ph < self.kernel_h || pw < self.kernel_w {
                    return Err(Error::shape(format!(
                        "{}x{} kernel larger than padded input {ph}x{pw}",
                        self.kernel_h, self.kernel_w
                    )));
                }
                Ok((
                    (ph - self.kernel_h) / self.stride + 1,
                    (pw - self.kernel_w) / self.stride + 1,
                ))
            }
        }
    }
}

/// Int8 weights in `[c_o][c_i][k_h][k_w]` order (depthwise: `[c][k_h][k_w]`)
/// plus one int32 bias per output channel.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct QuantizedWeights {
    values: Vec<i8>,
    bias: Vec<i32>,
    per_output: usize,
    kernel_area: usize,
}

impl QuantizedWeights {
    pub fn new(spec: &LayerSpec, values: Vec<i8>, bias: Vec<i32>) -> Result<Self> {
        if values.len() != spec.weight_count() {
            return Err(Error::shape(format!(
                "{} layer expects {} weights, got {}",
                spec.mode,
                spec.weight_count(),
                values.len()
            )));
        }
        if bias.len() != spec.bias_count() {
            return Err(Error::shape(format!(
                "{} layer expects {} biases, got {}",
                spec.mode,
                spec.bias_count(),
                bias.len()
            )));
        }
        let per_output = spec.weight_count().checked_div(spec.out_channels).unwrap_or(0);
        Ok(Self {
            values,
            bias,
            per_output,
            kernel_area: spec.kernel_area(),
        })
    }

    pub fn zeros(spec: &LayerSpec) -> Self {
        Self::new(spec, vec![0; spec.weight_count()], vec![0; spec.bias_count()])
            .expect("extents derived from spec")
    }

    /// Weights for a pooling layer.
    pub fn none() -> Self {
        Self::default()
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn bias(&self) -> &[i32] {
        &self.bias
    }

    /// The contiguous `[c_i][k_h][k_w]` block of one output channel.
    #[inline]
    pub fn filter(&self, co: usize) -> &[i8] {
        &self.values[co * self.per_output..(co + 1) * self.per_output]
    }

    /// The `K_h·K_w` kernel slice broadcast for one (output, input) channel pair.
    #[inline]
    pub fn kernel(&self, co: usize, ci: usize) -> &[i8] {
        let start = co * self.per_output + ci * self.kernel_area;
        &self.values[start..start + self.kernel_area]
    }

    /// Checks the weights against a layer spec.
    pub fn check(&self, spec: &LayerSpec) -> Result<()> {
        if self.values.len() != spec.weight_count() || self.bias.len() != spec.bias_count() {
            return Err(Error::shape(format!(
                "{} layer expects {}+{} parameters, got {}+{}",
                spec.mode,
                spec.weight_count(),
                spec.bias_count(),
                self.values.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}
