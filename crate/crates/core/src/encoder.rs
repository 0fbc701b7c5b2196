//! Spike encoding of raw images by the first convolution layer.
//!
//! Pixels are used as integers, the current of every neuron is the same at
//! each timestep, and the membrane carries over between timesteps.

use crate::error::{Error, Result};
use crate::layer::{LayerMode, LayerSpec, QuantizedWeights};
use crate::neuron::{neuron_step, saturate_i32};
use crate::spike::{SpikeFrame, SpikeTensor};

/// An image in `[y][x][c]` order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image<'a> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: &'a [u8],
}

impl<'a> Image<'a> {
    pub fn new(height: usize, width: usize, channels: usize, pixels: &'a [u8]) -> Result<Self> {
        if pixels.len() != height * width * channels {
            return Err(Error::shape(format!(
                "{height}x{width}x{channels} image needs {} pixels, got {}",
                height * width * channels,
                pixels.len()
            )));
        }
        Ok(Self { height, width, channels, pixels })
    }

    fn at(&self, y: usize, x: usize, c: usize) -> i64 {
        i64::from(self.pixels[(y * self.width + x) * self.channels + c])
    }
}

/// Convolution currents of the encoder, `[y][x][c_o]`.
fn currents(image: &Image, spec: &LayerSpec, w: &QuantizedWeights) -> Result<(usize, usize, Vec<i32>)> {
    let (h_o, w_o) = spec.output_dims(image.height, image.width)?;
    let mut out = Vec::with_capacity(h_o * w_o * spec.out_channels);
    for oy in 0..h_o {
        for ox in 0..w_o {
            for co in 0..spec.out_channels {
                let mut acc = i64::from(w.bias()[co]);
                for ci in 0..spec.in_channels {
                    let kernel = w.kernel(co, ci);
                    for kh in 0..spec.kernel_h {
                        let Some(y) = (oy * spec.stride + kh).checked_sub(spec.padding) else { continue };
                        if y >= image.height {
                            continue;
                        }
                        for kw in 0..spec.kernel_w {
                            let Some(x) = (ox * spec.stride + kw).checked_sub(spec.padding) else { continue };
                            if x >= image.width {
                                continue;
                            }
                            acc += image.at(y, x, ci) * i64::from(kernel[kh * spec.kernel_w + kw]);
                        }
                    }
                }
                out.push(saturate_i32(acc));
            }
        }
    }
    Ok((h_o, w_o, out))
}

pub fn encode_input(
    image: &Image,
    spec: &LayerSpec,
    weights: &QuantizedWeights,
    timesteps: usize,
) -> Result<SpikeTensor> {
    if spec.mode != LayerMode::Standard {
        return Err(Error::InvalidLayer("the encoder must be a standard convolution".into()));
    }
    spec.validate()?;
    weights.check(spec)?;
    if image.channels != spec.in_channels {
        return Err(Error::shape(format!(
            "encoder expects {} input channels, image has {}",
            spec.in_channels, image.channels
        )));
    }
    if timesteps == 0 {
        return Err(Error::Degenerate("timesteps must be at least 1".into()));
    }
    let (h_o, w_o, input) = currents(image, spec, weights)?;
    let c_o = spec.out_channels;
    let mut u = vec![0i32; input.len()];
    let mut frames = Vec::with_capacity(timesteps);
    for _ in 0..timesteps {
        let mut frame = SpikeFrame::zeros(h_o, w_o, c_o);
        for (n, (&i, u)) in input.iter().zip(u.iter_mut()).enumerate() {
            let (next, fired) = neuron_step(*u, i, &spec.neuron);
            *u = next;
            if fired {
                frame.set(n / (w_o * c_o), (n / c_o) % w_o, n % c_o, true);
            }
        }
        frames.push(frame);
    }
    SpikeTensor::new(frames)
}
