//! Binary spike containers.
//!
//! A [`SpikeVector`] packs the spikes of every channel at one pixel, channel 0
//! in bit 0. A [`SpikeFrame`] is a raster-ordered grid of such vectors and a
//! [`SpikeTensor`] stacks one frame per timestep.

use std::fmt;

use num_rational::Ratio;

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct SpikeVector {
    words: Vec<u64>,
    len: usize,
}

impl SpikeVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(WORD_BITS)],
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = Self::zeros(len);
        for i in 0..len {
            v.set(i, true);
        }
        v
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b);
        }
        v
    }

    /// Builds a vector of `len` channels from the low bits of `mask`.
    pub fn from_mask(len: usize, mask: u64) -> Self {
        let mut v = Self::zeros(len);
        for i in 0..len.min(WORD_BITS) {
            v.set(i, (mask >> i) & 1 == 1);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, channel: usize) -> bool {
        debug_assert!(channel < self.len);
        (self.words[channel / WORD_BITS] >> (channel % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, channel: usize, value: bool) {
        assert!(channel < self.len, "channel {channel} out of range {}", self.len);
        let bit = 1u64 << (channel % WORD_BITS);
        if value {
            self.words[channel / WORD_BITS] |= bit;
        } else {
            self.words[channel / WORD_BITS] &= !bit;
        }
    }

    /// True when at least one channel spiked.
    pub fn any(&self) -> bool {
        self.words.iter().any(|&w| w != 0)
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Indices of channels that spiked, ascending.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let tz = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * WORD_BITS + tz)
            })
        })
    }

    pub fn or_assign(&mut self, other: &SpikeVector) {
        assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

impl fmt::Debug for SpikeVector {
    // Channel 0 printed rightmost, like a binary literal.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bits: String = (0..self.len)
            .rev()
            .map(|i| if self.get(i) { '1' } else { '0' })
            .collect();
        write!(f, "SpikeVector({bits})")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpikeFrame {
    height: usize,
    width: usize,
    channels: usize,
    grid: Vec<SpikeVector>,
}

impl SpikeFrame {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            grid: vec![SpikeVector::zeros(channels); height * width],
        }
    }

    /// Builds a frame from raster-ordered vectors.
    pub fn from_vectors(
        height: usize,
        width: usize,
        channels: usize,
        grid: Vec<SpikeVector>,
    ) -> Result<Self> {
        if grid.len() != height * width {
            return Err(Error::shape(format!(
                "frame {height}x{width} needs {} vectors, got {}",
                height * width,
                grid.len()
            )));
        }
        if let Some(bad) = grid.iter().find(|v| v.len() != channels) {
            return Err(Error::shape(format!(
                "spike vector of length {} in a {channels}-channel frame",
                bad.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            grid,
        })
    }

    /// Builds a frame from a closure over (y, x, c).
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> bool,
    ) -> Self {
        let mut frame = Self::zeros(height, width, channels);
        for y in 0..height {
            for x in 0..width {
                let v = frame.pixel_mut(y, x);
                for c in 0..channels {
                    if f(y, x, c) {
                        v.set(c, true);
                    }
                }
            }
        }
        frame
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn neuron_count(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn pixel(&self, y: usize, x: usize) -> &SpikeVector {
        &self.grid[y * self.width + x]
    }

    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut SpikeVector {
        &mut self.grid[y * self.width + x]
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> bool {
        self.pixel(y, x).get(c)
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, value: bool) {
        self.pixel_mut(y, x).set(c, value);
    }

    /// Raster-ordered spike vectors.
    pub fn vectors(&self) -> &[SpikeVector] {
        &self.grid
    }

    pub fn spike_count(&self) -> u64 {
        self.grid.iter().map(SpikeVector::count_ones).sum()
    }

    pub fn nonzero_pixels(&self) -> usize {
        self.grid.iter().filter(|v| v.any()).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpikeTensor {
    frames: Vec<SpikeFrame>,
}

impl SpikeTensor {
    pub fn new(frames: Vec<SpikeFrame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Degenerate("spike tensor needs at least one timestep".into()))?;
        let dims = first.dims();
        if let Some((t, f)) = frames.iter().enumerate().find(|(_, f)| f.dims() != dims) {
            return Err(Error::shape(format!(
                "timestep {t} has dims {:?}, expected {dims:?}",
                f.dims()
            )));
        }
        Ok(Self { frames })
    }

    pub fn single(frame: SpikeFrame) -> Self {
        Self {
            frames: vec![frame],
        }
    }

    pub fn timesteps(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[SpikeFrame] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &SpikeFrame {
        &self.frames[t]
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.frames[0].dims()
    }

    pub fn spike_count(&self) -> u64 {
        self.frames.iter().map(SpikeFrame::spike_count).sum()
    }
}

/// Spike firing rate: spikes over all timesteps divided by the neuron count of
/// one frame. Lies in `[0, T]`.
pub fn sfr_of_frame(tensor: &SpikeTensor, layer: &str) -> Result<Ratio<u64>> {
    let neurons = tensor.frame(0).neuron_count() as u64;
    if neurons == 0 {
        return Err(Error::Degenerate(format!("layer {layer} has zero neurons")));
    }
    Ok(Ratio::new(tensor.spike_count(), neurons))
}
