//! Line buffer built from `K_h` chained FIFOs of depth `W_i`.
//!
//! Spike vectors enter FIFO 0 in raster order. When a FIFO holds `W_i`
//! entries its head spills into the tail of the next one, so the most recent
//! `K_h·W_i` input pixels stay resident and each pixel is fetched exactly once.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::spike::{SpikeFrame, SpikeVector};

/// The `K_h × K_w` spike vectors feeding the PE array for one output pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReceptiveWindow {
    pub out_y: usize,
    pub out_x: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    /// Row-major, one vector per PE position. Padding positions are all-zero.
    pub vectors: Vec<SpikeVector>,
}

impl ReceptiveWindow {
    pub fn get(&self, kh: usize, kw: usize) -> &SpikeVector {
        &self.vectors[kh * self.kernel_w + kw]
    }
}

#[derive(Clone, Debug)]
pub struct LineBuffer {
    fifos: Vec<VecDeque<SpikeVector>>,
    height: usize,
    width: usize,
    channels: usize,
    kernel_h: usize,
    kernel_w: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
    pushed: usize,
    next_window: usize,
    zero: SpikeVector,
}

impl LineBuffer {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if kernel_h == 0 || kernel_w == 0 || stride == 0 {
            return Err(Error::shape("line buffer needs nonzero kernel and stride"));
        }
        let (ph, pw) = (height + 2 * padding, width + 2 * padding);
        if ph < kernel_h || pw < kernel_w || padding >= kernel_h.min(kernel_w) && padding > 0 {
            return Err(Error::shape(format!(
                "{kernel_h}x{kernel_w} kernel with padding {padding} does not fit {height}x{width}"
            )));
        }
        Ok(Self {
            fifos: (0..kernel_h).map(|_| VecDeque::with_capacity(width)).collect(),
            height,
            width,
            channels,
            kernel_h,
            kernel_w,
            stride,
            padding,
            out_h: (ph - kernel_h) / stride + 1,
            out_w: (pw - kernel_w) / stride + 1,
            pushed: 0,
            next_window: 0,
            zero: SpikeVector::zeros(channels),
        })
    }

    pub fn output_dims(&self) -> (usize, usize) {
        (self.out_h, self.out_w)
    }

    pub fn fifo_count(&self) -> usize {
        self.fifos.len()
    }

    pub fn fifo_depth(&self) -> usize {
        self.width
    }

    pub fn resident(&self) -> usize {
        self.fifos.iter().map(VecDeque::len).sum()
    }

    /// Raster index of the last input pixel window `(oy, ox)` depends on.
    fn last_needed(&self, oy: usize, ox: usize) -> usize {
        let row = (oy * self.stride + self.kernel_h - 1)
            .saturating_sub(self.padding)
            .min(self.height - 1);
        let col = (ox * self.stride + self.kernel_w - 1)
            .saturating_sub(self.padding)
            .min(self.width - 1);
        row * self.width + col
    }

    fn resident_pixel(&self, index: usize) -> &SpikeVector {
        let back = self.pushed - 1 - index;
        let fifo = &self.fifos[back / self.width];
        debug_assert!(back % self.width < fifo.len(), "pixel {index} evicted");
        &fifo[fifo.len() - 1 - back % self.width]
    }

    fn window(&self, oy: usize, ox: usize) -> ReceptiveWindow {
        let mut vectors = Vec::with_capacity(self.kernel_h * self.kernel_w);
        for kh in 0..self.kernel_h {
            for kw in 0..self.kernel_w {
                let iy = (oy * self.stride + kh).checked_sub(self.padding);
                let ix = (ox * self.stride + kw).checked_sub(self.padding);
                let v = match (iy, ix) {
                    (Some(y), Some(x)) if y < self.height && x < self.width => {
                        self.resident_pixel(y * self.width + x)
                    }
                    _ => &self.zero,
                };
                vectors.push(v.clone());
            }
        }
        ReceptiveWindow {
            out_y: oy,
            out_x: ox,
            kernel_h: self.kernel_h,
            kernel_w: self.kernel_w,
            vectors,
        }
    }

    /// Pushes the next raster-order input vector and returns every receptive
    /// window that became complete, in raster order.
    ///
    /// Without padding at most one window is returned per push; with padding the
    /// pixels along the bottom and right edges can complete several at once.
    pub fn push(&mut self, v: SpikeVector) -> Result<Vec<ReceptiveWindow>> {
        if v.len() != self.channels {
            return Err(Error::shape(format!(
                "{}-bit spike vector pushed into a {}-bit line buffer",
                v.len(),
                self.channels
            )));
        }
        if self.pushed == self.height * self.width {
            return Err(Error::shape("line buffer already holds a complete frame"));
        }
        let mut carry = Some(v);
        for fifo in &mut self.fifos {
            let Some(entry) = carry.take() else { break };
            fifo.push_back(entry);
            if fifo.len() > self.width {
                carry = fifo.pop_front();
            }
        }
        self.pushed += 1;

        let mut ready = Vec::new();
        while self.next_window < self.out_h * self.out_w {
            let (oy, ox) = (self.next_window / self.out_w, self.next_window % self.out_w);
            if self.last_needed(oy, ox) >= self.pushed {
                break;
            }
            ready.push(self.window(oy, ox));
            self.next_window += 1;
        }
        Ok(ready)
    }

    /// Clears the buffer for the next frame.
    pub fn reset(&mut self) {
        self.fifos.iter_mut().for_each(VecDeque::clear);
        self.pushed = 0;
        self.next_window = 0;
    }

    /// Streams a whole frame and collects all windows.
    pub fn windows_of(&mut self, frame: &SpikeFrame) -> Result<Vec<ReceptiveWindow>> {
        if frame.height() != self.height || frame.width() != self.width {
            return Err(Error::shape(format!(
                "{}x{} frame in a line buffer for {}x{}",
                frame.height(),
                frame.width(),
                self.height,
                self.width
            )));
        }
        self.reset();
        let mut out = Vec::with_capacity(self.out_h * self.out_w);
        for v in frame.vectors() {
            out.extend(self.push(v.clone())?);
        }
        Ok(out)
    }
}
