//! OR pooling on the line buffer. On binary spikes OR equals max.

use crate::dataflow::line_buffer::LineBuffer;
use crate::dataflow::tally::AccessTally;
use crate::error::{Error, Result};
use crate::layer::{LayerMode, LayerSpec};
use crate::spike::SpikeFrame;

pub fn pool_or(input: &SpikeFrame, window: usize) -> Result<SpikeFrame> {
    pool_with_tally(input, window).map(|(f, _)| f)
}

pub fn pool_layer(input: &SpikeFrame, spec: &LayerSpec) -> Result<(SpikeFrame, AccessTally)> {
    if spec.mode != LayerMode::Pool {
        return Err(Error::InvalidLayer(format!("expected pool, got {}", spec.mode)));
    }
    if spec.kernel_h != spec.kernel_w {
        return Err(Error::InvalidLayer("pool window must be square".into()));
    }
    if input.channels() != spec.in_channels {
        return Err(Error::shape(format!(
            "{}-channel input for a {}-channel pool",
            input.channels(),
            spec.in_channels
        )));
    }
    pool_with_tally(input, spec.kernel_h)
}

fn pool_with_tally(input: &SpikeFrame, window: usize) -> Result<(SpikeFrame, AccessTally)> {
    let (h, w, c) = input.dims();
    if window == 0 || h % window != 0 || w % window != 0 {
        return Err(Error::shape(format!(
            "pool window {window} does not divide {h}x{w}"
        )));
    }
    let mut lb = LineBuffer::new(h, w, c, window, window, window, 0)?;
    let mut out = SpikeFrame::zeros(h / window, w / window, c);
    let mut tally = AccessTally::default();
    for v in input.vectors() {
        tally.input_vector_fetches += 1;
        for win in lb.push(v.clone())? {
            let dst = out.pixel_mut(win.out_y, win.out_x);
            for v in &win.vectors {
                dst.or_assign(v);
            }
        }
    }
    Ok((out, tally))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spike::SpikeVector;
    use proptest::prelude::*;

    fn max_pool_reference(f: &SpikeFrame) -> SpikeFrame {
        let (h, w, c) = f.dims();
        SpikeFrame::from_fn(h / 2, w / 2, c, |y, x, ch| {
            [(0, 0), (0, 1), (1, 0), (1, 1)]
                .iter()
                .map(|&(a, b)| u8::from(f.get(2 * y + a, 2 * x + b, ch)))
                .max()
                .unwrap()
                == 1
        })
    }

    #[test]
    fn or_of_window() {
        let grid = [0u64, 0, 1, 0].map(|m| SpikeVector::from_mask(1, m)).to_vec();
        let f = SpikeFrame::from_vectors(2, 2, 1, grid).unwrap();
        assert!(pool_or(&f, 2).unwrap().get(0, 0, 0));
        let z = SpikeFrame::zeros(4, 6, 3);
        assert_eq!(pool_or(&z, 2).unwrap(), SpikeFrame::zeros(2, 3, 3));
    }

    #[test]
    fn odd_dims_rejected() {
        assert!(matches!(pool_or(&SpikeFrame::zeros(3, 4, 1), 2), Err(Error::Shape(_))));
        assert!(pool_or(&SpikeFrame::zeros(28, 28, 1), 3).is_err());
    }

    proptest! {
        #[test]
        fn equals_max_pool(seed in any::<u64>(), salt in any::<u64>()) {
            let f = SpikeFrame::from_fn(8, 8, 4, |y, x, c| {
                ((seed ^ salt.rotate_left(c as u32)) >> ((y * 8 + x) % 64)) & 1 == 1
            });
            prop_assert_eq!(pool_or(&f, 2).unwrap(), max_pool_reference(&f));
        }

        #[test]
        fn constant_frames_are_fixed_points(on in any::<bool>(), h in 1usize..5, w in 1usize..5) {
            let f = SpikeFrame::from_fn(2 * h, 2 * w, 3, |_, _, _| on);
            let p = pool_or(&f, 2).unwrap();
            prop_assert_eq!(p, SpikeFrame::from_fn(h, w, 3, |_, _, _| on));
        }

        #[test]
        fn commutes_with_channel_slicing(seed in any::<u64>(), ch in 0usize..4) {
            let f = SpikeFrame::from_fn(4, 6, 4, |y, x, c| (seed >> ((y * 6 + x + 13 * c) % 64)) & 1 == 1);
            let slice = |g: &SpikeFrame| SpikeFrame::from_fn(g.height(), g.width(), 1, |y, x, _| g.get(y, x, ch));
            prop_assert_eq!(slice(&pool_or(&f, 2).unwrap()), pool_or(&slice(&f), 2).unwrap());
        }
    }
}
