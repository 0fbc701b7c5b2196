//! Multi-mode PE array under the output-stationary dataflow.
//!
//! For every receptive window the array keeps one accumulator per PE. Output
//! channels are visited in turn; for each one the kernel slices of the input
//! channels are fetched sequentially and broadcast to the PEs, which add a
//! weight only where their spike vector has the matching channel bit set.
//! The per-PE sums are reduced, handed to the neuron and cleared before the
//! next output channel, so no partial sum ever leaves the array at T = 1.

use crate::dataflow::line_buffer::{LineBuffer, ReceptiveWindow};
use crate::dataflow::tally::AccessTally;
use crate::error::{Error, Result};
use crate::layer::{LayerMode, LayerSpec, QuantizedWeights};
use crate::neuron::{neuron_step, saturate_i32, MembraneState};
use crate::spike::SpikeFrame;

pub fn conv_standard(
    input: &SpikeFrame,
    spec: &LayerSpec,
    weights: &QuantizedWeights,
    state: &mut MembraneState,
) -> Result<(SpikeFrame, AccessTally)> {
    expect_mode(spec, LayerMode::Standard)?;
    run(input, spec, weights, state)
}

pub fn conv_depthwise(
    input: &SpikeFrame,
    spec: &LayerSpec,
    weights: &QuantizedWeights,
    state: &mut MembraneState,
) -> Result<(SpikeFrame, AccessTally)> {
    expect_mode(spec, LayerMode::Depthwise)?;
    run(input, spec, weights, state)
}

pub fn conv_pointwise(
    input: &SpikeFrame,
    spec: &LayerSpec,
    weights: &QuantizedWeights,
    state: &mut MembraneState,
) -> Result<(SpikeFrame, AccessTally)> {
    expect_mode(spec, LayerMode::Pointwise)?;
    run(input, spec, weights, state)
}

/// Dispatches on `spec.mode`; any convolution mode is accepted.
pub fn conv_layer(
    input: &SpikeFrame,
    spec: &LayerSpec,
    weights: &QuantizedWeights,
    state: &mut MembraneState,
) -> Result<(SpikeFrame, AccessTally)> {
    if !spec.mode.is_conv() {
        return Err(Error::InvalidLayer(format!(
            "{} is not a convolution mode",
            spec.mode
        )));
    }
    run(input, spec, weights, state)
}

fn expect_mode(spec: &LayerSpec, mode: LayerMode) -> Result<()> {
    if spec.mode != mode {
        return Err(Error::InvalidLayer(format!(
            "expected a {mode} layer, got {}",
            spec.mode
        )));
    }
    Ok(())
}

fn run(
    input: &SpikeFrame,
    spec: &LayerSpec,
    weights: &QuantizedWeights,
    state: &mut MembraneState,
) -> Result<(SpikeFrame, AccessTally)> {
    spec.validate()?;
    weights.check(spec)?;
    let (h, w, c) = input.dims();
    if c != spec.in_channels {
        return Err(Error::shape(format!(
            "{c}-channel input for a layer expecting {}",
            spec.in_channels
        )));
    }
    let (oh, ow) = spec.output_dims(h, w)?;
    state.expect_neurons(oh * ow * spec.out_channels)?;

    let mut lb = LineBuffer::new(
        h,
        w,
        c,
        spec.kernel_h,
        spec.kernel_w,
        spec.stride,
        spec.padding,
    )?;
    let mut out = SpikeFrame::zeros(oh, ow, spec.out_channels);
    let mut tally = AccessTally::default();
    for v in input.vectors() {
        tally.input_vector_fetches += 1;
        for window in lb.push(v.clone())? {
            process_window(&window, spec, weights, state, &mut out, &mut tally);
        }
    }
    state.finish_step();
    Ok((out, tally))
}

fn process_window(
    window: &ReceptiveWindow,
    spec: &LayerSpec,
    weights: &QuantizedWeights,
    state: &mut MembraneState,
    out: &mut SpikeFrame,
    tally: &mut AccessTally,
) {
    let area = window.vectors.len() as u64;
    let base = (window.out_y * out.width() + window.out_x) * spec.out_channels;
    for co in 0..spec.out_channels {
        let psum = match spec.mode {
            // PEs forward the loaded weight on a spike; no cross-channel sum.
            LayerMode::Depthwise => {
                let kernel = weights.kernel(co, 0);
                tally.weight_fetches += 1;
                tally.weight_reads += area;
                tally.input_reads += area;
                accumulate(window, co, kernel, tally)
            }
            _ => {
                let mut acc = 0i64;
                for ci in 0..spec.in_channels {
                    let kernel = weights.kernel(co, ci);
                    tally.weight_fetches += 1;
                    tally.weight_reads += area;
                    tally.input_reads += area;
                    acc += accumulate(window, ci, kernel, tally);
                }
                acc
            }
        };
        let current = saturate_i32(psum + i64::from(weights.bias()[co]));
        let (u_prev, fetched) = state.load(base + co);
        if fetched {
            tally.psum_accesses += 1;
        }
        let (u, spike) = neuron_step(u_prev, current, &spec.neuron);
        state.store(base + co, u);
        if spike {
            out.set(window.out_y, window.out_x, co, true);
        }
    }
}

/// Sum over PEs of the broadcast kernel weight wherever channel `ci` spiked.
#[inline]
fn accumulate(window: &ReceptiveWindow, ci: usize, kernel: &[i8], tally: &mut AccessTally) -> i64 {
    let mut acc = 0i64;
    for (pe, v) in window.vectors.iter().enumerate() {
        if v.get(ci) {
            acc += i64::from(kernel[pe]);
            tally.accumulates += 1;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::NeuronParams;
    use crate::spike::SpikeVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense loop nest over padded coordinates, independent of the line buffer.
    fn dense_reference(
        input: &SpikeFrame,
        spec: &LayerSpec,
        w: &QuantizedWeights,
        u_prev: &[i32],
    ) -> (SpikeFrame, Vec<i32>) {
        let (h, wd, _) = input.dims();
        let (oh, ow) = spec.output_dims(h, wd).unwrap();
        let mut out = SpikeFrame::zeros(oh, ow, spec.out_channels);
        let mut u_next = vec![0; oh * ow * spec.out_channels];
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..spec.out_channels {
                    let mut acc = i64::from(w.bias()[co]);
                    for kh in 0..spec.kernel_h {
                        for kw in 0..spec.kernel_w {
                            let y = (oy + kh) as isize - spec.padding as isize;
                            let x = (ox + kw) as isize - spec.padding as isize;
                            if y < 0 || x < 0 || y >= h as isize || x >= wd as isize {
                                continue;
                            }
                            let (y, x) = (y as usize, x as usize);
                            let channels: Vec<usize> = if spec.mode == LayerMode::Depthwise {
                                vec![co]
                            } else {
                                (0..spec.in_channels).collect()
                            };
                            for ci in channels {
                                if input.get(y, x, ci) {
                                    let idx = if spec.mode == LayerMode::Depthwise {
                                        (co * spec.kernel_h + kh) * spec.kernel_w + kw
                                    } else {
                                        ((co * spec.in_channels + ci) * spec.kernel_h + kh)
                                            * spec.kernel_w
                                            + kw
                                    };
                                    acc += i64::from(w.values()[idx]);
                                }
                            }
                        }
                    }
                    let n = (oy * ow + ox) * spec.out_channels + co;
                    let limit = (1i64 << (spec.neuron.vmem_width - 1)) - 1;
                    let leaked = i64::from(u_prev[n]) * i64::from(spec.neuron.leak.0) / 256;
                    let u = (leaked + acc).clamp(-limit, limit);
                    if u >= i64::from(spec.neuron.threshold) {
                        out.set(oy, ox, co, true);
                    } else {
                        u_next[n] = u as i32;
                    }
                }
            }
        }
        (out, u_next)
    }

    fn random_frame(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, p: f64) -> SpikeFrame {
        SpikeFrame::from_fn(h, w, c, |_, _, _| rng.random_bool(p))
    }

    fn random_weights(rng: &mut ChaCha8Rng, spec: &LayerSpec) -> QuantizedWeights {
        let values = (0..spec.weight_count()).map(|_| rng.random::<i8>()).collect();
        let bias = (0..spec.bias_count()).map(|_| rng.random_range(-8..8)).collect();
        QuantizedWeights::new(spec, values, bias).unwrap()
    }

    #[test]
    fn single_weight_fires() {
        let spec = LayerSpec::standard(1, 1, 1, 4).with_padding(0);
        let w = QuantizedWeights::new(&spec, vec![5], vec![0]).unwrap();
        let input = SpikeFrame::from_fn(1, 1, 1, |_, _, _| true);
        let mut state = MembraneState::zeros(1);
        let (out, _) = conv_standard(&input, &spec, &w, &mut state).unwrap();
        assert!(out.get(0, 0, 0));
        assert_eq!(state.potentials(), &[0]);
    }

    #[test]
    fn zero_input_only_leaks() {
        let mut spec = LayerSpec::standard(2, 2, 3, 1000);
        spec.neuron.leak = crate::layer::Leak::from_f64(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut w = random_weights(&mut rng, &spec);
        w = QuantizedWeights::new(&spec, w.values().to_vec(), vec![0, 0]).unwrap();
        let prev: Vec<i32> = (0..2 * 3 * 3).map(|i| i * 10 - 80).collect();
        let mut state = MembraneState::from_potentials(prev.clone(), 1);
        let (out, _) =
            conv_standard(&SpikeFrame::zeros(3, 3, 2), &spec, &w, &mut state).unwrap();
        assert_eq!(out.spike_count(), 0);
        let leaked: Vec<i32> = prev.iter().map(|&u| u * 128 / 256).collect();
        assert_eq!(state.potentials(), &leaked[..]);
    }

    #[test]
    fn standard_matches_dense_6x6() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = LayerSpec::standard(3, 4, 3, 64);
        let w = random_weights(&mut rng, &spec);
        let input = random_frame(&mut rng, 6, 6, 3, 0.5);
        let mut state = MembraneState::stateless();
        let (out, _) = conv_standard(&input, &spec, &w, &mut state).unwrap();
        let (expect, _) = dense_reference(&input, &spec, &w, &[0; 144]);
        assert_eq!(out, expect);
    }

    #[test]
    fn all_modes_match_dense_with_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..300 {
            let mode = [LayerMode::Standard, LayerMode::Depthwise, LayerMode::Pointwise][case % 3];
            let (h, w) = (rng.random_range(1..=8), rng.random_range(1..=8));
            let ci = rng.random_range(1..=8);
            let co = if mode == LayerMode::Depthwise { ci } else { rng.random_range(1..=8) };
            let k = if mode == LayerMode::Pointwise { 1 } else { [1, 3][rng.random_range(0..2)] };
            let spec = LayerSpec::conv(mode, ci, co, k, rng.random_range(1..200)).with_neuron(
                NeuronParams {
                    threshold: rng.random_range(1..200),
                    leak: crate::layer::Leak(rng.random_range(0..=256)),
                    vmem_width: rng.random_range(8..=18),
                },
            );
            let weights = random_weights(&mut rng, &spec);
            let input = random_frame(&mut rng, h, w, ci, 0.4);
            let neurons = h * w * co;
            let limit = (1i32 << (spec.neuron.vmem_width - 1)) - 1;
            let prev: Vec<i32> = (0..neurons).map(|_| rng.random_range(-limit..=limit)).collect();
            let mut state = MembraneState::from_potentials(prev.clone(), 1);
            let (out, tally) = conv_layer(&input, &spec, &weights, &mut state).unwrap();
            let (expect, u_next) = dense_reference(&input, &spec, &weights, &prev);
            assert_eq!(out, expect, "case {case} {mode}");
            assert_eq!(state.potentials(), &u_next[..], "case {case} {mode}");
            assert_eq!(tally.psum_accesses, neurons as u64);
        }
    }

    #[test]
    fn depthwise_identity_passthrough() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let th = 17;
        let spec = LayerSpec::depthwise(4, 3, th);
        let mut values = vec![0i8; 4 * 9];
        for c in 0..4 {
            values[c * 9 + 4] = th as i8;
        }
        let w = QuantizedWeights::new(&spec, values, vec![0; 4]).unwrap();
        let input = random_frame(&mut rng, 5, 6, 4, 0.5);
        let (out, _) = conv_depthwise(&input, &spec, &w, &mut MembraneState::stateless()).unwrap();
        assert_eq!(out, input);
        let zero = SpikeFrame::zeros(5, 6, 4);
        let (out, _) = conv_depthwise(&zero, &spec, &w, &mut MembraneState::stateless()).unwrap();
        assert_eq!(out, zero);
    }

    #[test]
    fn depthwise_equals_diagonal_standard() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let c = rng.random_range(1..=6);
            let dw = LayerSpec::depthwise(c, 3, rng.random_range(1..100));
            let wd = random_weights(&mut rng, &dw);
            let std = LayerSpec { mode: LayerMode::Standard, ..dw.clone() };
            let mut dense = vec![0i8; c * c * 9];
            for ch in 0..c {
                dense[(ch * c + ch) * 9..(ch * c + ch + 1) * 9].copy_from_slice(wd.kernel(ch, 0));
            }
            let ws = QuantizedWeights::new(&std, dense, wd.bias().to_vec()).unwrap();
            let input = random_frame(&mut rng, 5, 4, c, 0.5);
            let a = conv_depthwise(&input, &dw, &wd, &mut MembraneState::stateless()).unwrap();
            let b = conv_standard(&input, &std, &ws, &mut MembraneState::stateless()).unwrap();
            assert_eq!(a.0, b.0);
        }
    }

    #[test]
    fn pointwise_examples() {
        let spec = LayerSpec::pointwise(2, 1, 5);
        let w = QuantizedWeights::new(&spec, vec![3, 2], vec![0]).unwrap();
        let input = SpikeFrame::from_vectors(1, 1, 2, vec![SpikeVector::from_mask(2, 0b11)]).unwrap();
        let (out, _) = conv_pointwise(&input, &spec, &w, &mut MembraneState::stateless()).unwrap();
        assert!(out.get(0, 0, 0));

        let zero_w = QuantizedWeights::zeros(&spec);
        let (out, _) = conv_pointwise(&input, &spec, &zero_w, &mut MembraneState::stateless()).unwrap();
        assert_eq!(out.spike_count(), 0);
    }

    #[test]
    fn pointwise_equals_standard_k1() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let (ci, co) = (rng.random_range(1..=8), rng.random_range(1..=8));
            let pw = LayerSpec::pointwise(ci, co, rng.random_range(1..100));
            let std = LayerSpec { mode: LayerMode::Standard, ..pw.clone() };
            let w = random_weights(&mut rng, &pw);
            let input = random_frame(&mut rng, 4, 5, ci, 0.5);
            let a = conv_pointwise(&input, &pw, &w, &mut MembraneState::stateless()).unwrap();
            let b = conv_standard(&input, &std, &w, &mut MembraneState::stateless()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn mode_and_shape_errors() {
        let spec = LayerSpec::standard(2, 2, 3, 1);
        let w = QuantizedWeights::zeros(&spec);
        let frame = SpikeFrame::zeros(4, 4, 2);
        let mut st = MembraneState::stateless();
        assert!(matches!(conv_depthwise(&frame, &spec, &w, &mut st), Err(Error::InvalidLayer(_))));
        assert!(matches!(
            conv_standard(&SpikeFrame::zeros(4, 4, 3), &spec, &w, &mut st),
            Err(Error::Shape(_))
        ));
        let mut wrong = MembraneState::zeros(3);
        assert!(matches!(conv_standard(&frame, &spec, &w, &mut wrong), Err(Error::Shape(_))));
        let bad = LayerSpec { out_channels: 3, ..LayerSpec::depthwise(2, 3, 1) };
        assert!(matches!(
            conv_depthwise(&frame, &bad, &QuantizedWeights::none(), &mut st),
            Err(Error::InvalidLayer(_))
        ));
        let bad_pw = LayerSpec { kernel_h: 3, kernel_w: 3, ..LayerSpec::pointwise(2, 2, 1) };
        assert!(conv_pointwise(&frame, &bad_pw, &w, &mut st).is_err());
    }

    #[test]
    fn tally_counts_os_traffic() {
        let spec = LayerSpec::standard(2, 4, 3, 1).with_padding(0);
        let w = QuantizedWeights::zeros(&spec);
        let frame = SpikeFrame::zeros(7, 7, 2);
        let (_, t) = conv_standard(&frame, &spec, &w, &mut MembraneState::stateless()).unwrap();
        assert_eq!(t.input_reads, 1800);
        assert_eq!(t.weight_reads, 1800);
        assert_eq!(t.psum_accesses, 0);
        assert_eq!(t.input_vector_fetches, 49);
        assert_eq!(t.weight_fetches, 2 * 4 * 25);
    }
}
