//! Acceptance suite. Each criterion is checked against an oracle written
//! here, independently of the library internals, and reported as one
//! PASS/FAIL line.

use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stisnn::codec::{decode_events, encode_events, event_width};
use stisnn::config::parse_config;
use stisnn::cost::{
    access_counts_mode, access_counts_os, access_counts_ws, best_parallel_factors, bottleneck_speedup, cost_report,
    total_vmem_bytes, vmem_bytes, AccessCounts, ConvGeometry, LatencyParams, KB,
};
use stisnn::dataflow::{conv_layer, fc::fully_connected, pool_layer};
use stisnn::pipeline::{simulate, StageModel};
use stisnn::{LayerMode, LayerSpec, Leak, MembraneState, NeuronParams, QuantizedWeights, SpikeFrame};

const SCNN3: &str = "28x28 16c3-32c3-p2-32c3-p2-fc";
const SCNN5: &str = "32x32:3 64c3-p2-128c3-p2-256c3-p2-256c3-p2-512c3-p2-fc";

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_frame(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, density: Range<f64>) -> SpikeFrame {
    let density = rng.random_range(density);
    let mut f = SpikeFrame::zeros(h, w, c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                if rng.random_bool(density) {
                    f.set(y, x, ch, true);
                }
            }
        }
    }
    f
}

fn fire(u_prev: i32, current: i64, n: &NeuronParams) -> (i32, bool) {
    let leaked = i64::from(u_prev) * i64::from(n.leak.0) / 256;
    let limit = (1i64 << (n.vmem_width - 1)) - 1;
    let current = current.clamp(i64::from(i32::MIN), i64::from(i32::MAX));
    let u = (leaked + current).clamp(-limit, limit);
    if u >= i64::from(n.threshold) {
        (0, true)
    } else {
        (u as i32, false)
    }
}

/// Direct convolution over padded coordinates with one neuron update per output.
fn dense_conv(input: &SpikeFrame, spec: &LayerSpec, w: &QuantizedWeights, u_prev: &[i32]) -> (SpikeFrame, Vec<i32>) {
    let (h, wd, ci_n) = input.dims();
    let (k, pad) = (spec.kernel_h, spec.padding as isize);
    let oh = h + 2 * spec.padding + 1 - k;
    let ow = wd + 2 * spec.padding + 1 - k;
    let mut out = SpikeFrame::zeros(oh, ow, spec.out_channels);
    let mut u = vec![0; oh * ow * spec.out_channels];
    let vals = w.values();
    for oy in 0..oh {
        for ox in 0..ow {
            for co in 0..spec.out_channels {
                let mut acc = i64::from(w.bias()[co]);
                for ky in 0..k {
                    for kx in 0..k {
                        let y = oy as isize + ky as isize - pad;
                        let x = ox as isize + kx as isize - pad;
                        if y < 0 || x < 0 || y >= h as isize || x >= wd as isize {
                            continue;
                        }
                        let (y, x) = (y as usize, x as usize);
                        match spec.mode {
                            LayerMode::Depthwise => {
                                if input.get(y, x, co) {
                                    acc += i64::from(vals[(co * k + ky) * k + kx]);
                                }
                            }
                            _ => {
                                for ci in 0..ci_n {
                                    if input.get(y, x, ci) {
                                        acc += i64::from(vals[((co * ci_n + ci) * k + ky) * k + kx]);
                                    }
                                }
                            }
                        }
                    }
                }
                let i = (oy * ow + ox) * spec.out_channels + co;
                let (v, s) = fire(u_prev[i], acc, &spec.neuron);
                u[i] = v;
                if s {
                    out.set(oy, ox, co, true);
                }
            }
        }
    }
    (out, u)
}

fn random_weights(rng: &mut ChaCha8Rng, spec: &LayerSpec) -> QuantizedWeights {
    let values = (0..spec.weight_count()).map(|_| rng.random::<i8>()).collect();
    let bias = (0..spec.bias_count()).map(|_| rng.random_range(-64..=64)).collect();
    QuantizedWeights::new(spec, values, bias).unwrap()
}

fn random_neuron(rng: &mut ChaCha8Rng) -> NeuronParams {
    NeuronParams {
        threshold: rng.random_range(1..=200),
        leak: Leak(rng.random_range(0..=256)),
        vmem_width: rng.random_range(6..=18),
    }
}

fn dataflow_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xDA7A);
    const CASES: usize = 1000;
    for mode in [LayerMode::Standard, LayerMode::Depthwise, LayerMode::Pointwise] {
        for case in 0..CASES {
            let h = rng.random_range(1..=8);
            let w = rng.random_range(1..=8);
            let ci = rng.random_range(1..=8);
            let (co, k) = match mode {
                LayerMode::Standard => (rng.random_range(1..=8), rng.random_range(1..=3usize) * 2 - 1),
                LayerMode::Depthwise => (ci, rng.random_range(1..=3usize) * 2 - 1),
                _ => (rng.random_range(1..=8), 1),
            };
            let max_pad = (k - 1) / 2;
            let mut pad = rng.random_range(0..=max_pad);
            if h + 2 * pad < k || w + 2 * pad < k {
                pad = max_pad;
            }
            let spec = LayerSpec::conv(mode, ci, co, k, 1).with_padding(pad).with_neuron(random_neuron(&mut rng));
            let weights = random_weights(&mut rng, &spec);
            let input = random_frame(&mut rng, h, w, ci, 0.05..0.9);
            let (oh, ow) = (h + 2 * pad + 1 - k, w + 2 * pad + 1 - k);
            let stateful = case % 2 == 1;
            let prior: Vec<i32> = if stateful {
                (0..oh * ow * co).map(|_| rng.random_range(-300..300)).collect()
            } else {
                vec![0; oh * ow * co]
            };
            let mut state = if stateful {
                MembraneState::from_potentials(prior.clone(), 1)
            } else {
                MembraneState::stateless()
            };
            let (got, _) = conv_layer(&input, &spec, &weights, &mut state).map_err(|e| e.to_string())?;
            let (want, u) = dense_conv(&input, &spec, &weights, &prior);
            ensure(got == want, || format!("{mode} case {case}: spikes differ from the dense oracle"))?;
            if stateful {
                ensure(state.potentials() == u.as_slice(), || {
                    format!("{mode} case {case}: potentials differ from the dense oracle")
                })?;
            }
        }
    }

    for case in 0..CASES {
        let win = rng.random_range(1..=4usize);
        let h = win * rng.random_range(1..=8 / win);
        let w = win * rng.random_range(1..=8 / win);
        let c = rng.random_range(1..=8);
        let input = random_frame(&mut rng, h, w, c, 0.02..0.6);
        let (got, _) = pool_layer(&input, &LayerSpec::pool(c, win)).map_err(|e| e.to_string())?;
        let mut want = SpikeFrame::zeros(h / win, w / win, c);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    if input.get(y, x, ch) {
                        want.set(y / win, x / win, ch, true);
                    }
                }
            }
        }
        ensure(got == want, || format!("pool case {case}: output differs from the OR oracle"))?;
    }

    for case in 0..CASES {
        let (h, w, c) = (rng.random_range(1..=8), rng.random_range(1..=8), rng.random_range(1..=8));
        let classes = rng.random_range(1..=10);
        let spec = LayerSpec::fully_connected(h * w * c, classes);
        let weights = random_weights(&mut rng, &spec);
        let input = random_frame(&mut rng, h, w, c, 0.05..0.9);
        let got = fully_connected(&input, &spec, &weights).map_err(|e| e.to_string())?;
        let want: Vec<i32> = (0..classes)
            .map(|k| {
                let mut acc = i64::from(weights.bias()[k]);
                for y in 0..h {
                    for x in 0..w {
                        for ch in 0..c {
                            if input.get(y, x, ch) {
                                acc += i64::from(weights.values()[k * h * w * c + (y * w + x) * c + ch]);
                            }
                        }
                    }
                }
                acc as i32
            })
            .collect();
        ensure(got == want, || format!("fc case {case}: potentials differ from the dense oracle"))?;
    }

    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("5 x {CASES} layers match, {secs:.1} s"))
}

fn count_os(g: &ConvGeometry, t: u64) -> AccessCounts {
    let mut c = AccessCounts::default();
    for step in 0..t {
        for _ in 0..g.c_o * g.h_o * g.w_o {
            if step > 0 {
                c.psum_accesses += 1;
            }
            for _ in 0..g.c_i * g.k_h * g.k_w {
                c.input_reads += 1;
                c.weight_reads += 1;
            }
        }
    }
    c
}

fn count_ws(g: &ConvGeometry, t: u64) -> AccessCounts {
    let mut c = AccessCounts::default();
    for _ in 0..t {
        for _ in 0..g.c_o * g.c_i {
            c.weight_reads += g.k_h * g.k_w;
            for _ in 0..g.h_o * g.w_o {
                c.psum_accesses += 1;
                c.input_reads += g.k_h * g.k_w;
            }
        }
    }
    c
}

fn count_mode(g: &ConvGeometry, t: u64) -> AccessCounts {
    let mut c = AccessCounts::default();
    let slices = if g.mode == LayerMode::Depthwise { 1 } else { g.c_i };
    for step in 0..t {
        c.input_reads += g.h_i * g.w_i;
        for _ in 0..g.h_o * g.w_o * g.c_o {
            if step > 0 {
                c.psum_accesses += 1;
            }
            c.weight_reads += slices;
        }
    }
    c
}

fn cost_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC057);
    for case in 0..500 {
        let mode = [LayerMode::Standard, LayerMode::Depthwise, LayerMode::Pointwise][case % 3];
        let c_i = rng.random_range(1..=12);
        let c_o = if mode == LayerMode::Depthwise { c_i } else { rng.random_range(1..=12) };
        let k = if mode == LayerMode::Pointwise { 1 } else { rng.random_range(1..=5) };
        let (h_o, w_o) = (rng.random_range(1..=12), rng.random_range(1..=12));
        let g = ConvGeometry::standard(
            c_i,
            c_o,
            k,
            k,
            h_o + rng.random_range(0..k),
            w_o + rng.random_range(0..k),
            h_o,
            w_o,
        )
        .with_mode(mode);
        let t = rng.random_range(1..=4);
        ensure(access_counts_os(&g, t) == count_os(&g, t), || format!("OS case {case}: {g:?} T={t}"))?;
        ensure(access_counts_ws(&g, t) == count_ws(&g, t), || format!("WS case {case}: {g:?} T={t}"))?;
        let m = access_counts_mode(mode, &g, t).map_err(|e| e.to_string())?;
        ensure(m == count_mode(&g, t), || format!("mode case {case}: {g:?} T={t}"))?;
    }
    let g = ConvGeometry::standard(2, 4, 3, 3, 7, 7, 5, 5);
    let triple = |a: AccessCounts| (a.input_reads, a.weight_reads, a.psum_accesses);
    let (os, ws) = (triple(access_counts_os(&g, 1)), triple(access_counts_ws(&g, 1)));
    ensure(os == (1800, 1800, 0), || format!("worked example OS = {os:?}"))?;
    ensure(ws == (1800, 72, 200), || format!("worked example WS = {ws:?}"))?;
    Ok(format!("500 geometries exact; worked example OS {os:?}, WS {ws:?}"))
}

fn single_timestep_storage() -> Outcome {
    let mut bytes_at_t1 = 0;
    for arch in [SCNN3, SCNN5] {
        let c = parse_config(arch).map_err(|e| e.to_string())?;
        let layers = vmem_bytes(&c, 1).map_err(|e| e.to_string())?;
        ensure(layers.iter().all(|l| l.bytes == 0), || format!("{arch}: nonzero Vmem at T=1"))?;
        bytes_at_t1 += total_vmem_bytes(&layers);
    }
    let c = parse_config(SCNN5).map_err(|e| e.to_string())?;
    let total = total_vmem_bytes(&vmem_bytes(&c, 2).map_err(|e| e.to_string())?);
    // accelerator convs: 128@16x16, 256@8x8, 256@4x4, 512@2x2, 18-bit potentials
    let neurons: u64 = 128 * 16 * 16 + 256 * 8 * 8 + 256 * 4 * 4 + 512 * 2 * 2;
    let oracle = (neurons * 18).div_ceil(8);
    ensure(total == oracle, || format!("SCNN5 T=2 total {total} B, oracle {oracle} B"))?;
    let kb = total as f64 / KB as f64;
    ensure((113.0..=139.0).contains(&kb), || format!("SCNN5 T=2 total {kb:.3} KB"))?;
    Ok(format!("T=1 total {bytes_at_t1} B; SCNN5 T=2 total {kb:.3} KB"))
}

fn energy_linearity() -> Outcome {
    let c = parse_config(SCNN5).map_err(|e| e.to_string())?;
    let e1 = cost_report(&c, 1).map_err(|e| e.to_string())?.energy_pj;
    let e2 = cost_report(&c, 2).map_err(|e| e.to_string())?.energy_pj;
    let ratio = e2 / e1;
    ensure((1.9..=2.3).contains(&ratio), || format!("E(T=2)/E(T=1) = {ratio:.4}"))?;
    Ok(format!("E(T=2)/E(T=1) = {ratio:.4}"))
}

fn latency_oracle(g: &ConvGeometry, p: u64) -> u64 {
    g.h_o * g.w_o * g.c_o.div_ceil(p) * g.c_i
}

fn speedup() -> Outcome {
    let lp = LatencyParams { t_rw: 0, t_pe: 1, t_pes: 0 };
    let mut report = Vec::new();
    for (arch, factors) in [(SCNN3, vec![4, 2]), (SCNN5, vec![4, 4, 2, 1])] {
        let g = parse_config(arch).map_err(|e| e.to_string())?.conv_geometries().map_err(|e| e.to_string())?;
        let s = bottleneck_speedup(&g, &lp, &factors);
        let before = g.iter().map(|g| latency_oracle(g, 1)).max().unwrap();
        let after = g.iter().zip(&factors).map(|(g, &p)| latency_oracle(g, p)).max().unwrap();
        ensure(s == 4.0 && before == 4 * after, || format!("{factors:?}: speedup {s}, oracle {before}/{after}"))?;
        report.push(format!("{factors:?} -> {s}"));
    }
    let g = parse_config(SCNN5).map_err(|e| e.to_string())?.conv_geometries().map_err(|e| e.to_string())?;
    let best = best_parallel_factors(&g, &lp, 99).map_err(|e| e.to_string())?;
    ensure(best == vec![4, 4, 2, 1], || format!("search under 99 PEs returned {best:?}"))?;
    Ok(format!("{}; search(99) = {best:?}", report.join(", ")))
}

fn pipeline_model() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x919E);
    let mut worst_gap: f64 = 0.0;
    for set in 0..100 {
        let n_stages = rng.random_range(1..=8);
        let cycles: Vec<u64> = (0..n_stages).map(|_| rng.random_range(1..=500)).collect();
        let stages: Vec<StageModel> =
            cycles.iter().enumerate().map(|(i, &c)| StageModel::coarse(format!("s{i}"), c)).collect();
        let bottleneck = *cycles.iter().max().unwrap();
        let rest: u64 = cycles.iter().sum::<u64>() - bottleneck;
        for n in [1u64, 10, 1000] {
            let trace = simulate(&stages, n).map_err(|e| e.to_string())?;
            let oracle = n * bottleneck + rest;
            ensure(trace.makespan == oracle, || {
                format!("set {set} N={n}: simulated {} vs {oracle} for {cycles:?}", trace.makespan)
            })?;
            if n == 1000 {
                let gap = (trace.average_latency() - bottleneck as f64).abs() / bottleneck as f64;
                worst_gap = worst_gap.max(gap);
                ensure(gap < 0.01, || format!("set {set}: T_avg off the bottleneck by {:.3}%", gap * 100.0))?;
            }
        }
    }
    Ok(format!("100 stage sets x N in {{1, 10, 1000}} exact; worst T_avg gap {:.4}%", worst_gap * 100.0))
}

fn codec() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DE);
    for case in 0..10_000 {
        let (h, w, c) = (rng.random_range(1..=32), rng.random_range(1..=32), rng.random_range(1..=40));
        let frame = random_frame(&mut rng, h, w, c, 0.0..0.3);
        let stream = encode_events(&frame).map_err(|e| e.to_string())?;
        let back = decode_events(&stream).map_err(|e| e.to_string())?;
        ensure(back == frame, || format!("case {case}: roundtrip mismatch at {h}x{w}x{c}"))?;
        let events = (0..h).flat_map(|y| (0..w).map(move |x| (y, x))).filter(|&(y, x)| {
            (0..c).any(|ch| frame.get(y, x, ch))
        });
        let events = events.count() as u64;
        let bits = |n: usize| if n <= 1 { 0 } else { 64 - (n as u64 - 1).leading_zeros() as u64 };
        let width = bits(h) + bits(w) + c as u64;
        ensure(u64::from(stream.event_count()) == events, || format!("case {case}: event count"))?;
        ensure(stream.event_width() == width, || format!("case {case}: event width"))?;
        ensure(stream.payload_bits() == events * width, || format!("case {case}: payload bits"))?;
        ensure(stream.payload().len() as u64 == (events * width).div_ceil(8), || {
            format!("case {case}: payload length")
        })?;
    }
    let w = event_width(28, 28, 16);
    ensure(w == 26, || format!("width(28, 28, 16) = {w}"))?;
    Ok("10000 frames roundtrip; width(28, 28, 16) = 26".into())
}

fn write_idx(path: &Path, magic: u32, dims: &[u32], data: &[u8]) {
    let mut bytes = magic.to_be_bytes().to_vec();
    for d in dims {
        bytes.extend(d.to_be_bytes());
    }
    bytes.extend(data);
    std::fs::write(path, bytes).unwrap();
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_stisnn")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1D);
    let n = 24u32;
    let pixels: Vec<u8> = (0..n * 28 * 28).map(|_| rng.random()).collect();
    let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..10)).collect();
    write_idx(Path::new(&p("images.idx")), 0x803, &[n, 28, 28], &pixels);
    write_idx(Path::new(&p("labels.idx")), 0x801, &[n], &labels);
    run_cli(&["init-weights", "--arch", SCNN3, "--seed", "7", "--out", &p("w.stiw")])?;
    let mut sizes = Vec::new();
    for format in ["csv", "json"] {
        let args = [
            "infer", "--arch", SCNN3, "--weights", &p("w.stiw"), "--images", &p("images.idx"), "--labels",
            &p("labels.idx"), "--format", format,
        ];
        let a = run_cli(&args)?;
        let b = run_cli(&args)?;
        ensure(!a.is_empty() && a == b, || format!("{format} reports differ between runs"))?;
        sizes.push(a.len());
    }
    Ok(format!("csv ({} B) and json ({} B) reports byte-identical across runs", sizes[0], sizes[1]))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("dataflow correctness", dataflow_correctness),
        ("cost-formula fidelity", cost_fidelity),
        ("single-timestep storage", single_timestep_storage),
        ("energy linearity", energy_linearity),
        ("parallel-factor speedup", speedup),
        ("pipeline model", pipeline_model),
        ("spike event codec", codec),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
