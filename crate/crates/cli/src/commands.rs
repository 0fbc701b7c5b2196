use std::fs;
use std::path::Path;

use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use stisnn::codec::{decode_events, encode_events};
use stisnn::config::{InputKind, NetworkConfig};
use stisnn::cost::{
    access_counts_os, access_counts_ws, best_parallel_factors, bottleneck_speedup, conv_latency, cost_report,
    pipeline_latency, ConvGeometry, KB,
};
use stisnn::dataflow::Network;
use stisnn::encoder::{encode_input, Image};
use stisnn::idx::{load_idx, IdxArray};
use stisnn::pipeline::{compare_to_model, simulate, size_fifos, stages_from_config, Granularity};
use stisnn::weights::{load_weights, save_weights, BoundNetwork, WeightFile};
use stisnn::{parse_config, LayerMode, QuantizedWeights};

use crate::output::{emit, fixed, render, round6, Table};
use crate::{CliError, Command, ConfigArgs, OutputArgs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GranularityArg {
    Coarse,
    Fine,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::Coarse => Granularity::Coarse,
            GranularityArg::Fine => Granularity::Fine,
        }
    }
}

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Infer { config, weights, images, labels, limit, predictions, output } => {
            infer(&config, &weights, &images, labels.as_deref(), limit, predictions.as_deref(), &output)
        }
        Command::Cost { config, frames, output } => cost(&config, frames, &output),
        Command::Pipeline { config, frames, granularity, capacity, size_fifos, trace, output } => {
            pipeline(&config, frames, granularity.into(), capacity, size_fifos, trace.as_deref(), &output)
        }
        Command::Encode { config, weights, images, index, timestep, stream, output } => {
            encode(&config, &weights, &images, index, timestep, stream.as_deref(), &output)
        }
        Command::CompareDataflow { config, output } => compare_dataflow(&config, &output),
        Command::SearchParallel { config, budget, output } => search_parallel(&config, budget, &output),
        Command::InitWeights { config, seed, out } => init_weights(&config, seed, &out),
    }
}

fn load_config(args: &ConfigArgs) -> Result<NetworkConfig, CliError> {
    let text = match (&args.config, &args.arch) {
        (Some(path), _) => fs::read_to_string(path).map_err(|e| CliError::io(path, e))?,
        (None, Some(arch)) => arch.clone(),
        (None, None) => return Err(CliError::new("usage", "one of --config or --arch is required")),
    };
    let mut config = parse_config(&text)?;
    if let Some(t) = args.timesteps {
        config.timesteps = t;
        config.validate()?;
    }
    Ok(config)
}

fn read_idx(path: &Path) -> Result<IdxArray, CliError> {
    load_idx(path).map_err(|e| match e {
        stisnn::Error::Io(io) => CliError::io(path, io),
        other => CliError::new(other.kind(), format!("{}: {other}", path.display())),
    })
}

fn read_weights(path: &Path, config: &NetworkConfig) -> Result<BoundNetwork, CliError> {
    let file = load_weights(path).map_err(|e| match e {
        stisnn::Error::Io(io) => CliError::io(path, io),
        other => CliError::from(other),
    })?;
    Ok(file.bind(config)?)
}

fn image_of<'a>(config: &NetworkConfig, images: &'a IdxArray, i: usize) -> Result<Image<'a>, CliError> {
    let input = config.input;
    Ok(Image::new(input.height, input.width, input.channels, images.item(i))?)
}

fn check_images(config: &NetworkConfig, images: &IdxArray) -> Result<(), CliError> {
    if config.input.kind != InputKind::Image {
        return Err(CliError::new("config", "this command needs an image-input configuration"));
    }
    let (h, w, c) = (config.input.height, config.input.width, config.input.channels);
    let item: usize = images.dims[1..].iter().product();
    if images.dims.len() != 3 || item != h * w * c {
        return Err(CliError::new(
            "shape",
            format!("images have shape {:?}, configuration expects {h}x{w}x{c}", images.dims),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct LayerSfr {
    label: String,
    spikes: u64,
    neurons: u64,
    sfr: f64,
}

#[derive(Serialize)]
struct InferReport {
    images: usize,
    timesteps: usize,
    correct: Option<usize>,
    accuracy: Option<f64>,
    layers: Vec<LayerSfr>,
}

fn infer(
    args: &ConfigArgs,
    weights: &Path,
    images: &Path,
    labels: Option<&Path>,
    limit: Option<usize>,
    predictions: Option<&Path>,
    out: &OutputArgs,
) -> Result<(), CliError> {
    let config = load_config(args)?;
    let bound = read_weights(weights, &config)?;
    let config = bound.config;
    let imgs = read_idx(images)?;
    check_images(&config, &imgs)?;
    let labels = labels.map(read_idx).transpose()?;
    let n = limit.map_or(imgs.len(), |l| l.min(imgs.len()));
    if let Some(l) = &labels {
        if l.len() < n {
            return Err(CliError::new("shape", format!("{} labels for {n} images", l.len())));
        }
    }
    let encoder = config.encoder.clone().expect("image configs carry an encoder");
    let enc_weights = bound.encoder.expect("bound alongside the encoder");
    let net = Network::from_config(&config, bound.weights)?;
    let t = config.timesteps;

    let results = (0..n)
        .into_par_iter()
        .map(|i| -> Result<_, CliError> {
            let spikes = encode_input(&image_of(&config, &imgs, i)?, &encoder, &enc_weights, t)?;
            let run = net.run(&spikes)?;
            let prediction = run.predicted_class().unwrap_or(0);
            let activity: Vec<u64> = std::iter::once(spikes.spike_count())
                .chain(run.activity.iter().map(|a| a.spikes))
                .collect();
            Ok((prediction, activity))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let (h, w) = encoder.output_dims(config.input.height, config.input.width)?;
    let mut rows: Vec<(String, u64)> = vec![("encoder".into(), (h * w * encoder.out_channels) as u64)];
    for (i, (spec, &(h, w, c))) in net.layers().iter().zip(net.shapes()).enumerate() {
        if spec.mode != LayerMode::FullyConnected {
            rows.push((stisnn::dataflow::layer_label(i, spec), (h * w * c) as u64));
        }
    }
    let mut totals = vec![0u64; rows.len()];
    for (_, a) in &results {
        for (t, s) in totals.iter_mut().zip(a) {
            *t += s;
        }
    }
    let layers: Vec<LayerSfr> = rows
        .into_iter()
        .zip(totals)
        .map(|((label, neurons), spikes)| LayerSfr {
            label,
            spikes,
            neurons,
            sfr: if n == 0 { 0.0 } else { round6(spikes as f64 / (neurons as f64 * n as f64)) },
        })
        .collect();
    let correct = labels.as_ref().map(|l| {
        results.iter().enumerate().filter(|(i, (p, _))| usize::from(l.data[*i]) == *p).count()
    });
    let accuracy = correct.map(|c| if n == 0 { 0.0 } else { round6(c as f64 / n as f64) });

    if let Some(path) = predictions {
        let mut table = Table::new(&["index", "label", "predicted"]);
        for (i, (p, _)) in results.iter().enumerate() {
            let label = labels.as_ref().map_or(String::new(), |l| l.data[i].to_string());
            table.row(vec![i.to_string(), label, p.to_string()]);
        }
        emit(&render(crate::output::Format::Csv, &(), &[table])?, Some(path))?;
    }

    let report = InferReport { images: n, timesteps: t, correct, accuracy, layers };
    let mut summary = Table::new(&["images", "timesteps", "correct", "accuracy"]);
    summary.row(vec![
        n.to_string(),
        t.to_string(),
        correct.map_or(String::new(), |c| c.to_string()),
        accuracy.map_or(String::new(), fixed),
    ]);
    let mut table = Table::new(&["layer", "spikes", "neurons", "sfr"]);
    for l in &report.layers {
        table.row(vec![l.label.clone(), l.spikes.to_string(), l.neurons.to_string(), fixed(l.sfr)]);
    }
    emit(&render(out.format, &report, &[summary, table])?, out.out.as_deref())
}

#[derive(Serialize)]
struct CostSummary {
    timesteps: u64,
    frames: u64,
    total_vmem_bytes: u64,
    total_vmem_kb: f64,
    frame_cycles: u64,
    bottleneck_cycles: u64,
    makespan_cycles: u64,
    average_cycles_per_frame: f64,
    energy_pj: f64,
}

#[derive(Serialize)]
struct CostDoc {
    summary: CostSummary,
    layers: Vec<stisnn::cost::LayerCost>,
}

fn cost(args: &ConfigArgs, frames: u64, out: &OutputArgs) -> Result<(), CliError> {
    let config = load_config(args)?;
    let t = config.timesteps as u64;
    let mut report = cost_report(&config, t)?;
    for l in &mut report.layers {
        l.energy_pj = round6(l.energy_pj);
    }
    let cycles: Vec<u64> = report.layers.iter().map(|l| l.latency_cycles).collect();
    let pipe = pipeline_latency(&cycles, frames)?;
    let summary = CostSummary {
        timesteps: t,
        frames,
        total_vmem_bytes: report.total_vmem_bytes,
        total_vmem_kb: round6(report.total_vmem_bytes as f64 / KB as f64),
        frame_cycles: report.frame_cycles,
        bottleneck_cycles: report.bottleneck_cycles,
        makespan_cycles: pipe.makespan,
        average_cycles_per_frame: round6(pipe.average_f64()),
        energy_pj: round6(report.energy_pj),
    };
    let mut s = Table::new(&[
        "timesteps",
        "frames",
        "total_vmem_bytes",
        "total_vmem_kb",
        "frame_cycles",
        "bottleneck_cycles",
        "makespan_cycles",
        "average_cycles_per_frame",
        "energy_pj",
    ]);
    s.row(vec![
        t.to_string(),
        frames.to_string(),
        summary.total_vmem_bytes.to_string(),
        fixed(summary.total_vmem_kb),
        summary.frame_cycles.to_string(),
        summary.bottleneck_cycles.to_string(),
        summary.makespan_cycles.to_string(),
        fixed(summary.average_cycles_per_frame),
        fixed(summary.energy_pj),
    ]);
    let mut table = Table::new(&[
        "layer",
        "mode",
        "c_i",
        "c_o",
        "k_h",
        "k_w",
        "h_o",
        "w_o",
        "p",
        "os_input_reads",
        "os_weight_reads",
        "os_psum_accesses",
        "fetch_input_vectors",
        "fetch_weight_slices",
        "accumulates",
        "latency_cycles",
        "vmem_bytes",
        "energy_pj",
    ]);
    for l in &report.layers {
        let g = &l.geometry;
        table.row(vec![
            l.label.clone(),
            l.mode.to_string(),
            g.c_i.to_string(),
            g.c_o.to_string(),
            g.k_h.to_string(),
            g.k_w.to_string(),
            g.h_o.to_string(),
            g.w_o.to_string(),
            l.parallel_factor.to_string(),
            l.os.input_reads.to_string(),
            l.os.weight_reads.to_string(),
            l.os.psum_accesses.to_string(),
            l.fetch.input_reads.to_string(),
            l.fetch.weight_reads.to_string(),
            l.accumulates.to_string(),
            l.latency_cycles.to_string(),
            l.vmem_bytes.to_string(),
            fixed(l.energy_pj),
        ]);
    }
    let doc = CostDoc { summary, layers: report.layers };
    emit(&render(out.format, &doc, &[s, table])?, out.out.as_deref())
}

#[derive(Serialize)]
struct StageRow {
    label: String,
    service_cycles: u64,
    units_per_frame: u64,
    frame_cycles: u64,
    capacity: Option<u64>,
    max_occupancy: u64,
    blocked_cycles: u64,
}

#[derive(Serialize)]
struct PipelineDoc {
    frames: u64,
    granularity: Granularity,
    makespan: u64,
    average_latency: f64,
    analytical_makespan: u64,
    gap_cycles: i64,
    gap_relative: f64,
    backpressure: bool,
    stages: Vec<StageRow>,
}

fn pipeline(
    args: &ConfigArgs,
    frames: u64,
    granularity: Granularity,
    capacity: Option<u64>,
    sized: bool,
    trace_path: Option<&Path>,
    out: &OutputArgs,
) -> Result<(), CliError> {
    let config = load_config(args)?;
    let mut stages = stages_from_config(&config, granularity, capacity)?;
    if stages.is_empty() {
        return Err(CliError::new("config", "no convolution or pooling layers to pipeline"));
    }
    if sized {
        let caps = size_fifos(&stages, frames)?;
        for (s, c) in stages.iter_mut().zip(caps) {
            s.capacity = Some(c);
        }
        stages[0].capacity = None;
    }
    let trace = simulate(&stages, frames)?;
    let gap = compare_to_model(&trace, &stages)?;

    if let Some(path) = trace_path {
        let mut t = Table::new(&["frame", "stage", "start", "finish", "occupancy"]);
        for (f, spans) in trace.spans.iter().enumerate() {
            for (k, s) in spans.iter().enumerate() {
                t.row(vec![
                    f.to_string(),
                    stages[k].label.clone(),
                    s.start.to_string(),
                    s.finish.to_string(),
                    trace.max_occupancy[k].to_string(),
                ]);
            }
        }
        emit(&render(crate::output::Format::Csv, &(), &[t])?, Some(path))?;
    }

    let rows: Vec<StageRow> = stages
        .iter()
        .enumerate()
        .map(|(k, s)| StageRow {
            label: s.label.clone(),
            service_cycles: s.service_cycles,
            units_per_frame: s.units_per_frame(),
            frame_cycles: s.frame_cycles(),
            capacity: if k == 0 { None } else { s.capacity },
            max_occupancy: trace.max_occupancy[k],
            blocked_cycles: trace.blocked_cycles[k],
        })
        .collect();
    let doc = PipelineDoc {
        frames,
        granularity,
        makespan: trace.makespan,
        average_latency: round6(trace.average_latency()),
        analytical_makespan: gap.analytical,
        gap_cycles: gap.absolute,
        gap_relative: round6(gap.relative),
        backpressure: gap.backpressure,
        stages: rows,
    };
    let mut s = Table::new(&[
        "frames",
        "granularity",
        "makespan",
        "average_latency",
        "analytical_makespan",
        "gap_cycles",
        "gap_relative",
        "backpressure",
    ]);
    s.row(vec![
        frames.to_string(),
        format!("{granularity:?}").to_lowercase(),
        doc.makespan.to_string(),
        fixed(doc.average_latency),
        doc.analytical_makespan.to_string(),
        doc.gap_cycles.to_string(),
        fixed(doc.gap_relative),
        doc.backpressure.to_string(),
    ]);
    let mut table = Table::new(&[
        "stage",
        "service_cycles",
        "units_per_frame",
        "frame_cycles",
        "capacity",
        "max_occupancy",
        "blocked_cycles",
    ]);
    for r in &doc.stages {
        table.row(vec![
            r.label.clone(),
            r.service_cycles.to_string(),
            r.units_per_frame.to_string(),
            r.frame_cycles.to_string(),
            r.capacity.map_or("inf".into(), |c| c.to_string()),
            r.max_occupancy.to_string(),
            r.blocked_cycles.to_string(),
        ]);
    }
    emit(&render(out.format, &doc, &[s, table])?, out.out.as_deref())
}

#[derive(Serialize)]
struct EncodeDoc {
    height: usize,
    width: usize,
    channels: usize,
    events: u32,
    event_width: u64,
    payload_bits: u64,
    dense_bits: u64,
    compression_ratio: Option<f64>,
    roundtrip: bool,
}

fn encode(
    args: &ConfigArgs,
    weights: &Path,
    images: &Path,
    index: usize,
    timestep: usize,
    stream_path: Option<&Path>,
    out: &OutputArgs,
) -> Result<(), CliError> {
    let config = load_config(args)?;
    let bound = read_weights(weights, &config)?;
    let config = bound.config;
    let imgs = read_idx(images)?;
    check_images(&config, &imgs)?;
    if index >= imgs.len() {
        return Err(CliError::new("shape", format!("image {index} out of range ({} images)", imgs.len())));
    }
    if timestep >= config.timesteps {
        return Err(CliError::new("shape", format!("timestep {timestep} out of range (T = {})", config.timesteps)));
    }
    let encoder = config.encoder.as_ref().expect("image configs carry an encoder");
    let enc_weights = bound.encoder.as_ref().expect("bound alongside the encoder");
    let spikes = encode_input(&image_of(&config, &imgs, index)?, encoder, enc_weights, config.timesteps)?;
    let frame = spikes.frame(timestep);
    let stream = encode_events(frame)?;
    let roundtrip = decode_events(&stream)? == *frame;
    if let Some(p) = stream_path {
        fs::write(p, stream.to_bytes()).map_err(|e| CliError::io(p, e))?;
    }
    let (h, w, c) = frame.dims();
    let ratio = stisnn::codec::compression_ratio(frame).map(|r| round6(*r.numer() as f64 / *r.denom() as f64));
    let doc = EncodeDoc {
        height: h,
        width: w,
        channels: c,
        events: stream.event_count(),
        event_width: stream.event_width(),
        payload_bits: stream.payload_bits(),
        dense_bits: (h * w * c) as u64,
        compression_ratio: ratio,
        roundtrip,
    };
    let mut t = Table::new(&[
        "height",
        "width",
        "channels",
        "events",
        "event_width",
        "payload_bits",
        "dense_bits",
        "compression_ratio",
        "roundtrip",
    ]);
    t.row(vec![
        h.to_string(),
        w.to_string(),
        c.to_string(),
        doc.events.to_string(),
        doc.event_width.to_string(),
        doc.payload_bits.to_string(),
        doc.dense_bits.to_string(),
        ratio.map_or(String::new(), fixed),
        roundtrip.to_string(),
    ]);
    emit(&render(out.format, &doc, &[t])?, out.out.as_deref())
}

#[derive(Serialize)]
struct DataflowRow {
    layer: String,
    mode: LayerMode,
    os_input: u64,
    os_weight: u64,
    os_psum: u64,
    os_total: u64,
    ws_input: u64,
    ws_weight: u64,
    ws_psum: u64,
    ws_total: u64,
    ws_over_os: f64,
}

fn compare_dataflow(args: &ConfigArgs, out: &OutputArgs) -> Result<(), CliError> {
    let config = load_config(args)?;
    let t = config.timesteps as u64;
    let rows: Vec<DataflowRow> = config
        .conv_layers()?
        .into_iter()
        .map(|l| {
            let g = ConvGeometry { c_i: l.geometry.reduction_depth(), ..l.geometry };
            let (os, ws) = (access_counts_os(&g, t), access_counts_ws(&g, t));
            DataflowRow {
                layer: l.label,
                mode: l.spec.mode,
                os_input: os.input_reads,
                os_weight: os.weight_reads,
                os_psum: os.psum_accesses,
                os_total: os.total(),
                ws_input: ws.input_reads,
                ws_weight: ws.weight_reads,
                ws_psum: ws.psum_accesses,
                ws_total: ws.total(),
                ws_over_os: round6(ws.total() as f64 / os.total() as f64),
            }
        })
        .collect();
    let mut table = Table::new(&[
        "layer",
        "mode",
        "os_input",
        "os_weight",
        "os_psum",
        "os_total",
        "ws_input",
        "ws_weight",
        "ws_psum",
        "ws_total",
        "ws_over_os",
    ]);
    for r in &rows {
        table.row(vec![
            r.layer.clone(),
            r.mode.to_string(),
            r.os_input.to_string(),
            r.os_weight.to_string(),
            r.os_psum.to_string(),
            r.os_total.to_string(),
            r.ws_input.to_string(),
            r.ws_weight.to_string(),
            r.ws_psum.to_string(),
            r.ws_total.to_string(),
            fixed(r.ws_over_os),
        ]);
    }
    emit(&render(out.format, &rows, &[table])?, out.out.as_deref())
}

#[derive(Serialize)]
struct FactorRow {
    layer: String,
    c_o: u64,
    kernel_area: u64,
    factor: u64,
    pes: u64,
    latency_before: u64,
    latency_after: u64,
}

#[derive(Serialize)]
struct SearchDoc {
    budget: u64,
    pes_used: u64,
    bottleneck_before: u64,
    bottleneck_after: u64,
    speedup: f64,
    layers: Vec<FactorRow>,
}

fn search_parallel(args: &ConfigArgs, budget: u64, out: &OutputArgs) -> Result<(), CliError> {
    let config = load_config(args)?;
    let convs = config.conv_layers()?;
    let geoms: Vec<ConvGeometry> = convs.iter().map(|l| l.geometry).collect();
    let lp = config.latency;
    let factors = best_parallel_factors(&geoms, &lp, budget)?;
    let layers: Vec<FactorRow> = convs
        .iter()
        .zip(&factors)
        .map(|(l, &p)| FactorRow {
            layer: l.label.clone(),
            c_o: l.geometry.c_o,
            kernel_area: l.geometry.kernel_area(),
            factor: p,
            pes: p * l.geometry.kernel_area(),
            latency_before: conv_latency(&l.geometry, &lp, 1),
            latency_after: conv_latency(&l.geometry, &lp, p),
        })
        .collect();
    let doc = SearchDoc {
        budget,
        pes_used: layers.iter().map(|l| l.pes).sum(),
        bottleneck_before: layers.iter().map(|l| l.latency_before).max().unwrap_or(0),
        bottleneck_after: layers.iter().map(|l| l.latency_after).max().unwrap_or(0),
        speedup: round6(bottleneck_speedup(&geoms, &lp, &factors)),
        layers,
    };
    let mut s = Table::new(&["budget", "pes_used", "bottleneck_before", "bottleneck_after", "speedup"]);
    s.row(vec![
        budget.to_string(),
        doc.pes_used.to_string(),
        doc.bottleneck_before.to_string(),
        doc.bottleneck_after.to_string(),
        fixed(doc.speedup),
    ]);
    let mut table = Table::new(&["layer", "c_o", "kernel_area", "factor", "pes", "latency_before", "latency_after"]);
    for l in &doc.layers {
        table.row(vec![
            l.layer.clone(),
            l.c_o.to_string(),
            l.kernel_area.to_string(),
            l.factor.to_string(),
            l.pes.to_string(),
            l.latency_before.to_string(),
            l.latency_after.to_string(),
        ]);
    }
    emit(&render(out.format, &doc, &[s, table])?, out.out.as_deref())
}

fn init_weights(args: &ConfigArgs, seed: u64, out: &Path) -> Result<(), CliError> {
    let config = load_config(args)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = config
        .all_layers()
        .iter()
        .map(|s| {
            let values = (0..s.weight_count()).map(|_| rng.random_range(-16..=16)).collect();
            let bias = (0..s.bias_count()).map(|_| rng.random_range(-4..=4)).collect();
            QuantizedWeights::new(s, values, bias)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let file = WeightFile::from_network(&config, &weights)?;
    save_weights(out, &file).map_err(|e| match e {
        stisnn::Error::Io(io) => CliError::io(out, io),
        other => other.into(),
    })
}
