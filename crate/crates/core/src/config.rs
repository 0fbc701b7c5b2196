//! Network configuration: a JSON document or the compact architecture string.
//!
//! Compact grammar, as used in model tables:
//!
//! ```text
//! arch   := dims " " token ("-" token)*
//! dims   := H "x" W            image input, 1 channel
//!         | H "x" W ":" C      image input, C channels
//!         | H "x" W "x" C      spike input, C channels
//! token  := N "c" K            standard conv, N outputs, K×K kernel
//!         | N "dwc" K          depthwise conv over N channels
//!         | N "dwc" K "/" M "c1"   depthwise then pointwise to M channels
//!         | "p" K              OR pooling, K×K window
//!         | "fc" [N]           classification head, N classes (default 10)
//! ```
//!
//! With an image input the first token must be a standard convolution; it is
//! the spike encoder and runs on raw pixel intensities outside the
//! accelerator. All convolutions use stride 1 and "same" zero padding.
//!
//! The JSON form accepts either `"arch"` (plus defaults) or explicit
//! `"input"`/`"layers"`.

use serde::Deserialize;

use crate::cost::{ConvGeometry, EnergyConstants, LatencyParams};
use crate::dataflow::network::{layer_label, propagate_shapes, Dims};
use crate::error::{Error, Result};
use crate::layer::{LayerMode, LayerSpec, Leak, NeuronParams, DEFAULT_VMEM_WIDTH};

pub const DEFAULT_THRESHOLD: i32 = 64;
pub const DEFAULT_CLASSES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Image,
    Spikes,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
pub struct InputSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub kind: InputKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub input: InputSpec,
    /// Encoding convolution applied to raw pixels; only for image inputs.
    pub encoder: Option<LayerSpec>,
    /// Accelerator layers, operating on spikes.
    pub layers: Vec<LayerSpec>,
    pub timesteps: usize,
    pub latency: LatencyParams,
    pub energy: EnergyConstants,
}

/// A convolution layer of the accelerator with its resolved geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub index: usize,
    pub label: String,
    pub spec: LayerSpec,
    pub input: Dims,
    pub geometry: ConvGeometry,
}

impl NetworkConfig {
    /// Dims of the spike tensor entering the first accelerator layer.
    pub fn spike_input_dims(&self) -> Result<Dims> {
        let (h, w, c) = (self.input.height, self.input.width, self.input.channels);
        match &self.encoder {
            None => Ok((h, w, c)),
            Some(enc) => {
                let shapes = propagate_shapes((h, w, c), std::slice::from_ref(enc)).map_err(
                    |e| match e {
                        Error::Config { reason, .. } => Error::Config {
                            index: 0,
                            label: "encoder".into(),
                            reason,
                        },
                        other => other,
                    },
                )?;
                Ok(shapes[0])
            }
        }
    }

    /// Output dims of every accelerator layer.
    pub fn shapes(&self) -> Result<Vec<Dims>> {
        propagate_shapes(self.spike_input_dims()?, &self.layers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.timesteps == 0 {
            return Err(Error::Degenerate("timesteps must be at least 1".into()));
        }
        if self.encoder.is_some() != (self.input.kind == InputKind::Image) {
            return Err(Error::Degenerate(
                "an encoder layer is required for image inputs and only for them".into(),
            ));
        }
        if let Some(enc) = &self.encoder {
            if enc.mode != LayerMode::Standard {
                return Err(Error::Config {
                    index: 0,
                    label: "encoder".into(),
                    reason: "the encoder must be a standard convolution".into(),
                });
            }
        }
        self.shapes().map(|_| ())
    }

    pub fn conv_layers(&self) -> Result<Vec<ConvLayer>> {
        let mut dims = self.spike_input_dims()?;
        let shapes = self.shapes()?;
        let mut out = Vec::new();
        for (i, (spec, &next)) in self.layers.iter().zip(&shapes).enumerate() {
            if spec.mode.is_conv() {
                out.push(ConvLayer {
                    index: i,
                    label: layer_label(i, spec),
                    spec: spec.clone(),
                    input: dims,
                    geometry: ConvGeometry::of(spec, dims)?,
                });
            }
            dims = next;
        }
        Ok(out)
    }

    pub fn conv_geometries(&self) -> Result<Vec<ConvGeometry>> {
        Ok(self.conv_layers()?.into_iter().map(|l| l.geometry).collect())
    }

    pub fn parallel_factors(&self) -> Vec<u64> {
        self.layers
            .iter()
            .filter(|l| l.mode.is_conv())
            .map(|l| l.parallel_factor as u64)
            .collect()
    }

    /// Assigns factors to the convolution layers in order.
    pub fn set_parallel_factors(&mut self, factors: &[u64]) -> Result<()> {
        let convs: Vec<&mut LayerSpec> =
            self.layers.iter_mut().filter(|l| l.mode.is_conv()).collect();
        if convs.len() != factors.len() {
            return Err(Error::Degenerate(format!(
                "{} parallel factors for {} convolution layers",
                factors.len(),
                convs.len()
            )));
        }
        for (spec, &p) in convs.into_iter().zip(factors) {
            spec.parallel_factor = p as usize;
        }
        self.validate()
    }

    /// Layers in weight-file order: the encoder (if any) first.
    pub fn all_layers(&self) -> Vec<LayerSpec> {
        self.encoder.iter().chain(&self.layers).cloned().collect()
    }
}

#[derive(Clone, Copy, Debug)]
struct Defaults {
    threshold: i32,
    leak: Leak,
    vmem_width: u8,
}

impl Defaults {
    fn neuron(&self) -> NeuronParams {
        NeuronParams {
            threshold: self.threshold,
            leak: self.leak,
            vmem_width: self.vmem_width,
        }
    }
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            leak: Leak::ONE,
            vmem_width: DEFAULT_VMEM_WIDTH,
        }
    }
}

/// Parses either a JSON document or a compact architecture string.
pub fn parse_config(text: &str) -> Result<NetworkConfig> {
    let text = text.trim();
    if text.starts_with('{') {
        parse_json(text)
    } else {
        parse_arch(text, 1, Defaults::default())
    }
}

/// Parses a compact architecture string with default neuron settings.
pub fn parse_arch_string(arch: &str, timesteps: usize) -> Result<NetworkConfig> {
    parse_arch(arch, timesteps, Defaults::default())
}

fn parse_usize(s: &str, token: &str) -> Result<usize> {
    s.parse::<usize>()
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| Error::parse(token, format!("expected a positive integer, found {s:?}")))
}

fn parse_dims(s: &str) -> Result<InputSpec> {
    let norm = s.replace('×', "x");
    let (hw, image_channels) = match norm.split_once(':') {
        Some((hw, c)) => (hw.to_string(), Some(parse_usize(c, s)?)),
        None => (norm.clone(), None),
    };
    let parts: Vec<&str> = hw.split('x').collect();
    let spec = match (parts.as_slice(), image_channels) {
        ([h, w], c) => InputSpec {
            height: parse_usize(h, s)?,
            width: parse_usize(w, s)?,
            channels: c.unwrap_or(1),
            kind: InputKind::Image,
        },
        ([h, w, c], None) => InputSpec {
            height: parse_usize(h, s)?,
            width: parse_usize(w, s)?,
            channels: parse_usize(c, s)?,
            kind: InputKind::Spikes,
        },
        _ => return Err(Error::parse(s, "expected HxW, HxW:C or HxWxC")),
    };
    Ok(spec)
}

/// Layer kinds produced by the token grammar, before channel resolution.
enum Token {
    Conv { out: usize, kernel: usize },
    Depthwise { channels: usize, kernel: usize },
    Pointwise { out: usize },
    Pool { window: usize },
    Fc { classes: usize },
}

fn parse_token(tok: &str) -> Result<Vec<Token>> {
    if let Some((dw, pw)) = tok.split_once('/') {
        let first = parse_token(dw)?;
        if !matches!(first.as_slice(), [Token::Depthwise { .. }]) {
            return Err(Error::parse(tok, "'/' must follow a depthwise token"));
        }
        let second = match parse_token(pw)?.as_slice() {
            [Token::Conv { out, kernel: 1 }] => Token::Pointwise { out: *out },
            _ => return Err(Error::parse(tok, "'/' must be followed by a 1x1 conv (e.g. 32c1)")),
        };
        return Ok(first.into_iter().chain([second]).collect());
    }
    if let Some(rest) = tok.strip_prefix("fc") {
        let classes = if rest.is_empty() {
            DEFAULT_CLASSES
        } else {
            parse_usize(rest, tok)?
        };
        return Ok(vec![Token::Fc { classes }]);
    }
    if let Some(rest) = tok.strip_prefix('p') {
        return Ok(vec![Token::Pool {
            window: parse_usize(rest, tok)?,
        }]);
    }
    if let Some((n, k)) = tok.split_once("dwc") {
        return Ok(vec![Token::Depthwise {
            channels: parse_usize(n, tok)?,
            kernel: parse_usize(k, tok)?,
        }]);
    }
    if let Some((n, k)) = tok.split_once('c') {
        return Ok(vec![Token::Conv {
            out: parse_usize(n, tok)?,
            kernel: parse_usize(k, tok)?,
        }]);
    }
    Err(Error::parse(tok, "unknown layer token"))
}

fn parse_arch(text: &str, timesteps: usize, defaults: Defaults) -> Result<NetworkConfig> {
    let mut parts = text.split_whitespace();
    let dims = parts.next().ok_or_else(|| Error::parse(text, "empty architecture"))?;
    let input = parse_dims(dims)?;
    let body: Vec<&str> = parts.collect();
    if body.len() != 1 {
        return Err(Error::parse(text, "expected dims followed by one '-'-joined layer list"));
    }
    let mut tokens = Vec::new();
    for tok in body[0].split('-') {
        tokens.extend(parse_token(tok)?);
    }
    build(input, tokens, timesteps, defaults)
}

fn build(input: InputSpec, tokens: Vec<Token>, timesteps: usize, d: Defaults) -> Result<NetworkConfig> {
    let mut tokens = tokens.into_iter().peekable();
    let mut channels = input.channels;
    let (mut h, mut w) = (input.height, input.width);
    let encoder = if input.kind == InputKind::Image {
        match tokens.next() {
            Some(Token::Conv { out, kernel }) => {
                let spec = LayerSpec::standard(channels, out, kernel, d.threshold).with_neuron(d.neuron());
                channels = out;
                (h, w) = spec.output_dims(h, w)?;
                Some(spec)
            }
            _ => {
                return Err(Error::parse(
                    "dims",
                    "image inputs must start with a standard convolution (the encoder)",
                ))
            }
        }
    } else {
        None
    };
    let mut layers = Vec::new();
    for tok in tokens {
        let index = layers.len();
        let spec = match tok {
            Token::Conv { out, kernel } => LayerSpec::standard(channels, out, kernel, d.threshold),
            Token::Depthwise { channels: n, kernel } => {
                if n != channels {
                    return Err(Error::Config {
                        index,
                        label: format!("dw{index}"),
                        reason: format!("depthwise over {n} channels, previous layer yields {channels}"),
                    });
                }
                LayerSpec::depthwise(n, kernel, d.threshold)
            }
            Token::Pointwise { out } => LayerSpec::pointwise(channels, out, d.threshold),
            Token::Pool { window } => LayerSpec::pool(channels, window),
            Token::Fc { classes } => LayerSpec::fully_connected(h * w * channels, classes),
        };
        let spec = if spec.mode.is_conv() {
            spec.with_neuron(d.neuron())
        } else {
            spec
        };
        let (oh, ow) = spec.output_dims(h, w).map_err(|e| Error::Config {
            index,
            label: layer_label(index, &spec),
            reason: e.to_string(),
        })?;
        (h, w, channels) = (oh, ow, spec.out_channels);
        layers.push(spec);
    }
    let config = NetworkConfig {
        input,
        encoder,
        layers,
        timesteps,
        latency: LatencyParams::default(),
        energy: EnergyConstants::default(),
    };
    config.validate()?;
    Ok(config)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    arch: Option<String>,
    input: Option<InputSpec>,
    encoder: Option<LayerDoc>,
    layers: Option<Vec<LayerDoc>>,
    #[serde(default = "one")]
    timesteps: usize,
    threshold: Option<i32>,
    leak: Option<f64>,
    vmem_width: Option<u8>,
    parallel_factors: Option<Vec<u64>>,
    latency: Option<LatencyParams>,
    energy: Option<EnergyConstants>,
}

fn one() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    mode: LayerMode,
    out_channels: Option<usize>,
    classes: Option<usize>,
    kernel: Option<usize>,
    window: Option<usize>,
    padding: Option<usize>,
    threshold: Option<i32>,
    leak: Option<f64>,
    vmem_width: Option<u8>,
    parallel_factor: Option<usize>,
}

impl LayerDoc {
    fn resolve(&self, index: usize, dims: Dims, d: &Defaults) -> Result<LayerSpec> {
        let (h, w, c) = dims;
        let missing = |field: &str| Error::Config {
            index,
            label: format!("{}{index}", self.mode),
            reason: format!("missing field {field:?}"),
        };
        let mut spec = match self.mode {
            LayerMode::Standard => LayerSpec::standard(
                c,
                self.out_channels.ok_or_else(|| missing("out_channels"))?,
                self.kernel.unwrap_or(3),
                d.threshold,
            ),
            LayerMode::Depthwise => LayerSpec::depthwise(c, self.kernel.unwrap_or(3), d.threshold),
            LayerMode::Pointwise => LayerSpec::pointwise(
                c,
                self.out_channels.ok_or_else(|| missing("out_channels"))?,
                d.threshold,
            ),
            LayerMode::Pool => LayerSpec::pool(c, self.window.or(self.kernel).unwrap_or(2)),
            LayerMode::FullyConnected => {
                LayerSpec::fully_connected(h * w * c, self.classes.unwrap_or(DEFAULT_CLASSES))
            }
        };
        if spec.mode.is_conv() {
            spec.neuron = NeuronParams {
                threshold: self.threshold.unwrap_or(d.threshold),
                leak: self.leak.map(Leak::from_f64).unwrap_or(d.leak),
                vmem_width: self.vmem_width.unwrap_or(d.vmem_width),
            };
            if let Some(p) = self.padding {
                spec.padding = p;
            }
            if let Some(p) = self.parallel_factor {
                spec.parallel_factor = p;
            }
        }
        Ok(spec)
    }
}

fn parse_json(text: &str) -> Result<NetworkConfig> {
    let doc: ConfigDoc =
        serde_json::from_str(text).map_err(|e| Error::parse("json", e.to_string()))?;
    let mut d = Defaults::default();
    if let Some(t) = doc.threshold {
        d.threshold = t;
    }
    if let Some(l) = doc.leak {
        d.leak = Leak::from_f64(l);
    }
    if let Some(v) = doc.vmem_width {
        d.vmem_width = v;
    }
    let mut config = match (&doc.arch, &doc.layers) {
        (Some(arch), None) => parse_arch(arch, doc.timesteps, d)?,
        (None, Some(layers)) => {
            let input = doc
                .input
                .ok_or_else(|| Error::parse("json", "explicit layers need an \"input\" block"))?;
            let mut dims = (input.height, input.width, input.channels);
            let encoder = match &doc.encoder {
                Some(e) => {
                    let spec = e.resolve(0, dims, &d)?;
                    let (oh, ow) = spec.output_dims(dims.0, dims.1)?;
                    dims = (oh, ow, spec.out_channels);
                    Some(spec)
                }
                None => None,
            };
            let mut specs = Vec::new();
            for (i, l) in layers.iter().enumerate() {
                let spec = l.resolve(i, dims, &d)?;
                let (oh, ow) = spec.output_dims(dims.0, dims.1).map_err(|e| Error::Config {
                    index: i,
                    label: layer_label(i, &spec),
                    reason: e.to_string(),
                })?;
                dims = (oh, ow, spec.out_channels);
                specs.push(spec);
            }
            NetworkConfig {
                input,
                encoder,
                layers: specs,
                timesteps: doc.timesteps,
                latency: LatencyParams::default(),
                energy: EnergyConstants::default(),
            }
        }
        _ => {
            return Err(Error::parse(
                "json",
                "exactly one of \"arch\" or \"layers\" must be given",
            ))
        }
    };
    config.timesteps = doc.timesteps;
    if let Some(lp) = doc.latency {
        config.latency = lp;
    }
    if let Some(ec) = doc.energy {
        if !ec.is_valid() {
            return Err(Error::parse("energy", "energy constants must be finite and non-negative"));
        }
        config.energy = ec;
    }
    if let Some(f) = &doc.parallel_factors {
        config.set_parallel_factors(f)?;
    }
    config.validate()?;
    Ok(config)
}
