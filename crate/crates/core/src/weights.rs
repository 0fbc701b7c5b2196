//! STIW weight files.
//!
//! ```text
//! "STIW" u16 version u16 layers
//! per layer:
//!   u8 mode  u16 C_i  u16 C_o  u8 K_h  u8 K_w  i32 V_th  i16 leak (8.8)
//!   i8 weights [c_o][c_i][k_h][k_w]   (depthwise: [c][k_h][k_w])
//!   i32 bias [c_o]
//! ```
//!
//! All little-endian. Records follow the layer order of the configuration,
//! encoder first, pooling layers included with no parameters. A channel
//! count of `0xFFFF` is followed by the real count as a u32, for heads
//! with more than 65534 inputs.

use std::fs;
use std::path::Path;

use crate::config::NetworkConfig;
use crate::dataflow::network::layer_label;
use crate::error::{Error, Result};
use crate::layer::{LayerMode, LayerSpec, Leak, QuantizedWeights};

pub const MAGIC: &[u8; 4] = b"STIW";
pub const VERSION: u16 = 1;
const WIDE: u16 = 0xFFFF;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerRecord {
    pub mode: LayerMode,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub threshold: i32,
    pub leak: Leak,
    pub values: Vec<i8>,
    pub bias: Vec<i32>,
}

impl LayerRecord {
    pub fn from_layer(spec: &LayerSpec, w: &QuantizedWeights) -> Result<Self> {
        w.check(spec)?;
        Ok(Self {
            mode: spec.mode,
            in_channels: spec.in_channels,
            out_channels: spec.out_channels,
            kernel_h: spec.kernel_h,
            kernel_w: spec.kernel_w,
            threshold: spec.neuron.threshold,
            leak: spec.neuron.leak,
            values: w.values().to_vec(),
            bias: w.bias().to_vec(),
        })
    }

    fn weight_count(&self) -> usize {
        let area = self.kernel_h * self.kernel_w;
        match self.mode {
            LayerMode::Pool => 0,
            LayerMode::Depthwise => self.out_channels * area,
            _ => self.out_channels * self.in_channels * area,
        }
    }

    fn bias_count(&self) -> usize {
        if self.mode == LayerMode::Pool {
            0
        } else {
            self.out_channels
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WeightFile {
    pub layers: Vec<LayerRecord>,
}

/// A configuration with thresholds and leaks taken from a weight file.
#[derive(Clone, Debug)]
pub struct BoundNetwork {
    pub config: NetworkConfig,
    pub encoder: Option<QuantizedWeights>,
    pub weights: Vec<QuantizedWeights>,
}

fn put_channels(out: &mut Vec<u8>, n: usize) -> Result<()> {
    if n < WIDE as usize {
        out.extend_from_slice(&(n as u16).to_le_bytes());
    } else {
        let n = u32::try_from(n).map_err(|_| Error::WeightFile(format!("{n} channels do not fit")))?;
        out.extend_from_slice(&WIDE.to_le_bytes());
        out.extend_from_slice(&n.to_le_bytes());
    }
    Ok(())
}

fn put_u8(out: &mut Vec<u8>, n: usize, what: &str) -> Result<()> {
    out.push(u8::try_from(n).map_err(|_| Error::WeightFile(format!("{what} {n} exceeds 255")))?);
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::WeightFile(format!("truncated at byte {} (needed {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn channels(&mut self) -> Result<usize> {
        match self.u16()? {
            WIDE => Ok(u32::from_le_bytes(self.array()?) as usize),
            n => Ok(n as usize),
        }
    }
}

impl WeightFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let count = u16::try_from(self.layers.len())
            .map_err(|_| Error::WeightFile("more than 65535 layers".into()))?;
        out.extend_from_slice(&count.to_le_bytes());
        for (i, r) in self.layers.iter().enumerate() {
            if r.values.len() != r.weight_count() || r.bias.len() != r.bias_count() {
                return Err(Error::WeightFile(format!("record {i}: parameter count does not match its header")));
            }
            out.push(r.mode.code());
            put_channels(&mut out, r.in_channels)?;
            put_channels(&mut out, r.out_channels)?;
            put_u8(&mut out, r.kernel_h, "kernel height")?;
            put_u8(&mut out, r.kernel_w, "kernel width")?;
            out.extend_from_slice(&r.threshold.to_le_bytes());
            out.extend_from_slice(&r.leak.0.to_le_bytes());
            out.extend(r.values.iter().map(|&v| v as u8));
            for b in &r.bias {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).ok() != Some(MAGIC.as_slice()) {
            return Err(Error::WeightFile("bad magic, expected \"STIW\"".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::WeightFile(format!("unsupported version {version}")));
        }
        let count = r.u16()?;
        let mut layers = Vec::with_capacity(count as usize);
        for i in 0..count {
            let code = r.u8()?;
            let mode = LayerMode::from_code(code)
                .ok_or_else(|| Error::WeightFile(format!("record {i}: unknown mode {code}")))?;
            let mut rec = LayerRecord {
                mode,
                in_channels: r.channels()?,
                out_channels: r.channels()?,
                kernel_h: r.u8()? as usize,
                kernel_w: r.u8()? as usize,
                threshold: i32::from_le_bytes(r.array()?),
                leak: Leak(i16::from_le_bytes(r.array()?)),
                values: Vec::new(),
                bias: Vec::new(),
            };
            rec.values = r.take(rec.weight_count())?.iter().map(|&b| b as i8).collect();
            rec.bias = r
                .take(rec.bias_count() * 4)?
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().expect("chunk of 4")))
                .collect();
            layers.push(rec);
        }
        if r.pos != bytes.len() {
            return Err(Error::WeightFile(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { layers })
    }

    /// Records for every layer of `config`; `weights` covers the encoder
    /// (if any) followed by the accelerator layers.
    pub fn from_network(config: &NetworkConfig, weights: &[QuantizedWeights]) -> Result<Self> {
        let specs = config.all_layers();
        if specs.len() != weights.len() {
            return Err(Error::WeightFile(format!(
                "{} weight sets for {} layers",
                weights.len(),
                specs.len()
            )));
        }
        let layers = specs
            .iter()
            .zip(weights)
            .map(|(s, w)| LayerRecord::from_layer(s, w))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    /// Checks the records against `config` and applies their thresholds and leaks.
    pub fn bind(&self, config: &NetworkConfig) -> Result<BoundNetwork> {
        let has_encoder = config.encoder.is_some();
        let expected = config.layers.len() + usize::from(has_encoder);
        if self.layers.len() != expected {
            return Err(Error::WeightFile(format!(
                "layer count mismatch: file has {}, configuration has {expected}",
                self.layers.len()
            )));
        }
        let mut config = config.clone();
        let mut bound = Vec::with_capacity(expected);
        let specs = config.encoder.iter_mut().chain(config.layers.iter_mut());
        for (i, (spec, rec)) in specs.zip(&self.layers).enumerate() {
            let label = match (has_encoder, i) {
                (true, 0) => "encoder".to_string(),
                (true, _) => layer_label(i - 1, spec),
                (false, _) => layer_label(i, spec),
            };
            let header = (rec.mode, rec.in_channels, rec.out_channels, rec.kernel_h, rec.kernel_w);
            let want = (spec.mode, spec.in_channels, spec.out_channels, spec.kernel_h, spec.kernel_w);
            if header != want {
                return Err(Error::WeightFile(format!(
                    "record {i} ({label}): file has {} {}->{} {}x{}, configuration has {} {}->{} {}x{}",
                    header.0, header.1, header.2, header.3, header.4, want.0, want.1, want.2, want.3, want.4
                )));
            }
            if spec.mode.is_conv() {
                spec.neuron.threshold = rec.threshold;
                spec.neuron.leak = rec.leak;
                spec.validate().map_err(|e| Error::WeightFile(format!("record {i} ({label}): {e}")))?;
            }
            bound.push(QuantizedWeights::new(spec, rec.values.clone(), rec.bias.clone())?);
        }
        let encoder = if has_encoder { Some(bound.remove(0)) } else { None };
        Ok(BoundNetwork {
            config,
            encoder,
            weights: bound,
        })
    }
}

pub fn save_weights(path: impl AsRef<Path>, file: &WeightFile) -> Result<()> {
    fs::write(path, file.to_bytes()?)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightFile> {
    WeightFile::from_bytes(&fs::read(path)?)
}
