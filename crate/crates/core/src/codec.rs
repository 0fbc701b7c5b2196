//! Sparse inter-layer spike events.
//!
//! Only pixels whose spike vector is nonzero are transmitted, in raster order.
//! Each event is a `⌈log2 H⌉ + ⌈log2 W⌉ + C` bit word holding, from the most
//! significant end, the row, the column and the channel mask (channel 0 in
//! the word's bit 0). Event `i` occupies stream bits `[i·w, (i+1)·w)`, and
//! stream bit `n` lives in byte `n / 8` at bit position `n % 8`; in other words
//! the payload is the little-endian encoding of the concatenated words.
//!
//! Container layout (all integers little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `STIE` |
//! | 1 | version (1) |
//! | 2 | H |
//! | 2 | W |
//! | 2 | C |
//! | 4 | event count |
//! | ... | packed payload, zero-padded to a byte boundary |

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::spike::{SpikeFrame, SpikeVector};

pub const MAGIC: &[u8; 4] = b"STIE";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 15;

/// `⌈log2 n⌉`, with one value needing zero bits.
pub fn address_bits(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

pub fn event_width(height: usize, width: usize, channels: usize) -> u64 {
    u64::from(address_bits(height)) + u64::from(address_bits(width)) + channels as u64
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpikeEvent {
    pub y: usize,
    pub x: usize,
    pub mask: SpikeVector,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventStream {
    height: u16,
    width: u16,
    channels: u16,
    count: u32,
    payload: Vec<u8>,
}

impl EventStream {
    pub fn dims(&self) -> (usize, usize, usize) {
        (
            usize::from(self.height),
            usize::from(self.width),
            usize::from(self.channels),
        )
    }

    pub fn event_count(&self) -> u32 {
        self.count
    }

    pub fn event_width(&self) -> u64 {
        let (h, w, c) = self.dims();
        event_width(h, w, c)
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Meaningful payload bits, excluding byte padding.
    pub fn payload_bits(&self) -> u64 {
        u64::from(self.count) * self.event_width()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.channels.to_le_bytes());
        out.extend_from_slice(&self.count.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses a container. Payload contents are checked by [`decode_events`].
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptStream(m.to_string());
        if bytes.len() < HEADER_LEN {
            return Err(corrupt("truncated header"));
        }
        if &bytes[0..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        if bytes[4] != VERSION {
            return Err(Error::CorruptStream(format!("unsupported version {}", bytes[4])));
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let stream = Self {
            height: u16_at(5),
            width: u16_at(7),
            channels: u16_at(9),
            count: u32::from_le_bytes([bytes[11], bytes[12], bytes[13], bytes[14]]),
            payload: bytes[HEADER_LEN..].to_vec(),
        };
        if stream.height == 0 || stream.width == 0 || stream.channels == 0 {
            return Err(corrupt("zero dimension in header"));
        }
        Ok(stream)
    }

    /// Builds a stream from raw parts without validating the payload.
    pub fn from_parts(height: u16, width: u16, channels: u16, count: u32, payload: Vec<u8>) -> Self {
        Self {
            height,
            width,
            channels,
            count,
            payload,
        }
    }

    /// Decodes and validates every event.
    pub fn events(&self) -> Result<Vec<SpikeEvent>> {
        let (h, w, c) = self.dims();
        let (yb, xb) = (address_bits(h) as usize, address_bits(w) as usize);
        let width = self.event_width() as usize;
        let total_bits = (self.count as usize)
            .checked_mul(width)
            .ok_or_else(|| Error::CorruptStream("event count overflows".into()))?;
        let need = total_bits.div_ceil(8);
        if self.payload.len() < need {
            return Err(Error::CorruptStream(format!(
                "truncated payload: {} bytes for {} events of {width} bits",
                self.payload.len(),
                self.count
            )));
        }
        if self.payload.len() > need {
            return Err(Error::CorruptStream("trailing bytes after payload".into()));
        }
        let mut reader = BitReader::new(&self.payload);
        let mut events = Vec::with_capacity(self.count as usize);
        let mut last: Option<usize> = None;
        for i in 0..self.count {
            let mut mask = SpikeVector::zeros(c);
            for ch in 0..c {
                if reader.bit() {
                    mask.set(ch, true);
                }
            }
            let x = reader.bits(xb);
            let y = reader.bits(yb);
            if y >= h || x >= w {
                return Err(Error::CorruptStream(format!(
                    "event {i} addresses ({y}, {x}) outside {h}x{w}"
                )));
            }
            if !mask.any() {
                return Err(Error::CorruptStream(format!("event {i} has an empty mask")));
            }
            let raster = y * w + x;
            if last.is_some_and(|l| raster <= l) {
                return Err(Error::CorruptStream(format!("event {i} breaks raster order")));
            }
            last = Some(raster);
            events.push(SpikeEvent { y, x, mask });
        }
        if (total_bits..need * 8).any(|_| reader.bit()) {
            return Err(Error::CorruptStream("nonzero padding bits".into()));
        }
        Ok(events)
    }
}

struct BitWriter {
    bytes: Vec<u8>,
    bits: usize,
}

impl BitWriter {
    fn push(&mut self, bit: bool) {
        if self.bits.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().expect("byte pushed above") |= 1 << (self.bits % 8);
        }
        self.bits += 1;
    }

    /// `n` low bits of `value`, least significant first.
    fn push_bits(&mut self, value: usize, n: usize) {
        for i in 0..n {
            self.push((value >> i) & 1 == 1);
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn bit(&mut self) -> bool {
        let b = (self.bytes[self.pos / 8] >> (self.pos % 8)) & 1 == 1;
        self.pos += 1;
        b
    }

    fn bits(&mut self, n: usize) -> usize {
        (0..n).fold(0, |acc, i| acc | (usize::from(self.bit()) << i))
    }
}

pub fn encode_events(frame: &SpikeFrame) -> Result<EventStream> {
    let (h, w, c) = frame.dims();
    let dim = |v: usize, name: &str| {
        u16::try_from(v)
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::shape(format!("{name} = {v} does not fit the event header")))
    };
    let (hh, ww, cc) = (dim(h, "H")?, dim(w, "W")?, dim(c, "C")?);
    let (yb, xb) = (address_bits(h) as usize, address_bits(w) as usize);
    let mut writer = BitWriter {
        bytes: Vec::new(),
        bits: 0,
    };
    let mut count = 0u32;
    for y in 0..h {
        for x in 0..w {
            let v = frame.pixel(y, x);
            if !v.any() {
                continue;
            }
            for ch in 0..c {
                writer.push(v.get(ch));
            }
            writer.push_bits(x, xb);
            writer.push_bits(y, yb);
            count += 1;
        }
    }
    Ok(EventStream {
        height: hh,
        width: ww,
        channels: cc,
        count,
        payload: writer.bytes,
    })
}

pub fn decode_events(stream: &EventStream) -> Result<SpikeFrame> {
    let (h, w, c) = stream.dims();
    let mut frame = SpikeFrame::zeros(h, w, c);
    for e in stream.events()? {
        *frame.pixel_mut(e.y, e.x) = e.mask;
    }
    Ok(frame)
}

/// Dense bits over encoded payload bits; `None` when nothing would be sent.
pub fn compression_ratio(frame: &SpikeFrame) -> Option<Ratio<u64>> {
    let (h, w, c) = frame.dims();
    let events = frame.nonzero_pixels() as u64;
    if events == 0 {
        return None;
    }
    Some(Ratio::new(
        (h * w * c) as u64,
        events * event_width(h, w, c),
    ))
}
