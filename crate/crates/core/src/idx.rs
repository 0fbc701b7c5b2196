//! IDX files (the MNIST container): big-endian magic, big-endian u32 dims,
//! raw u8 payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn len(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bytes of item `i` along the first axis.
    pub fn item(&self, i: usize) -> &[u8] {
        let size: usize = self.dims[1..].iter().product();
        &self.data[i * size..(i + 1) * size]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let magic = 0x0800 | self.dims.len() as u32;
        let mut out = magic.to_be_bytes().to_vec();
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    let word = |i: usize| -> Result<usize> {
        bytes
            .get(i * 4..i * 4 + 4)
            .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")) as usize)
            .ok_or_else(|| Error::Idx("truncated header".into()))
    };
    let magic = word(0)? as u32;
    let rank = match magic {
        IMAGES_MAGIC => 3,
        LABELS_MAGIC => 1,
        m => return Err(Error::Idx(format!("bad magic {m:#010x}, expected unsigned-byte images or labels"))),
    };
    let dims = (1..=rank).map(word).collect::<Result<Vec<_>>>()?;
    let size = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::Idx("dimensions overflow".into()))?;
    let payload = &bytes[4 * (rank + 1)..];
    if payload.len() != size {
        return Err(Error::Idx(format!(
            "payload has {} bytes, header promises {size}",
            payload.len()
        )));
    }
    Ok(IdxArray {
        dims,
        data: payload.to_vec(),
    })
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    parse_idx(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_images_and_labels() {
        let images = IdxArray { dims: vec![3, 2, 2], data: (0..12).collect() };
        let back = parse_idx(&images.to_bytes()).unwrap();
        assert_eq!(back, images);
        assert_eq!(back.item(1), &[4, 5, 6, 7]);
        let labels = IdxArray { dims: vec![4], data: vec![0, 9, 3, 1] };
        assert_eq!(parse_idx(&labels.to_bytes()).unwrap(), labels);
    }

    #[test]
    fn fail_closed() {
        let bytes = IdxArray { dims: vec![2, 2, 2], data: vec![1; 8] }.to_bytes();
        for cut in 0..bytes.len() {
            assert!(parse_idx(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[3] = 0x02;
        assert!(matches!(parse_idx(&bad), Err(Error::Idx(m)) if m.contains("magic")));
        let mut long = bytes;
        long.push(0);
        assert!(parse_idx(&long).is_err());
    }
}
