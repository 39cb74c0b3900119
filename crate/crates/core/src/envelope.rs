//! Shared binary envelope for grids, profiles and checkpoints.
//!
//! Layout (all little-endian `f64`): an 8-value header
//! `[magic, version, dim, M, L, seed_lo, seed_hi, reserved]` followed by the
//! payload. The seed is split into two 32-bit halves so both are exact in
//! `f64`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{invalid, Result};

pub const MAGIC: f64 = 1_397_705_794.0; // "SOLB" as a u32
pub const VERSION: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeHeader {
    pub dim: usize,
    pub points: usize,
    pub len: f64,
    pub seed: u64,
    /// Free slot; checkpoints store the simulation time here.
    pub reserved: f64,
}

impl EnvelopeHeader {
    fn to_values(self) -> [f64; 8] {
        [
            MAGIC,
            VERSION,
            self.dim as f64,
            self.points as f64,
            self.len,
            (self.seed & 0xffff_ffff) as f64,
            (self.seed >> 32) as f64,
            self.reserved,
        ]
    }
}

pub fn write_envelope<W: Write>(mut w: W, header: EnvelopeHeader, payload: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * (8 + payload.len()));
    for v in header.to_values().iter().chain(payload) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_envelope<R: Read>(mut r: R) -> Result<(EnvelopeHeader, Vec<f64>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 64 || bytes.len() % 8 != 0 {
        return Err(invalid("truncated binary envelope"));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    if values[0] != MAGIC {
        return Err(invalid("bad envelope magic"));
    }
    if values[1] != VERSION {
        return Err(invalid(format!("unsupported envelope version {}", values[1])));
    }
    let header = EnvelopeHeader {
        dim: values[2] as usize,
        points: values[3] as usize,
        len: values[4],
        seed: (values[5] as u64) | ((values[6] as u64) << 32),
        reserved: values[7],
    };
    Ok((header, values[8..].to_vec()))
}

pub fn write_envelope_file(path: &Path, header: EnvelopeHeader, payload: &[f64]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_envelope(std::io::BufWriter::new(f), header, payload)
}

pub fn read_envelope_file(path: &Path) -> Result<(EnvelopeHeader, Vec<f64>)> {
    read_envelope(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip(seed in any::<u64>(), payload in proptest::collection::vec(-1e6f64..1e6, 0..64)) {
            let h = EnvelopeHeader { dim: 2, points: 64, len: 12.5, seed, reserved: 0.25 };
            let mut buf = Vec::new();
            write_envelope(&mut buf, h, &payload).unwrap();
            prop_assert_eq!(buf.len(), 8 * (8 + payload.len()));
            let (h2, p2) = read_envelope(buf.as_slice()).unwrap();
            prop_assert_eq!(h, h2);
            prop_assert_eq!(payload, p2);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_envelope(&[0u8; 64][..]).is_err());
        assert!(read_envelope(&[0u8; 10][..]).is_err());
    }
}
