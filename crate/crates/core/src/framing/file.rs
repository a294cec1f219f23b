//! Flat binary dump of per-beam superframe streams.
//!
//! ```text
//! offset  size  field
//!      0     8  magic "SF2SIM\0\0"
//!      8     4  version (u32)
//!     12     4  number of beams (u32)
//!     16     8  sosf_length (u64)
//!     24     8  pilot_spacing (u64)
//!     32     8  frames_per_superframe (u64)
//!     40     8  data_frame_length (u64)
//!     48     8  samples per beam (u64)
//!     56     8  reserved, zero
//! ```
//!
//! followed by each beam in turn as interleaved `re, im` f64 pairs. All
//! integers and floats are little-endian. Unstored samples of a sparse
//! stream are written as zero.

use std::fs;
use std::path::Path;

use super::stream::SymbolStream;
use super::superframe::SuperframeLayout;
use crate::error::{Error, Result};
use crate::linalg::{c64, C64};

pub const MAGIC: &[u8; 8] = b"SF2SIM\0\0";
pub const VERSION: u32 = 1;
pub const HEADER_LENGTH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SuperframeFile {
    pub layout: SuperframeLayout,
    pub beams: Vec<Vec<C64>>,
}

pub fn encode(layout: &SuperframeLayout, streams: &[SymbolStream]) -> Result<Vec<u8>> {
    let n = streams.first().map_or(0, SymbolStream::len);
    if let Some(bad) = streams.iter().find(|s| s.len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: bad.len(),
        });
    }
    let mut out = Vec::with_capacity(HEADER_LENGTH + streams.len() * n * 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(streams.len() as u32).to_le_bytes());
    for v in [
        layout.sosf_length,
        layout.pilot_spacing,
        layout.frames_per_superframe,
        layout.data_frame_length,
        n,
    ] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&[0u8; 8]);
    debug_assert_eq!(out.len(), HEADER_LENGTH);

    for s in streams {
        let mut pos = 0;
        for chunk in s.chunks() {
            out.resize(out.len() + (chunk.start - pos) * 16, 0);
            for v in &chunk.samples {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }
            pos = chunk.end();
        }
        out.resize(out.len() + (n - pos) * 16, 0);
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<SuperframeFile> {
    let bad = |m: &str| Error::Io(format!("superframe file: {m}"));
    if bytes.len() < HEADER_LENGTH {
        return Err(bad("truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()) as usize;
    let version = u32_at(8);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n_beams = u32_at(12) as usize;
    let layout = SuperframeLayout {
        sosf_length: u64_at(16),
        pilot_spacing: u64_at(24),
        frames_per_superframe: u64_at(32),
        data_frame_length: u64_at(40),
    };
    let n = u64_at(48);
    let body = &bytes[HEADER_LENGTH..];
    if body.len() != n_beams * n * 16 {
        return Err(bad("body length does not match header"));
    }
    let beams = body
        .chunks_exact(n * 16)
        .take(n_beams)
        .map(|beam| {
            beam.chunks_exact(16)
                .map(|p| {
                    c64(
                        f64::from_le_bytes(p[..8].try_into().unwrap()),
                        f64::from_le_bytes(p[8..].try_into().unwrap()),
                    )
                })
                .collect()
        })
        .collect::<Vec<_>>();
    let beams = if n == 0 { vec![Vec::new(); n_beams] } else { beams };
    Ok(SuperframeFile { layout, beams })
}

pub fn write_superframe_file(path: &Path, layout: &SuperframeLayout, streams: &[SymbolStream]) -> Result<()> {
    fs::write(path, encode(layout, streams)?)?;
    Ok(())
}

pub fn read_superframe_file(path: &Path) -> Result<SuperframeFile> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framing::stream::Chunk;

    #[test]
    fn header_layout() {
        let layout = SuperframeLayout::default();
        let s = SymbolStream::dense(vec![c64(1.5, -2.0)]);
        let bytes = encode(&layout, &[s]).unwrap();
        assert_eq!(bytes.len(), 64 + 16);
        assert_eq!(&bytes[..8], b"SF2SIM\0\0");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 1476);
        assert_eq!(f64::from_le_bytes(bytes[64..72].try_into().unwrap()), 1.5);
        assert_eq!(f64::from_le_bytes(bytes[72..80].try_into().unwrap()), -2.0);
    }

    #[test]
    fn roundtrip_through_disk() {
        let layout = SuperframeLayout::default();
        let a = SymbolStream::dense((0..50).map(|i| c64(i as f64, -(i as f64) / 3.0)).collect());
        let b = SymbolStream::sparse(
            50,
            vec![Chunk {
                start: 10,
                samples: vec![c64(7.0, 8.0); 5],
            }],
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sf.bin");
        write_superframe_file(&path, &layout, &[a.clone(), b]).unwrap();
        let f = read_superframe_file(&path).unwrap();
        assert_eq!(f.layout, layout);
        assert_eq!(f.beams[0], a.as_dense().unwrap());
        assert_eq!(f.beams[1][9], c64(0.0, 0.0));
        assert_eq!(f.beams[1][10], c64(7.0, 8.0));
        assert_eq!(f.beams[1][15], c64(0.0, 0.0));
    }

    #[test]
    fn rejects_corrupt_input() {
        let layout = SuperframeLayout::default();
        let mut bytes = encode(&layout, &[SymbolStream::dense(vec![c64(1.0, 0.0); 3])]).unwrap();
        assert!(decode(&bytes[..40]).is_err());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode(&bytes).is_err());
    }
}
