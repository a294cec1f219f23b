//! Superframe layout, construction and receiver-side parsing.
//!
//! Layout (identical on every beam):
//!
//! ```text
//! | SOSF | P | payload | P | payload | ... | P | payload |
//! ```
//!
//! `P` is a 36-symbol WH pilot field; consecutive fields start
//! `pilot_spacing` symbols apart. The payload between fields is the
//! concatenation of bundled frames, each a 180-symbol P2 block followed by
//! `data_frame_length` data symbols, cut wherever a pilot field falls.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::modulation::{modulate, Modcod};
use super::pilots::{PilotSet, PILOT_FIELD_LENGTH};
use super::stream::{Chunk, SymbolStream};
use crate::error::{Error, Result};
use crate::linalg::{c64, C64};
use crate::noise::derive_seed;

pub const P2_LENGTH: usize = 180;
pub const DEFAULT_SOSF_LENGTH: usize = 270;
pub const DEFAULT_PILOT_SPACING: usize = 1476;

const SOSF_SEED: u64 = 0x5050_5F53_4F53_4631;
const P2_SEED: u64 = 0x5032_5F50_494C_4F54;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuperframeLayout {
    pub sosf_length: usize,
    /// Distance in symbols between the starts of consecutive pilot fields.
    pub pilot_spacing: usize,
    pub frames_per_superframe: usize,
    /// Data symbols per bundled frame, excluding its P2 block.
    pub data_frame_length: usize,
}

impl Default for SuperframeLayout {
    fn default() -> Self {
        SuperframeLayout {
            sosf_length: DEFAULT_SOSF_LENGTH,
            pilot_spacing: DEFAULT_PILOT_SPACING,
            frames_per_superframe: 72,
            data_frame_length: 8100,
        }
    }
}

impl SuperframeLayout {
    pub const fn pilot_field_length(&self) -> usize {
        PILOT_FIELD_LENGTH
    }

    pub const fn p2_length(&self) -> usize {
        P2_LENGTH
    }

    pub fn frame_length(&self) -> usize {
        P2_LENGTH + self.data_frame_length
    }

    /// Payload symbols carried between two pilot fields.
    pub fn payload_per_field(&self) -> usize {
        self.pilot_spacing - PILOT_FIELD_LENGTH
    }

    pub fn payload_length(&self) -> usize {
        self.frames_per_superframe * self.frame_length()
    }

    pub fn pilot_fields(&self) -> usize {
        self.payload_length().div_ceil(self.payload_per_field())
    }

    pub fn total_length(&self) -> usize {
        self.sosf_length + self.pilot_fields() * PILOT_FIELD_LENGTH + self.payload_length()
    }

    pub fn data_symbols(&self) -> usize {
        self.frames_per_superframe * self.data_frame_length
    }

    pub fn validate(&self) -> Result<()> {
        if self.sosf_length == 0 {
            return Err(Error::config("layout.sosf_length", "must be > 0"));
        }
        if self.pilot_spacing <= PILOT_FIELD_LENGTH {
            return Err(Error::config(
                "layout.pilot_spacing",
                format!("must exceed the pilot field length {PILOT_FIELD_LENGTH}"),
            ));
        }
        if self.frames_per_superframe == 0 {
            return Err(Error::config("layout.frames_per_superframe", "must be > 0"));
        }
        if self.data_frame_length == 0 {
            return Err(Error::config("layout.data_frame_length", "must be > 0"));
        }
        Ok(())
    }

    /// Offsets of every pilot field relative to the superframe start.
    pub fn pilot_offsets(&self) -> Vec<usize> {
        (0..self.pilot_fields())
            .map(|k| self.sosf_length + k * self.pilot_spacing)
            .collect()
    }

    /// The exact segment map; segments tile `0..total_length()`.
    pub fn segments(&self) -> Vec<Segment> {
        let mut out = vec![Segment {
            kind: SegmentKind::Sosf,
            offset: 0,
            length: self.sosf_length,
            precoded: false,
        }];
        let frame_len = self.frame_length();
        let total = self.payload_length();
        let mut pos = self.sosf_length;
        let mut payload = 0;
        let mut field = 0;
        while payload < total {
            out.push(Segment {
                kind: SegmentKind::Pilot { field },
                offset: pos,
                length: PILOT_FIELD_LENGTH,
                precoded: false,
            });
            pos += PILOT_FIELD_LENGTH;
            field += 1;
            let chunk_end = (payload + self.payload_per_field()).min(total);
            while payload < chunk_end {
                let frame = payload / frame_len;
                let within = payload % frame_len;
                let (kind, part_end) = if within < P2_LENGTH {
                    (SegmentKind::P2 { frame, at: within }, P2_LENGTH)
                } else {
                    (
                        SegmentKind::Data {
                            frame,
                            at: within - P2_LENGTH,
                        },
                        frame_len,
                    )
                };
                let length = (part_end - within).min(chunk_end - payload);
                out.push(Segment {
                    kind,
                    offset: pos,
                    length,
                    precoded: true,
                });
                pos += length;
                payload += length;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Sosf,
    Pilot {
        field: usize,
    },
    /// Part of frame `frame`'s P2 block starting at P2 symbol `at`.
    P2 {
        frame: usize,
        at: usize,
    },
    /// Part of frame `frame`'s data starting at data symbol `at`.
    Data {
        frame: usize,
        at: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub offset: usize,
    pub length: usize,
    pub precoded: bool,
}

impl Segment {
    pub fn end(&self) -> usize {
        self.offset + self.length
    }
}

/// The known start-of-superframe sequence of `beam`: unit-modulus QPSK
/// from a fixed seed, different per beam.
pub fn sosf_sequence(beam: usize, length: usize) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SOSF_SEED, beam as u64));
    (0..length).map(|_| random_qpsk(&mut rng)).collect()
}

/// The known P2 pilot block of terminal stream `stream`. Streams share a
/// seeded QPSK base sequence and differ by a frequency shift of
/// `stream / 180` cycles per symbol, which makes distinct streams exactly
/// orthogonal over the block.
pub fn p2_sequence(stream: usize) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(P2_SEED);
    (0..P2_LENGTH)
        .map(|t| {
            let shift = C64::from_polar(1.0, TAU * (stream * t % P2_LENGTH) as f64 / P2_LENGTH as f64);
            random_qpsk(&mut rng) * shift
        })
        .collect()
}

fn random_qpsk(rng: &mut ChaCha8Rng) -> C64 {
    let b: u8 = rng.random_range(0..4);
    c64(
        if b & 1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 },
        if b & 2 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 },
    )
}

/// Payload of one bundled frame on one beam. `bits == None` leaves the data
/// symbols unmaterialized (the frame still occupies its slots).
#[derive(Debug, Clone, PartialEq)]
pub struct FramePayload {
    pub modcod: Modcod,
    pub bits: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameDescriptor {
    pub modcod: Modcod,
    /// Coded bits carried by the frame's data symbols.
    pub payload_bits: usize,
}

/// One superframe per beam, symbol-aligned across beams.
#[derive(Debug, Clone, PartialEq)]
pub struct Superframe {
    pub layout: SuperframeLayout,
    pub segments: Vec<Segment>,
    /// Unprecoded symbol stream of each beam.
    pub streams: Vec<SymbolStream>,
    /// `frames[beam][frame]`.
    pub frames: Vec<Vec<FrameDescriptor>>,
}

impl Superframe {
    pub fn n_beams(&self) -> usize {
        self.streams.len()
    }
}

/// Assemble per-beam superframes. `payload[beam][frame]` must provide
/// exactly `frames_per_superframe` frames per beam, each with
/// `data_frame_length * bits_per_symbol` bits when materialized.
pub fn build_superframe(layout: &SuperframeLayout, pilots: &PilotSet, payload: &[Vec<FramePayload>]) -> Result<Superframe> {
    layout.validate()?;
    let n_beams = payload.len();
    if n_beams == 0 || n_beams > pilots.n_beams() {
        return Err(Error::LayoutOverflow(format!(
            "{n_beams} payload beams for {} pilot sequences",
            pilots.n_beams()
        )));
    }
    let mut data_symbols: Vec<Vec<Option<Vec<C64>>>> = Vec::with_capacity(n_beams);
    let mut frames = Vec::with_capacity(n_beams);
    for (beam, beam_payload) in payload.iter().enumerate() {
        if beam_payload.len() != layout.frames_per_superframe {
            return Err(Error::LayoutOverflow(format!(
                "beam {beam}: {} frames for a layout of {}",
                beam_payload.len(),
                layout.frames_per_superframe
            )));
        }
        let mut syms = Vec::with_capacity(beam_payload.len());
        let mut desc = Vec::with_capacity(beam_payload.len());
        for (f, fp) in beam_payload.iter().enumerate() {
            let bps = fp.modcod.modulation.bits_per_symbol();
            let want = layout.data_frame_length * bps;
            if let Some(bits) = &fp.bits {
                if bits.len() != want {
                    return Err(Error::LayoutOverflow(format!(
                        "beam {beam} frame {f}: {} bits, slot holds {want}",
                        bits.len()
                    )));
                }
                syms.push(Some(modulate(bits, fp.modcod.modulation)?));
            } else {
                syms.push(None);
            }
            desc.push(FrameDescriptor {
                modcod: fp.modcod,
                payload_bits: want,
            });
        }
        data_symbols.push(syms);
        frames.push(desc);
    }

    let segments = layout.segments();
    let total = layout.total_length();
    let streams = (0..n_beams)
        .map(|beam| {
            let sosf = sosf_sequence(beam, layout.sosf_length);
            let p2 = p2_sequence(beam);
            let mut chunks: Vec<Chunk> = Vec::new();
            for seg in &segments {
                let samples: Option<&[C64]> = match seg.kind {
                    SegmentKind::Sosf => Some(&sosf),
                    SegmentKind::Pilot { .. } => Some(pilots.field(beam)),
                    SegmentKind::P2 { at, .. } => Some(&p2[at..at + seg.length]),
                    SegmentKind::Data { frame, at } => data_symbols[beam][frame].as_deref().map(|d| &d[at..at + seg.length]),
                };
                let Some(samples) = samples else { continue };
                match chunks.last_mut() {
                    Some(c) if c.end() == seg.offset => c.samples.extend_from_slice(samples),
                    _ => chunks.push(Chunk {
                        start: seg.offset,
                        samples: samples.to_vec(),
                    }),
                }
            }
            SymbolStream::sparse(total, chunks)
        })
        .collect();

    Ok(Superframe {
        layout: *layout,
        segments,
        streams,
        frames,
    })
}

/// A received pilot field and where it sits.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservation {
    pub field: usize,
    /// Offset of the field relative to the superframe start.
    pub offset: usize,
    pub samples: Vec<C64>,
}

/// Receiver-side view of one superframe.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperframeView {
    pub sync_offset: usize,
    /// Segment map relative to the superframe start.
    pub segments: Vec<Segment>,
    pub sosf: Vec<C64>,
    pub pilots: Vec<PilotObservation>,
    /// Reassembled P2 block of every frame.
    pub p2: Vec<Vec<C64>>,
    /// Reassembled data symbols of every frame, if they were carried.
    pub data: Vec<Option<Vec<C64>>>,
}

/// Cut a received stream into its segments, assuming the superframe starts
/// at `sync_offset`.
pub fn parse_superframe(stream: &SymbolStream, layout: &SuperframeLayout, sync_offset: usize) -> Result<SuperframeView> {
    layout.validate()?;
    let needed = sync_offset + layout.total_length();
    if stream.len() < needed {
        return Err(Error::OutOfBounds {
            needed,
            available: stream.len(),
        });
    }
    let segments = layout.segments();
    let missing = |seg: &Segment| Error::OutOfBounds {
        needed: sync_offset + seg.end(),
        available: stream.len(),
    };
    let frames = layout.frames_per_superframe;
    let mut view = SuperframeView {
        sync_offset,
        segments: segments.clone(),
        sosf: Vec::new(),
        pilots: Vec::with_capacity(layout.pilot_fields()),
        p2: vec![Vec::with_capacity(P2_LENGTH); frames],
        data: vec![Some(Vec::with_capacity(layout.data_frame_length)); frames],
    };
    for seg in &segments {
        let window = stream.window(sync_offset + seg.offset, seg.length);
        match seg.kind {
            SegmentKind::Sosf => view.sosf = window.ok_or_else(|| missing(seg))?.to_vec(),
            SegmentKind::Pilot { field } => view.pilots.push(PilotObservation {
                field,
                offset: seg.offset,
                samples: window.ok_or_else(|| missing(seg))?.to_vec(),
            }),
            SegmentKind::P2 { frame, .. } => view.p2[frame].extend_from_slice(window.ok_or_else(|| missing(seg))?),
            SegmentKind::Data { frame, .. } => {
                let slot = &mut view.data[frame];
                match (window, slot.as_mut()) {
                    (Some(w), Some(d)) => d.extend_from_slice(w),
                    _ => *slot = None,
                }
            }
        }
    }
    Ok(view)
}
