//! Superframe construction and parsing.

pub mod file;
pub mod modulation;
pub mod pilots;
pub mod sosf;
pub mod stream;
pub mod superframe;

pub use modulation::{demodulate, modulate, Modcod, Modulation};
pub use pilots::{build_pilot_set, PilotSet, PILOT_FIELD_LENGTH, WH_LENGTH};
pub use sosf::{detect_sosf, detect_sosf_in, SyncResult, DEFAULT_SYNC_THRESHOLD};
pub use stream::{Chunk, SymbolStream};
pub use superframe::{
    build_superframe, p2_sequence, parse_superframe, sosf_sequence, FrameDescriptor, FramePayload, Segment, SegmentKind, Superframe,
    SuperframeLayout, SuperframeView, P2_LENGTH,
};
