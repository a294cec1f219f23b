//! Link-level simulator of a precoded two-beam satellite forward link.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channel;
pub mod error;
pub mod framing;
pub mod gateway;
pub mod harness;
pub mod linalg;
pub mod noise;
pub mod precoding;
pub mod terminal;

pub use error::{Error, Result};
pub use linalg::{c64, wrap_phase, CVec2, Mat2, C64, NUM_BEAMS};
