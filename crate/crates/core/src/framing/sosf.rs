//! Start-of-superframe detection.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::linalg::C64;

pub const DEFAULT_SYNC_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncResult {
    pub offset: usize,
    /// Normalized correlation peak in `[0, 1]`.
    pub metric: f64,
}

/// Search the whole stream for the start of a superframe.
///
/// `sequences` holds the known SOSF of every beam (all the same length). A
/// terminal sees a mix of beams, so the metric pools the correlation with
/// each of them:
///
/// ```text
/// metric(o) = sqrt(sum_b |<y[o..o+L], s_b>|^2) / (sqrt(L) * ||y[o..o+L]||)
/// ```
///
/// which is 1 for any noise-free combination of orthogonal sequences.
pub fn detect_sosf(stream: &[C64], sequences: &[Vec<C64>], threshold: f64) -> Result<SyncResult> {
    let len = sequence_length(sequences);
    if stream.len() < len {
        return Err(Error::OutOfBounds {
            needed: len,
            available: stream.len(),
        });
    }
    detect_sosf_in(stream, sequences, 0..stream.len() - len + 1, threshold)
}

/// Like [`detect_sosf`] but only tries candidate offsets in `candidates`.
pub fn detect_sosf_in(stream: &[C64], sequences: &[Vec<C64>], candidates: Range<usize>, threshold: f64) -> Result<SyncResult> {
    let len = sequence_length(sequences);
    let needed = candidates.end.saturating_sub(1) + len;
    if candidates.is_empty() || stream.len() < needed {
        return Err(Error::OutOfBounds {
            needed,
            available: stream.len(),
        });
    }
    let mut best = SyncResult {
        offset: candidates.start,
        metric: 0.0,
    };
    for o in candidates {
        let window = &stream[o..o + len];
        let energy: f64 = window.iter().map(|v| v.norm_sqr()).sum();
        if energy <= 0.0 {
            continue;
        }
        let pooled: f64 = sequences
            .iter()
            .map(|s| window.iter().zip(s).map(|(y, k)| y * k.conj()).sum::<C64>().norm_sqr())
            .sum();
        let metric = (pooled / (len as f64 * energy)).sqrt().min(1.0);
        if metric > best.metric {
            best = SyncResult { offset: o, metric };
        }
    }
    if best.metric < threshold {
        return Err(Error::NoSync { peak: best.metric });
    }
    Ok(best)
}

fn sequence_length(sequences: &[Vec<C64>]) -> usize {
    let len = sequences.first().map_or(0, Vec::len);
    assert!(len > 0, "need at least one non-empty SOSF sequence");
    assert!(sequences.iter().all(|s| s.len() == len), "SOSF sequences must share a length");
    len
}
