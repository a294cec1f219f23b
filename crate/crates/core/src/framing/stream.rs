//! Symbol streams that may carry only some of their samples.
//!
//! A dense stream has one chunk covering every index. A sparse stream keeps
//! only the chunks a receiver looks at (SOSF, pilot fields, P2 blocks); the
//! length of the gaps between them is still tracked so that time-dependent
//! impairments stay aligned with absolute symbol indices.

use crate::linalg::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub start: usize,
    pub samples: Vec<C64>,
}

impl Chunk {
    pub fn end(&self) -> usize {
        self.start + self.samples.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolStream {
    len: usize,
    chunks: Vec<Chunk>,
}

impl SymbolStream {
    pub fn dense(samples: Vec<C64>) -> Self {
        SymbolStream {
            len: samples.len(),
            chunks: vec![Chunk { start: 0, samples }],
        }
    }

    /// Build from sorted, non-overlapping chunks inside `0..len`.
    pub fn sparse(len: usize, chunks: Vec<Chunk>) -> Self {
        let mut prev_end = 0;
        for c in &chunks {
            assert!(c.start >= prev_end, "chunks must be sorted and disjoint");
            prev_end = c.end();
        }
        assert!(prev_end <= len, "chunk past end of stream");
        SymbolStream { len, chunks }
    }

    /// Same shape as `self`, every sample zero.
    pub fn zeros_like(&self) -> Self {
        SymbolStream {
            len: self.len,
            chunks: self
                .chunks
                .iter()
                .map(|c| Chunk {
                    start: c.start,
                    samples: vec![C64::new(0.0, 0.0); c.samples.len()],
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_dense(&self) -> bool {
        self.chunks.len() == 1 && self.chunks[0].start == 0 && self.chunks[0].samples.len() == self.len
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunks_mut(&mut self) -> &mut [Chunk] {
        &mut self.chunks
    }

    /// Number of materialized samples.
    pub fn stored(&self) -> usize {
        self.chunks.iter().map(|c| c.samples.len()).sum()
    }

    pub fn same_shape(&self, other: &SymbolStream) -> bool {
        self.len == other.len
            && self.chunks.len() == other.chunks.len()
            && self
                .chunks
                .iter()
                .zip(&other.chunks)
                .all(|(a, b)| a.start == b.start && a.samples.len() == b.samples.len())
    }

    fn locate(&self, start: usize, len: usize) -> Option<(usize, usize)> {
        let idx = self.chunks.partition_point(|c| c.end() <= start);
        let c = self.chunks.get(idx)?;
        (c.start <= start && start + len <= c.end()).then(|| (idx, start - c.start))
    }

    /// Samples `start..start+len` if they are stored contiguously.
    pub fn window(&self, start: usize, len: usize) -> Option<&[C64]> {
        let (idx, off) = self.locate(start, len)?;
        Some(&self.chunks[idx].samples[off..off + len])
    }

    pub fn window_mut(&mut self, start: usize, len: usize) -> Option<&mut [C64]> {
        let (idx, off) = self.locate(start, len)?;
        Some(&mut self.chunks[idx].samples[off..off + len])
    }

    /// All samples of a dense stream.
    pub fn as_dense(&self) -> Option<&[C64]> {
        self.is_dense().then(|| self.chunks[0].samples.as_slice())
    }

    pub fn into_dense(self) -> Option<Vec<C64>> {
        if self.is_dense() {
            self.chunks.into_iter().next().map(|c| c.samples)
        } else {
            None
        }
    }

    /// Visit every stored sample with its absolute index.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(usize, &mut C64)) {
        for c in &mut self.chunks {
            for (i, v) in c.samples.iter_mut().enumerate() {
                f(c.start + i, v);
            }
        }
    }
}
