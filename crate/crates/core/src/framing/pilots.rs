//! Walsh-Hadamard SF-pilot sequences.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::linalg::{c64, C64};

/// Length of the orthogonal Walsh-Hadamard core of each pilot field.
pub const WH_LENGTH: usize = 32;
/// Pilot field length: WH core plus padding.
pub const PILOT_FIELD_LENGTH: usize = 36;
const PADDING: usize = PILOT_FIELD_LENGTH - WH_LENGTH;

/// Unit-modulus constant every WH chip is multiplied by.
pub fn pilot_scale() -> C64 {
    c64(FRAC_1_SQRT_2, FRAC_1_SQRT_2)
}

/// Row `k` of the Sylvester-ordered Hadamard matrix of size `n` (power of
/// two), as +1/-1 integers.
pub fn walsh_row(k: usize, n: usize) -> Vec<i8> {
    assert!(n.is_power_of_two() && k < n, "row {k} of size {n}");
    (0..n)
        .map(|t| if (k & t).count_ones().is_multiple_of(2) { 1 } else { -1 })
        .collect()
}

/// One unit-modulus pilot field per beam.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSet {
    /// Integer chips of each beam's WH core.
    chips: Vec<Vec<i8>>,
    sequences: Vec<Vec<C64>>,
}

impl PilotSet {
    pub fn n_beams(&self) -> usize {
        self.sequences.len()
    }

    /// Full 36-symbol field for beam `k`.
    pub fn field(&self, k: usize) -> &[C64] {
        &self.sequences[k]
    }

    /// The 32-symbol orthogonal core for beam `k`.
    pub fn core(&self, k: usize) -> &[C64] {
        &self.sequences[k][..WH_LENGTH]
    }

    pub fn chips(&self, k: usize) -> &[i8] {
        &self.chips[k]
    }
}

/// Beam `k` gets WH row `k` scaled by `(1+i)/sqrt(2)` and padded with four
/// copies of its last chip.
pub fn build_pilot_set(n_beams: usize) -> PilotSet {
    assert!((1..=WH_LENGTH).contains(&n_beams), "1..=32 beams supported");
    let scale = pilot_scale();
    let chips: Vec<Vec<i8>> = (0..n_beams).map(|k| walsh_row(k, WH_LENGTH)).collect();
    let sequences = chips
        .iter()
        .map(|row| {
            let last = *row.last().unwrap();
            row.iter()
                .chain(std::iter::repeat_n(&last, PADDING))
                .map(|&c| scale * c as f64)
                .collect()
        })
        .collect();
    PilotSet { chips, sequences }
}
