//! Gray-mapped unit-modulus constellations.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{c64, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modulation {
    Qpsk,
    Psk8,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Qpsk => 2,
            Modulation::Psk8 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Qpsk => "QPSK",
            Modulation::Psk8 => "8PSK",
        }
    }
}

/// A modulation and code rate pair, e.g. QPSK 2/3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Modcod {
    pub modulation: Modulation,
    pub rate_num: u8,
    pub rate_den: u8,
}

impl Modcod {
    pub const fn new(modulation: Modulation, rate_num: u8, rate_den: u8) -> Self {
        Modcod {
            modulation,
            rate_num,
            rate_den,
        }
    }

    pub fn code_rate(&self) -> f64 {
        self.rate_num as f64 / self.rate_den as f64
    }

    /// Information bits per channel symbol.
    pub fn efficiency(&self) -> f64 {
        self.modulation.bits_per_symbol() as f64 * self.code_rate()
    }

    /// Parse labels like `QPSK 1/2` or `8psk_3/5`.
    pub fn parse(s: &str) -> Option<Modcod> {
        let s = s.trim();
        let split = s.find([' ', '_'])?;
        let (m, r) = s.split_at(split);
        let modulation = match m.to_ascii_uppercase().as_str() {
            "QPSK" => Modulation::Qpsk,
            "8PSK" => Modulation::Psk8,
            _ => return None,
        };
        let (n, d) = r[1..].trim().split_once('/')?;
        let (n, d): (u8, u8) = (n.parse().ok()?, d.parse().ok()?);
        (n > 0 && n < d).then_some(Modcod::new(modulation, n, d))
    }
}

impl fmt::Display for Modcod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}/{}", self.modulation.name(), self.rate_num, self.rate_den)
    }
}

/// 8PSK Gray order around the circle: point `k` sits at angle `k * pi/4`.
const PSK8_GRAY: [u8; 8] = [0b000, 0b001, 0b011, 0b010, 0b110, 0b111, 0b101, 0b100];

fn qpsk_point(b0: u8, b1: u8) -> C64 {
    c64((1.0 - 2.0 * b0 as f64) * FRAC_1_SQRT_2, (1.0 - 2.0 * b1 as f64) * FRAC_1_SQRT_2)
}

/// Map bits (one per byte, 0 or 1) to constellation symbols.
pub fn modulate(bits: &[u8], modulation: Modulation) -> Result<Vec<C64>> {
    let bps = modulation.bits_per_symbol();
    if !bits.len().is_multiple_of(bps) {
        return Err(Error::LengthMismatch {
            expected: bits.len().div_ceil(bps) * bps,
            actual: bits.len(),
        });
    }
    Ok(bits
        .chunks_exact(bps)
        .map(|b| match modulation {
            Modulation::Qpsk => qpsk_point(b[0] & 1, b[1] & 1),
            Modulation::Psk8 => {
                let word = ((b[0] & 1) << 2) | ((b[1] & 1) << 1) | (b[2] & 1);
                let k = PSK8_GRAY.iter().position(|&g| g == word).unwrap();
                C64::from_polar(1.0, k as f64 * PI / 4.0)
            }
        })
        .collect())
}

/// Hard-decision nearest-point demapper.
pub fn demodulate(symbols: &[C64], modulation: Modulation) -> Vec<u8> {
    let mut out = Vec::with_capacity(symbols.len() * modulation.bits_per_symbol());
    for s in symbols {
        match modulation {
            Modulation::Qpsk => {
                out.push((s.re < 0.0) as u8);
                out.push((s.im < 0.0) as u8);
            }
            Modulation::Psk8 => {
                let k = (s.arg() / (PI / 4.0)).round().rem_euclid(8.0) as usize;
                let g = PSK8_GRAY[k];
                out.extend([(g >> 2) & 1, (g >> 1) & 1, g & 1]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::prbs_bits;

    #[test]
    fn qpsk_points_are_gray_adjacent() {
        let pts = modulate(&[0, 0, 0, 1, 1, 1, 1, 0], Modulation::Qpsk).unwrap();
        assert!(pts.iter().all(|p| (p.norm() - 1.0).abs() < 1e-15));
        // 00 -> 01 -> 11 -> 10 walks the square one quadrant at a time.
        for w in pts.windows(2) {
            assert!(((w[0] - w[1]).norm() - 2f64.sqrt()).abs() < 1e-12);
        }
        let distinct: std::collections::HashSet<_> = pts.iter().map(|p| (p.re.to_bits(), p.im.to_bits())).collect();
        assert_eq!(distinct.len(), 4);
    }

    #[test]
    fn psk8_neighbours_differ_in_one_bit() {
        for k in 0..8 {
            let diff = PSK8_GRAY[k] ^ PSK8_GRAY[(k + 1) % 8];
            assert_eq!(diff.count_ones(), 1);
        }
    }

    #[test]
    fn zero_bits_give_constant_symbol() {
        for m in [Modulation::Qpsk, Modulation::Psk8] {
            let s = modulate(&[0; 24], m).unwrap();
            assert!(s.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn length_must_divide() {
        assert!(matches!(modulate(&[0, 1, 1], Modulation::Qpsk), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn roundtrip_at_zero_noise() {
        for m in [Modulation::Qpsk, Modulation::Psk8] {
            let bits = prbs_bits(11, 3 * 2 * 500);
            let sym = modulate(&bits, m).unwrap();
            assert!(sym.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
            assert_eq!(demodulate(&sym, m), bits);
        }
    }

    #[test]
    fn modcod_labels() {
        let m = Modcod::parse("QPSK 2/3").unwrap();
        assert_eq!(m, Modcod::new(Modulation::Qpsk, 2, 3));
        assert_eq!(m.to_string(), "QPSK 2/3");
        assert_eq!(Modcod::parse("8psk_3/5").unwrap().efficiency(), 3.0 * 0.6);
        assert!(Modcod::parse("16APSK 2/3").is_none());
        assert!(Modcod::parse("QPSK 3/2").is_none());
    }
}
