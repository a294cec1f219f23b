//! Fixed-size complex matrices for the two-beam system.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Number of beams (and of served terminals).
pub const NUM_BEAMS: usize = 2;

/// Determinants below this magnitude are treated as singular.
pub const SINGULAR_DET: f64 = 1e-30;

pub type C64 = Complex64;

/// A pair of complex values, one per beam or per terminal.
pub type CVec2 = [C64; NUM_BEAMS];

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Row-major 2x2 complex matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[C64; NUM_BEAMS]; NUM_BEAMS]);

impl Mat2 {
    pub const fn new(rows: [[C64; NUM_BEAMS]; NUM_BEAMS]) -> Self {
        Mat2(rows)
    }

    pub fn from_real(rows: [[f64; 2]; 2]) -> Self {
        Mat2([
            [c64(rows[0][0], 0.0), c64(rows[0][1], 0.0)],
            [c64(rows[1][0], 0.0), c64(rows[1][1], 0.0)],
        ])
    }

    pub fn zeros() -> Self {
        Mat2([[C64::new(0.0, 0.0); 2]; 2])
    }

    pub fn identity() -> Self {
        Self::diag([c64(1.0, 0.0), c64(1.0, 0.0)])
    }

    pub fn diag(d: CVec2) -> Self {
        let z = C64::new(0.0, 0.0);
        Mat2([[d[0], z], [z, d[1]]])
    }

    pub fn diag_real(d: [f64; 2]) -> Self {
        Self::diag([c64(d[0], 0.0), c64(d[1], 0.0)])
    }

    pub fn row(&self, i: usize) -> CVec2 {
        self.0[i]
    }

    pub fn col(&self, j: usize) -> CVec2 {
        [self.0[0][j], self.0[1][j]]
    }

    pub fn det(&self) -> C64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Mat2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    /// Inverse by the adjugate formula.
    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if !(det.norm() > SINGULAR_DET) {
            return Err(Error::SingularMatrix { det: det.norm() });
        }
        let m = &self.0;
        let inv = det.inv();
        Ok(Mat2([[m[1][1] * inv, -m[0][1] * inv], [-m[1][0] * inv, m[0][0] * inv]]))
    }

    pub fn scale(&self, k: C64) -> Self {
        let mut out = *self;
        out.0.iter_mut().flatten().for_each(|v| *v *= k);
        out
    }

    pub fn mul_vec(&self, v: &CVec2) -> CVec2 {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    /// Real parts of the diagonal.
    pub fn diag_re(&self) -> [f64; 2] {
        [self.0[0][0].re, self.0[1][1].re]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Largest elementwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Spectral condition number (ratio of singular values).
    pub fn condition_number(&self) -> f64 {
        // Singular values are the square roots of the eigenvalues of A^H A.
        let g = self.adjoint() * *self;
        let a = g.0[0][0].re;
        let d = g.0[1][1].re;
        let b = g.0[0][1].norm();
        let mean = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        let hi = mean + disc;
        let lo = (mean - disc).max(0.0);
        if lo == 0.0 {
            f64::INFINITY
        } else {
            (hi / lo).sqrt()
        }
    }
}

impl Default for Mat2 {
    fn default() -> Self {
        Self::zeros()
    }
}

impl Index<(usize, usize)> for Mat2 {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.0[i][j]
    }
}

impl IndexMut<(usize, usize)> for Mat2 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.0[i][j]
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let mut out = Mat2::zeros();
        for i in 0..NUM_BEAMS {
            for j in 0..NUM_BEAMS {
                out.0[i][j] = (0..NUM_BEAMS).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        out
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let mut out = self;
        out.0.iter_mut().flatten().zip(rhs.0.iter().flatten()).for_each(|(a, b)| *a += b);
        out
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        self + rhs.scale(c64(-1.0, 0.0))
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_c64() -> impl Strategy<Value = C64> {
        (-2.0f64..2.0, -2.0f64..2.0).prop_map(|(re, im)| c64(re, im))
    }

    fn arb_mat() -> impl Strategy<Value = Mat2> {
        prop::array::uniform4(arb_c64()).prop_map(|v| Mat2([[v[0], v[1]], [v[2], v[3]]]))
    }

    /// Inverse written out entry by entry from cofactors, kept apart from
    /// `Mat2::inverse`.
    fn cofactor_inverse(m: &Mat2) -> Mat2 {
        let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let det = a * d - b * c;
        let cof = [[d, -c], [-b, a]];
        let mut out = Mat2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                // inverse = transpose(cofactor) / det
                out.0[i][j] = cof[j][i] / det;
            }
        }
        out
    }

    #[test]
    fn inverse_of_identity() {
        assert_eq!(Mat2::identity().inverse().unwrap(), Mat2::identity());
    }

    #[test]
    fn inverse_of_diagonal() {
        let inv = Mat2::diag_real([2.0, 4.0]).inverse().unwrap();
        assert!(inv.max_abs_diff(&Mat2::diag_real([0.5, 0.25])) < 1e-15);
    }

    #[test]
    fn inverse_matches_cofactor_oracle() {
        let m = Mat2([[c64(1.0, 0.0), c64(0.5, 0.1)], [c64(0.0, 0.3), c64(1.0, 0.0)]]);
        let inv = m.inverse().unwrap();
        assert!(inv.max_abs_diff(&cofactor_inverse(&m)) < 1e-15);
        assert!((m * inv).max_abs_diff(&Mat2::identity()) < 1e-10);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = Mat2::from_real([[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(m.inverse(), Err(Error::SingularMatrix { .. })));
        assert!(matches!(Mat2::zeros().inverse(), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn adjoint_examples() {
        assert_eq!(Mat2::identity().adjoint(), Mat2::identity());
        let z = c64(0.0, 0.0);
        let m = Mat2([[z, c64(0.0, 1.0)], [z, z]]);
        assert_eq!(m.adjoint(), Mat2([[z, z], [c64(0.0, -1.0), z]]));
    }

    #[test]
    fn condition_number_of_diagonal() {
        assert!((Mat2::diag_real([2.0, 0.5]).condition_number() - 4.0).abs() < 1e-12);
        assert!(Mat2::from_real([[1.0, 1.0], [1.0, 1.0]]).condition_number().is_infinite());
    }

    #[test]
    fn wrap_phase_range() {
        use std::f64::consts::PI;
        assert_eq!(wrap_phase(PI), PI);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn adjoint_is_involution(m in arb_mat()) {
            prop_assert_eq!(m.adjoint().adjoint(), m);
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert_eq!(m.adjoint()[(i, j)], m[(j, i)].conj());
                }
            }
        }

        #[test]
        fn inverse_roundtrip(m in arb_mat()) {
            prop_assume!(m.condition_number() <= 1e4);
            let inv = m.inverse().unwrap();
            prop_assert!((m * inv).max_abs_diff(&Mat2::identity()) < 1e-10);
            let back = inv.inverse().unwrap();
            let scale = m.0.iter().flatten().map(|v| v.norm()).fold(1.0, f64::max);
            prop_assert!(back.max_abs_diff(&m) < 1e-9 * scale);
        }

        #[test]
        fn complex_arithmetic_is_commutative_and_associative(
            a in arb_c64(), b in arb_c64(), c in arb_c64()
        ) {
            prop_assert!((a * b - b * a).norm() < 1e-12);
            prop_assert!(((a * b) * c - a * (b * c)).norm() < 1e-12);
            prop_assert!(((a + b) + c - (a + (b + c))).norm() < 1e-12);
        }
    }
}
