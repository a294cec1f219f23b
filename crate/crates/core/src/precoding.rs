//! Linear MMSE precoders and per-antenna magnitude normalization.
//!
//! `W` maps per-terminal symbols to per-beam transmit samples: row `i` of `W`
//! feeds beam (antenna) `i`, column `j` carries terminal `j`'s stream.

use crate::error::{Error, Result};
use crate::linalg::{c64, CVec2, Mat2, C64, NUM_BEAMS};

/// A precoding matrix, optionally carrying the row sums it was normalized by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecodingMatrix {
    pub w: Mat2,
    /// `a_i = |w_i1| + |w_i2|` of the matrix before normalization; `None`
    /// while unnormalized.
    pub row_norms: Option<[f64; NUM_BEAMS]>,
}

impl PrecodingMatrix {
    pub fn unnormalized(w: Mat2) -> Self {
        PrecodingMatrix { w, row_norms: None }
    }

    pub fn identity() -> Self {
        PrecodingMatrix {
            w: Mat2::identity(),
            row_norms: Some([1.0; NUM_BEAMS]),
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.row_norms.is_some()
    }

    /// Row sums of entry moduli.
    pub fn row_sums(&self) -> [f64; NUM_BEAMS] {
        let mut out = [0.0; NUM_BEAMS];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.w.row(i).iter().map(|v| v.norm()).sum();
        }
        out
    }

    /// Transmit power per antenna for independent unit-power streams,
    /// `diag(W W^H)`.
    pub fn antenna_powers(&self) -> [f64; NUM_BEAMS] {
        (self.w * self.w.adjoint()).diag_re()
    }
}

/// Regularized MMSE precoder `W = H^H (H H^H + sigma2 I)^-1`.
pub fn compute_mmse(h: &Mat2, sigma2: f64) -> Result<PrecodingMatrix> {
    assert!(sigma2 >= 0.0, "noise variance must be non-negative");
    regularized(h, [sigma2; NUM_BEAMS]).map(PrecodingMatrix::unnormalized)
}

fn regularized(h: &Mat2, lambda: [f64; NUM_BEAMS]) -> Result<Mat2> {
    let gram = *h * h.adjoint() + Mat2::diag_real(lambda);
    Ok(h.adjoint() * gram.inverse()?)
}

/// Settings for the per-antenna power constrained precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct PacConfig {
    /// Available power per transmit antenna (phi).
    pub power_budget: [f64; NUM_BEAMS],
    pub max_iterations: usize,
    pub residual_tolerance: f64,
    /// Lower bound on every diagonal entry of Lambda.
    pub lambda_floor: f64,
}

impl Default for PacConfig {
    fn default() -> Self {
        PacConfig {
            power_budget: [1.0; NUM_BEAMS],
            max_iterations: 100,
            residual_tolerance: 1e-8,
            lambda_floor: 0.0,
        }
    }
}

impl PacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.power_budget.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::config("pac.power_budget", "entries must be > 0"));
        }
        if !(self.residual_tolerance > 0.0) {
            return Err(Error::config("pac.residual_tolerance", "must be > 0"));
        }
        if !(self.lambda_floor >= 0.0) {
            return Err(Error::config("pac.lambda_floor", "must be >= 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("pac.max_iterations", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacSolution {
    pub precoder: PrecodingMatrix,
    /// Diagonal of Lambda.
    pub lambda: [f64; NUM_BEAMS],
    pub iterations: usize,
    pub residual: f64,
}

/// Optimality residual of a candidate Lambda: complementarity
/// `|(lambda_i - floor)(p_i - phi_i)|` together with any budget violation
/// `max(0, p_i - phi_i)`, maximized over antennas.
pub fn pac_residual(lambda: &[f64; NUM_BEAMS], powers: &[f64; NUM_BEAMS], cfg: &PacConfig) -> f64 {
    (0..NUM_BEAMS)
        .map(|i| {
            let excess = powers[i] - cfg.power_budget[i];
            ((lambda[i] - cfg.lambda_floor) * excess).abs().max(excess.max(0.0))
        })
        .fold(0.0, f64::max)
}

struct PacPoint {
    lambda: [f64; NUM_BEAMS],
    w: Mat2,
    gram_inv: Mat2,
    powers: [f64; NUM_BEAMS],
    residual: f64,
}

fn pac_point(h: &Mat2, lambda: [f64; NUM_BEAMS], cfg: &PacConfig) -> Result<PacPoint> {
    let gram_inv = (*h * h.adjoint() + Mat2::diag_real(lambda)).inverse()?;
    let w = h.adjoint() * gram_inv;
    let powers = (w * w.adjoint()).diag_re();
    let residual = pac_residual(&lambda, &powers, cfg);
    Ok(PacPoint {
        lambda,
        w,
        gram_inv,
        powers,
        residual,
    })
}

/// Jacobian of the antenna powers with respect to Lambda:
/// `dW/dlambda_j = -W E_j (HH^H + Lambda)^-1`.
fn power_jacobian(p: &PacPoint) -> [[f64; NUM_BEAMS]; NUM_BEAMS] {
    let mut jac = [[0.0; NUM_BEAMS]; NUM_BEAMS];
    for j in 0..NUM_BEAMS {
        let mut e = Mat2::zeros();
        e[(j, j)] = c64(1.0, 0.0);
        let dw = (p.w * e * p.gram_inv).scale(c64(-1.0, 0.0));
        let dp = dw * p.w.adjoint();
        for (i, row) in jac.iter_mut().enumerate() {
            row[j] = 2.0 * dp[(i, i)].re;
        }
    }
    jac
}

/// MMSE precoder under per-antenna power constraints,
/// `W = H^H (H H^H + Lambda)^-1` with diagonal `Lambda >= floor` chosen so
/// that `(Lambda - floor)(diag(W W^H) - phi) = 0` and `diag(W W^H) <= phi`.
///
/// With two antennas the active set is enumerated: no constraint binding,
/// one binding (a safeguarded 1-D Newton root search along that
/// antenna's Lambda entry), then both binding (multi-start
/// Levenberg-Marquardt). The first complementary point found is returned;
/// `iterations` counts the Newton and Levenberg-Marquardt steps. Some channel/budget pairs admit no such point; those end in
/// `NonConvergence`.
pub fn compute_mmse_pac(h: &Mat2, cfg: &PacConfig) -> Result<PacSolution> {
    cfg.validate()?;
    let floor = cfg.lambda_floor;
    let start = pac_point(h, [floor; NUM_BEAMS], cfg)?;
    if start.residual < cfg.residual_tolerance {
        return Ok(finish(start, 0));
    }
    let mut budget = cfg.max_iterations;
    let mut best = start.residual;

    for i in 0..NUM_BEAMS {
        if start.powers[i] <= cfg.power_budget[i] {
            continue;
        }
        match solve_single(h, cfg, i, &mut budget) {
            Some(p) if p.residual < cfg.residual_tolerance => return Ok(finish(p, cfg.max_iterations - budget)),
            Some(p) => best = best.min(p.residual),
            None => {}
        }
        if budget == 0 {
            break;
        }
    }
    if budget > 0 {
        match solve_both(h, cfg, &mut budget) {
            Some(p) if p.residual < cfg.residual_tolerance => return Ok(finish(p, cfg.max_iterations - budget)),
            Some(p) => best = best.min(p.residual),
            None => {}
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iterations - budget,
        residual: best,
    })
}

fn finish(point: PacPoint, iterations: usize) -> PacSolution {
    PacSolution {
        precoder: PrecodingMatrix::unnormalized(point.w),
        lambda: point.lambda,
        iterations,
        residual: point.residual,
    }
}

/// Log-spaced offsets above the floor used to bracket and seed the searches.
fn lambda_grid() -> impl Iterator<Item = f64> + Clone {
    (0..=96).map(|k| 10f64.powf(-6.0 + 0.125 * k as f64))
}

/// Antenna `i` binding, the other held at the floor.
///
/// The excess power along this line need not be monotone, so every sign
/// change on the log grid is a candidate bracket, and grid minima that stay
/// positive are refined by golden-section search in case the curve dips
/// below zero between grid points.
fn solve_single(h: &Mat2, cfg: &PacConfig, i: usize, budget: &mut usize) -> Option<PacPoint> {
    let floor = cfg.lambda_floor;
    let at = |l: f64| {
        let mut lambda = [floor; NUM_BEAMS];
        lambda[i] = l;
        pac_point(h, lambda, cfg).ok()
    };
    let excess = |l: f64| at(l).map_or(f64::NAN, |p| p.powers[i] - cfg.power_budget[i]);

    let xs: Vec<f64> = std::iter::once(floor).chain(lambda_grid().map(|d| floor + d)).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| excess(x)).collect();
    let mut brackets = Vec::new();
    for k in 0..xs.len() - 1 {
        if ys[k] > 0.0 && ys[k + 1] <= 0.0 {
            brackets.push((xs[k], xs[k + 1]));
        }
        let interior = k > 0 && ys[k] > 0.0 && ys[k] <= ys[k - 1] && ys[k] <= ys[k + 1];
        if interior {
            let dip = golden_min(&excess, xs[k - 1], xs[k + 1]);
            if excess(dip) <= 0.0 {
                brackets.push((xs[k - 1], dip));
            }
        }
    }

    let mut best: Option<PacPoint> = None;
    for (a, b) in brackets {
        if *budget == 0 {
            break;
        }
        let Some(p) = root_in_bracket(&at, cfg, i, a, b, budget) else {
            continue;
        };
        if p.residual < cfg.residual_tolerance {
            return Some(p);
        }
        if best.as_ref().is_none_or(|q| p.residual < q.residual) {
            best = Some(p);
        }
    }
    best
}

/// Minimizer of `f` on `[a, b]` by golden-section search.
fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Safeguarded Newton for `p_i(lambda_i) = phi_i` with a sign change on `[a, b]`
/// (positive excess at `a`).
fn root_in_bracket(
    at: &dyn Fn(f64) -> Option<PacPoint>,
    cfg: &PacConfig,
    i: usize,
    mut a: f64,
    mut b: f64,
    budget: &mut usize,
) -> Option<PacPoint> {
    let floor = cfg.lambda_floor;
    let excess = |p: &PacPoint| p.powers[i] - cfg.power_budget[i];
    let own_residual = |p: &PacPoint| {
        let ex = excess(p);
        ((p.lambda[i] - floor) * ex).abs().max(ex.max(0.0))
    };
    let mut cur = at(b)?;
    while *budget > 0 {
        if own_residual(&cur) < cfg.residual_tolerance {
            return Some(cur);
        }
        *budget -= 1;
        let slope = power_jacobian(&cur)[i][i];
        let newton = cur.lambda[i] - excess(&cur) / slope;
        let next = if slope.is_finite() && slope != 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        cur = at(next)?;
        if excess(&cur) > 0.0 {
            a = next;
        } else {
            b = next;
        }
    }
    (own_residual(&cur) < cfg.residual_tolerance).then_some(cur)
}

/// Both antennas binding: solve `diag(W W^H) = phi` with Lambda above the
/// floor.
///
/// The power map is far from linear and its squared relative mismatch has
/// spurious valleys (typically with one Lambda entry running off to
/// infinity), so Levenberg-Marquardt in `ln(lambda - floor)` is started from
/// several points of a log grid: local minima along the diagonal, then grid
/// local minima, then well-separated low-cost points.
fn solve_both(h: &Mat2, cfg: &PacConfig, budget: &mut usize) -> Option<PacPoint> {
    let floor = cfg.lambda_floor;
    let grid: Vec<f64> = (0..=48).map(|k| (-6.0 + 0.25 * k as f64) * std::f64::consts::LN_10).collect();
    let n = grid.len();
    let cost = |u: [f64; 2]| {
        pac_point(h, u.map(|v| floor + v.exp()), cfg)
            .map(|p| relative_mismatch(&p, cfg).iter().map(|f| f * f).sum::<f64>())
            .unwrap_or(f64::INFINITY)
    };
    let table: Vec<f64> = grid.iter().flat_map(|a| grid.iter().map(move |b| [*a, *b])).map(cost).collect();
    // Seeds: grid local minima best first, then the cheapest remaining grid
    // points at least three cells from every seed (valleys running
    // diagonally between grid points have no grid local minimum).
    let mut minima: Vec<(f64, usize, usize)> = Vec::new();
    for r in 0..n {
        for c in 0..n {
            let v = table[r * n + c];
            let mut neighbours = (r.saturating_sub(1)..=(r + 1).min(n - 1))
                .flat_map(|rr| (c.saturating_sub(1)..=(c + 1).min(n - 1)).map(move |cc| rr * n + cc));
            if v.is_finite() && neighbours.all(|k| table[k] >= v) {
                minima.push((v, r, c));
            }
        }
    }
    minima.sort_by(|x, y| x.0.total_cmp(&y.0));
    // The diagonal (scalar Lambda, plain regularized MMSE) goes first: its
    // local minima usually sit in the basin of the physical solution.
    let mut diagonal: Vec<(f64, usize)> = (0..n)
        .filter(|&k| {
            let v = table[k * n + k];
            v.is_finite() && (k == 0 || table[(k - 1) * n + k - 1] >= v) && (k + 1 == n || table[(k + 1) * n + k + 1] >= v)
        })
        .map(|k| (table[k * n + k], k))
        .collect();
    diagonal.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut picked: Vec<(usize, usize)> = diagonal.into_iter().map(|(_, k)| (k, k)).collect();
    for (_, r, c) in minima {
        if !picked.contains(&(r, c)) {
            picked.push((r, c));
        }
    }
    let mut order: Vec<usize> = (0..n * n).filter(|&k| table[k].is_finite()).collect();
    order.sort_by(|&a, &b| table[a].total_cmp(&table[b]));
    for k in order {
        if picked.len() >= MAX_SEEDS {
            break;
        }
        let (r, c) = (k / n, k % n);
        if picked.iter().all(|&(a, b)| r.abs_diff(a).max(c.abs_diff(b)) >= 3) {
            picked.push((r, c));
        }
    }
    let seeds = picked.into_iter().map(|(r, c)| ((), [grid[r], grid[c]]));

    let mut best: Option<PacPoint> = None;
    for (_, u) in seeds.take(MAX_SEEDS) {
        if *budget == 0 {
            break;
        }
        if let Some(p) = levenberg_marquardt(h, cfg, u, budget) {
            if p.residual < cfg.residual_tolerance {
                return Some(p);
            }
            if best.as_ref().is_none_or(|b| p.residual < b.residual) {
                best = Some(p);
            }
        }
    }
    best
}

const MAX_SEEDS: usize = 16;
const LM_STEPS_PER_SEED: usize = 20;

fn relative_mismatch(p: &PacPoint, cfg: &PacConfig) -> [f64; 2] {
    [0, 1].map(|i| (p.powers[i] - cfg.power_budget[i]) / cfg.power_budget[i])
}

fn levenberg_marquardt(h: &Mat2, cfg: &PacConfig, mut u: [f64; 2], budget: &mut usize) -> Option<PacPoint> {
    let floor = cfg.lambda_floor;
    let eval = |u: [f64; 2]| pac_point(h, u.map(|v| floor + v.clamp(-60.0, 60.0).exp()), cfg).ok();
    let mut cur = eval(u)?;
    let mut f = relative_mismatch(&cur, cfg);
    let mut c = f[0] * f[0] + f[1] * f[1];
    let mut damping = 1e-3;
    let mut history = vec![c];
    for _ in 0..LM_STEPS_PER_SEED {
        if cur.residual < cfg.residual_tolerance || *budget == 0 {
            break;
        }
        // Near a root the cost collapses quadratically; a seed sliding
        // down a spurious valley only creeps, so give up on it early.
        if history.len() >= 4 && c > 0.5 * history[history.len() - 4] {
            break;
        }
        *budget -= 1;
        // d f_i / d u_j = (dp_i / dlambda_j) * (lambda_j - floor) / phi_i
        let dp = power_jacobian(&cur);
        let mut jac = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                jac[i][j] = dp[i][j] * (cur.lambda[j] - floor) / cfg.power_budget[i];
            }
        }
        let jtj = [
            [
                jac[0][0] * jac[0][0] + jac[1][0] * jac[1][0],
                jac[0][0] * jac[0][1] + jac[1][0] * jac[1][1],
            ],
            [
                jac[0][1] * jac[0][0] + jac[1][1] * jac[1][0],
                jac[0][1] * jac[0][1] + jac[1][1] * jac[1][1],
            ],
        ];
        let jtf = [jac[0][0] * f[0] + jac[1][0] * f[1], jac[0][1] * f[0] + jac[1][1] * f[1]];
        let mut improved = false;
        while damping < 1e12 {
            let a = [
                [jtj[0][0] * (1.0 + damping) + 1e-300, jtj[0][1]],
                [jtj[1][0], jtj[1][1] * (1.0 + damping) + 1e-300],
            ];
            if let Some(step) = solve2(&a, [-jtf[0], -jtf[1]]) {
                let next_u = [u[0] + step[0], u[1] + step[1]];
                if let Some(p) = eval(next_u) {
                    let nf = relative_mismatch(&p, cfg);
                    let nc = nf[0] * nf[0] + nf[1] * nf[1];
                    if nc < c {
                        (u, cur, f, c) = (next_u, p, nf, nc);
                        damping = (damping / 3.0).max(1e-12);
                        improved = true;
                        break;
                    }
                }
            }
            damping *= 4.0;
        }
        if !improved {
            break;
        }
        history.push(c);
    }
    Some(cur)
}

fn solve2(m: &[[f64; 2]; 2], rhs: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !(det.abs() > 1e-14 * scale * scale) {
        return None;
    }
    let x = [
        (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / det,
        (-m[1][0] * rhs[0] + m[0][0] * rhs[1]) / det,
    ];
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Divide each row by the sum of its entry moduli so that every antenna's
/// output magnitude is at most one for unit-modulus symbols.
pub fn normalize_rows(w: &PrecodingMatrix) -> Result<PrecodingMatrix> {
    let sums = w.row_sums();
    let mut out = w.w;
    for (i, a) in sums.iter().enumerate() {
        if !(*a > 0.0) {
            return Err(Error::ZeroRow { row: i });
        }
        for j in 0..NUM_BEAMS {
            out[(i, j)] /= *a;
        }
    }
    Ok(PrecodingMatrix {
        w: out,
        row_norms: Some(sums),
    })
}

/// Per-antenna transmit samples `x = W s` for one symbol pair.
#[inline]
pub fn apply_precoder(w: &PrecodingMatrix, s: &CVec2) -> CVec2 {
    w.w.mul_vec(s)
}

/// Precode two equal-length streams sample by sample.
pub fn apply_precoder_block(w: &PrecodingMatrix, streams: [&[C64]; NUM_BEAMS]) -> [Vec<C64>; NUM_BEAMS] {
    assert_eq!(streams[0].len(), streams[1].len());
    let mut out: [Vec<C64>; NUM_BEAMS] = Default::default();
    for o in out.iter_mut() {
        o.reserve(streams[0].len());
    }
    for (a, b) in streams[0].iter().zip(streams[1].iter()) {
        let x = apply_precoder(w, &[*a, *b]);
        out[0].push(x[0]);
        out[1].push(x[1]);
    }
    out
}

/// Worst cross-terminal leakage through channel `h`, in dB relative to the
/// desired gain: `max_u |(HW)_{u,v}|^2 / |(HW)_{u,u}|^2` over `v != u`.
pub fn leakage_db(h: &Mat2, w: &PrecodingMatrix) -> f64 {
    let g = *h * w.w;
    let mut worst = f64::NEG_INFINITY;
    for u in 0..NUM_BEAMS {
        for v in 0..NUM_BEAMS {
            if u != v {
                let r = g[(u, v)].norm_sqr() / g[(u, u)].norm_sqr();
                worst = worst.max(10.0 * r.log10());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn mat(rows: [[(f64, f64); 2]; 2]) -> Mat2 {
        Mat2([
            [c64(rows[0][0].0, rows[0][0].1), c64(rows[0][1].0, rows[0][1].1)],
            [c64(rows[1][0].0, rows[1][0].1), c64(rows[1][1].0, rows[1][1].1)],
        ])
    }

    /// `H^H (H H^H + s I)^-1` written out with explicit cofactors.
    fn mmse_oracle(h: &Mat2, s: f64) -> Mat2 {
        let mut g = [[C64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    g[i][j] += h[(i, k)] * h[(j, k)].conj();
                }
            }
            g[i][i] += s;
        }
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let inv = [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]];
        let mut w = Mat2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    w.0[i][j] += h[(k, i)].conj() * inv[k][j];
                }
            }
        }
        w
    }

    #[test]
    fn mmse_identity_channel() {
        let w = compute_mmse(&Mat2::identity(), 0.0).unwrap();
        assert!(w.w.max_abs_diff(&Mat2::identity()) < 1e-15);
    }

    #[test]
    fn mmse_scalar_channel() {
        let h = Mat2::diag_real([2.0, 2.0]);
        let w = compute_mmse(&h, 0.0).unwrap();
        assert!(w.w.max_abs_diff(&Mat2::diag_real([0.5, 0.5])) < 1e-15);
    }

    #[test]
    fn mmse_matches_direct_formula() {
        let h = mat([[(1.0, 0.0), (0.5, 0.0)], [(0.4, 0.2), (1.0, 0.0)]]);
        let w = compute_mmse(&h, 0.1).unwrap();
        assert!(w.w.max_abs_diff(&mmse_oracle(&h, 0.1)) < 1e-10);
    }

    #[test]
    fn mmse_rejects_rank_deficient_channel() {
        let h = Mat2::from_real([[1.0, 1.0], [1.0, 1.0]]);
        assert!(matches!(compute_mmse(&h, 0.0), Err(Error::SingularMatrix { .. })));
        // Regularization makes the Gram matrix invertible again.
        assert!(compute_mmse(&h, 0.1).is_ok());
    }

    #[test]
    fn mmse_converges_to_inverse_as_noise_vanishes() {
        let h = mat([[(1.0, 0.2), (0.5, -0.1)], [(0.3, 0.4), (0.9, 0.0)]]);
        let zf = compute_mmse(&h, 0.0).unwrap();
        assert!((h * zf.w).max_abs_diff(&Mat2::identity()) < 1e-9);
        let gaps: Vec<f64> = [1e-2, 1e-4, 1e-6]
            .iter()
            .map(|s| compute_mmse(&h, *s).unwrap().w.max_abs_diff(&zf.w))
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        assert!(gaps[2] < 1e-5);
    }

    #[test]
    fn pac_inactive_at_identity() {
        let sol = compute_mmse_pac(&Mat2::identity(), &PacConfig::default()).unwrap();
        assert_eq!(sol.lambda, [0.0, 0.0]);
        assert!(sol.precoder.w.max_abs_diff(&Mat2::identity()) < 1e-15);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn pac_symmetric_channel_gives_scalar_lambda() {
        // Equal row gains and a symmetric structure force lambda_1 = lambda_2.
        let h = mat([[(1.0, 0.0), (0.6, 0.0)], [(0.6, 0.0), (1.0, 0.0)]]);
        let cfg = PacConfig::default();
        let sol = compute_mmse_pac(&h, &cfg).unwrap();
        assert!(sol.lambda[0] > 0.0);
        assert!((sol.lambda[0] - sol.lambda[1]).abs() < 1e-8, "{:?}", sol.lambda);
        let mmse = compute_mmse(&h, sol.lambda[0]).unwrap();
        assert!(sol.precoder.w.max_abs_diff(&mmse.w) < 1e-8);
        let p = sol.precoder.antenna_powers();
        assert!((p[0] - 1.0).abs() < 1e-7 && (p[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn pac_reports_nonconvergence() {
        let h = mat([[(1.0, 0.0), (0.6, 0.0)], [(0.2, 0.0), (1.0, 0.0)]]);
        let cfg = PacConfig {
            power_budget: [0.5, 0.5],
            max_iterations: 1,
            residual_tolerance: 1e-14,
            ..PacConfig::default()
        };
        assert!(matches!(
            compute_mmse_pac(&h, &cfg),
            Err(Error::NonConvergence { iterations: 1, .. })
        ));
    }

    #[test]
    fn pac_floor_reduces_to_mmse_when_budget_is_loose() {
        let h = mat([[(1.0, 0.0), (0.3, 0.2)], [(0.1, 0.0), (1.0, 0.0)]]);
        let cfg = PacConfig {
            power_budget: [10.0, 10.0],
            lambda_floor: 0.2,
            ..PacConfig::default()
        };
        let sol = compute_mmse_pac(&h, &cfg).unwrap();
        assert_eq!(sol.lambda, [0.2, 0.2]);
        assert!(sol.precoder.w.max_abs_diff(&compute_mmse(&h, 0.2).unwrap().w) < 1e-15);
    }

    #[test]
    fn pac_config_validation() {
        let bad = PacConfig {
            power_budget: [1.0, 0.0],
            ..PacConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn normalize_keeps_normalized_rows() {
        let w = PrecodingMatrix::unnormalized(Mat2::from_real([[0.8, 0.2], [0.3, 0.7]]));
        let n = normalize_rows(&w).unwrap();
        assert!(n.w.max_abs_diff(&w.w) < 1e-15);
        assert_eq!(n.row_norms, Some([1.0, 1.0]));
    }

    #[test]
    fn normalize_divides_by_row_sums() {
        let w = PrecodingMatrix::unnormalized(Mat2::from_real([[1.0, 1.0], [2.0, 0.0]]));
        let n = normalize_rows(&w).unwrap();
        assert!(n.w.max_abs_diff(&Mat2::from_real([[0.5, 0.5], [1.0, 0.0]])) < 1e-15);
        assert_eq!(n.row_norms, Some([2.0, 2.0]));
    }

    #[test]
    fn normalize_rejects_zero_row() {
        let w = PrecodingMatrix::unnormalized(Mat2::from_real([[1.0, 1.0], [0.0, 0.0]]));
        assert_eq!(normalize_rows(&w), Err(Error::ZeroRow { row: 1 }));
    }

    #[test]
    fn precoder_application_examples() {
        let x = apply_precoder(&PrecodingMatrix::identity(), &[c64(1.0, 0.0), c64(0.0, 1.0)]);
        assert_eq!(x, [c64(1.0, 0.0), c64(0.0, 1.0)]);
        let w = normalize_rows(&PrecodingMatrix::unnormalized(Mat2::from_real([[1.0, 1.0], [2.0, 0.0]]))).unwrap();
        let x = apply_precoder(&w, &[c64(1.0, 0.0), c64(1.0, 0.0)]);
        assert!((x[0] - c64(1.0, 0.0)).norm() < 1e-15 && (x[1] - c64(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn normalized_output_supremum_is_one() {
        // Sweep both symbol phases at 1-degree resolution: the per-row maximum
        // of |w_i1 s1 + w_i2 s2| must reach 1 and never exceed it.
        let raw = mat([[(0.7, -0.3), (0.2, 0.9)], [(-0.4, 0.1), (1.1, 0.5)]]);
        let w = normalize_rows(&PrecodingMatrix::unnormalized(raw)).unwrap();
        let mut sup = [0.0f64; 2];
        for a in 0..360 {
            for b in 0..360 {
                let s = [
                    C64::from_polar(1.0, a as f64 * PI / 180.0),
                    C64::from_polar(1.0, b as f64 * PI / 180.0),
                ];
                let x = apply_precoder(&w, &s);
                for i in 0..2 {
                    sup[i] = sup[i].max(x[i].norm());
                }
            }
        }
        for s in sup {
            assert!(s <= 1.0 + 1e-12 && s > 1.0 - 1e-3, "sup {s}");
        }
        // Exactly aligned phases achieve the bound.
        for i in 0..2 {
            let s = [C64::from_polar(1.0, -w.w[(i, 0)].arg()), C64::from_polar(1.0, -w.w[(i, 1)].arg())];
            assert!((apply_precoder(&w, &s)[i].norm() - 1.0).abs() < 1e-12);
        }
    }

    fn arb_c64() -> impl Strategy<Value = C64> {
        (-1.5f64..1.5, -1.5f64..1.5).prop_map(|(re, im)| c64(re, im))
    }

    fn arb_mat() -> impl Strategy<Value = Mat2> {
        prop::array::uniform4(arb_c64()).prop_map(|v| Mat2([[v[0], v[1]], [v[2], v[3]]]))
    }

    proptest! {
        #[test]
        fn normalization_bounds_output(m in arb_mat(), phases in prop::array::uniform2(0.0f64..(2.0 * PI))) {
            prop_assume!(m.row(0).iter().any(|v| v.norm() > 1e-3) && m.row(1).iter().any(|v| v.norm() > 1e-3));
            let w = normalize_rows(&PrecodingMatrix::unnormalized(m)).unwrap();
            for i in 0..2 {
                let s: f64 = w.w.row(i).iter().map(|v| v.norm()).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
            let s = [C64::from_polar(1.0, phases[0]), C64::from_polar(1.0, phases[1])];
            let x = apply_precoder(&w, &s);
            prop_assert!(x[0].norm() <= 1.0 + 1e-12 && x[1].norm() <= 1.0 + 1e-12);
            let direct = [w.w[(0,0)] * s[0] + w.w[(0,1)] * s[1], w.w[(1,0)] * s[0] + w.w[(1,1)] * s[1]];
            prop_assert!((x[0] - direct[0]).norm() < 1e-15 && (x[1] - direct[1]).norm() < 1e-15);
        }

        #[test]
        fn normalization_is_idempotent(m in arb_mat()) {
            prop_assume!(m.row(0).iter().any(|v| v.norm() > 1e-3) && m.row(1).iter().any(|v| v.norm() > 1e-3));
            let once = normalize_rows(&PrecodingMatrix::unnormalized(m)).unwrap();
            let twice = normalize_rows(&once).unwrap();
            prop_assert!(twice.w.max_abs_diff(&once.w) < 1e-15);
        }

        #[test]
        fn normalization_equals_column_scaling_of_channel(h in arb_mat(), m in arb_mat()) {
            prop_assume!(m.row(0).iter().any(|v| v.norm() > 1e-3) && m.row(1).iter().any(|v| v.norm() > 1e-3));
            // H * (D^-1 W) == (H D^-1) * W with D = diag(a_1, a_2).
            let w = normalize_rows(&PrecodingMatrix::unnormalized(m)).unwrap();
            let a = w.row_norms.unwrap();
            let d_inv = Mat2::diag_real([1.0 / a[0], 1.0 / a[1]]);
            prop_assert!((h * w.w).max_abs_diff(&((h * d_inv) * m)) < 1e-12);
        }

        #[test]
        fn zero_noise_mmse_inverts_channel(h in arb_mat()) {
            prop_assume!(h.condition_number() <= 1e4);
            let w = compute_mmse(&h, 0.0).unwrap();
            prop_assert!((h * w.w).max_abs_diff(&Mat2::identity()) < 1e-9);
        }

        #[test]
        fn pac_fixed_point_is_feasible(h in arb_mat(), budget in prop::array::uniform2(0.2f64..2.0)) {
            // Some (H, phi) pairs admit no complementary Lambda at all; only
            // a returned solution is checked here.
            prop_assume!(h.condition_number() <= 1e2);
            let cfg = PacConfig { power_budget: budget, ..PacConfig::default() };
            match compute_mmse_pac(&h, &cfg) {
                Ok(sol) => {
                    let p = sol.precoder.antenna_powers();
                    for i in 0..2 {
                        prop_assert!(p[i] <= budget[i] + cfg.residual_tolerance);
                        prop_assert!(sol.lambda[i] >= 0.0);
                    }
                    prop_assert!(sol.residual < cfg.residual_tolerance);
                }
                Err(e) => prop_assert!(matches!(e, Error::NonConvergence { .. }), "{e}"),
            }
        }

        #[test]
        fn pac_finds_planted_solution(
            h in arb_mat(),
            lambda in prop::array::uniform2(0.0f64..2.0),
            slack in prop::array::uniform2(0.0f64..0.5),
        ) {
            // Budgets built from a known Lambda: tight where lambda > 0,
            // loose where it is zero. A solution exists by construction.
            prop_assume!(h.condition_number() <= 1e2);
            let lambda = lambda.map(|l| if l < 0.5 { 0.0 } else { l });
            let w = h.adjoint() * (h * h.adjoint() + Mat2::diag_real(lambda)).inverse().unwrap();
            let p = (w * w.adjoint()).diag_re();
            let budget = [0, 1].map(|i| if lambda[i] > 0.0 { p[i] } else { p[i] + slack[i] + 1e-3 });
            // Skip planted points where the binding powers are stationary in
            // Lambda (tangential roots); elasticities by finite differences.
            let powers = |l: [f64; 2]| {
                let w = h.adjoint() * (h * h.adjoint() + Mat2::diag_real(l)).inverse().unwrap();
                (w * w.adjoint()).diag_re()
            };
            let mut el = [[0.0; 2]; 2];
            for j in 0..2 {
                let mut l = lambda;
                let dl = 1e-6 * lambda[j].max(1.0);
                l[j] += dl;
                let q = powers(l);
                for i in 0..2 {
                    el[i][j] = (q[i] - p[i]) / dl * lambda[j].max(1e-3) / p[i];
                }
            }
            let active: Vec<usize> = (0..2).filter(|&i| lambda[i] > 0.0).collect();
            match active.as_slice() {
                [i] => prop_assume!(el[*i][*i].abs() > 0.1),
                [_, _] => prop_assume!((el[0][0] * el[1][1] - el[0][1] * el[1][0]).abs() > 0.1),
                _ => {}
            }
            let cfg = PacConfig { power_budget: budget, ..PacConfig::default() };
            let sol = compute_mmse_pac(&h, &cfg).unwrap();
            prop_assert!(sol.residual < cfg.residual_tolerance);
        }
    }
}
