//! Satellite segment: two transponder chains with free-running local
//! oscillators, per-terminal link gains, and the dual-polarization mixing
//! at each terminal that turns two beams into co-channel interference.
//!
//! Beam 0 is relayed on the V polarization and beam 1 on H. Terminal `u`
//! receives
//!
//! ```text
//! y_u = sqrt(alpha_u) (h_u0 z_0 + n_v) + sqrt(beta_u) (h_u1 z_1 + n_h)
//! ```
//!
//! where `z_b` is beam `b` after its transponder.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::framing::stream::SymbolStream;
use crate::linalg::{wrap_phase, Mat2, C64, NUM_BEAMS};
use crate::noise::{GaussianSource, NoiseSpec};

/// One transponder's gain and local-oscillator state.
///
/// `lo_phase` is the total carrier rotation applied to the next symbol; it
/// advances by `2 pi lo_frequency_offset T` per symbol plus a Wiener
/// increment of variance `phase_noise_rate * T`.
#[derive(Debug, Clone)]
pub struct TransponderState {
    pub lo_frequency_offset: f64,
    pub lo_phase: f64,
    /// Random-walk intensity in rad^2/s.
    pub phase_noise_rate: f64,
    pub gain: C64,
    walk: GaussianSource,
}

impl TransponderState {
    pub fn new(lo_frequency_offset: f64, lo_phase: f64, phase_noise_rate: f64, gain: C64, seed: u64) -> Self {
        assert!(phase_noise_rate >= 0.0, "phase noise rate must be non-negative");
        assert!(
            gain.norm() > 0.0 && gain.re.is_finite() && gain.im.is_finite(),
            "gain must be finite and nonzero"
        );
        TransponderState {
            lo_frequency_offset,
            lo_phase: wrap_phase(lo_phase),
            phase_noise_rate,
            gain,
            walk: GaussianSource::new(NoiseSpec::new(0.0, seed)),
        }
    }

    /// Ideal transponder: unit gain, no offsets.
    pub fn ideal(seed: u64) -> Self {
        Self::new(0.0, 0.0, 0.0, C64::new(1.0, 0.0), seed)
    }

    /// Advance the oscillator over `symbols` symbols that are not observed.
    /// One Gaussian draw covers the whole gap, which has the same law as
    /// `symbols` separate increments.
    pub fn skip(&mut self, symbols: usize, symbol_rate: f64) {
        if symbols == 0 {
            return;
        }
        let t = symbols as f64 / symbol_rate;
        let mut dphi = TAU * self.lo_frequency_offset * t;
        if self.phase_noise_rate > 0.0 {
            dphi += (self.phase_noise_rate * t).sqrt() * self.walk.standard_normal();
        }
        self.lo_phase = wrap_phase(self.lo_phase + dphi);
    }

    fn step(&mut self, symbol_rate: f64) {
        let t = 1.0 / symbol_rate;
        let mut dphi = TAU * self.lo_frequency_offset * t;
        if self.phase_noise_rate > 0.0 {
            dphi += (self.phase_noise_rate * t).sqrt() * self.walk.standard_normal();
        }
        // Wrapping every symbol would cost more than it saves; callers see
        // wrapped values at block boundaries.
        self.lo_phase += dphi;
    }

    /// Deterministic part of the rotation `offset` symbols ahead.
    pub fn predicted_rotation(&self, offset: f64, symbol_rate: f64) -> C64 {
        C64::from_polar(1.0, self.lo_phase + TAU * self.lo_frequency_offset * offset / symbol_rate)
    }
}

/// Pass a block through a transponder; `state` ends at the end of the
/// block. Unstored stretches of a sparse stream advance the oscillator
/// without producing samples.
pub fn transponder_pass(x: &SymbolStream, state: &mut TransponderState, symbol_rate: f64) -> SymbolStream {
    assert!(symbol_rate > 0.0, "symbol rate must be positive");
    let mut out = x.clone();
    let mut pos = 0;
    for chunk in out.chunks_mut() {
        state.skip(chunk.start - pos, symbol_rate);
        for v in chunk.samples.iter_mut() {
            *v *= state.gain * C64::from_polar(1.0, state.lo_phase);
            state.step(symbol_rate);
        }
        state.lo_phase = wrap_phase(state.lo_phase);
        pos = chunk.end();
    }
    state.skip(x.len() - pos, symbol_rate);
    out
}

/// Dense-block convenience wrapper around [`transponder_pass`].
pub fn transponder_pass_block(x: &[C64], state: &mut TransponderState, symbol_rate: f64) -> Vec<C64> {
    transponder_pass(&SymbolStream::dense(x.to_vec()), state, symbol_rate)
        .into_dense()
        .expect("dense in, dense out")
}

/// Terminal-side power weights of the two polarizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl MixingConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let cfg = MixingConfig { alpha, beta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        if !ok(self.alpha) || !ok(self.beta) || self.alpha + self.beta <= 0.0 {
            return Err(Error::config(
                "mixing",
                format!(
                    "need alpha, beta in [0, 1] with alpha + beta > 0, got {}, {}",
                    self.alpha, self.beta
                ),
            ));
        }
        Ok(())
    }

    /// Amplitude weights `(sqrt(alpha), sqrt(beta))`.
    pub fn amplitudes(&self) -> [f64; 2] {
        [self.alpha.sqrt(), self.beta.sqrt()]
    }
}

/// `sqrt(alpha) (y_v + n_v) + sqrt(beta) (y_h + n_h)` with independent
/// noise of variance `noise.variance` on each polarization.
pub fn mix_polarizations(y_v: &[C64], y_h: &[C64], cfg: &MixingConfig, noise: NoiseSpec) -> Result<Vec<C64>> {
    mix_polarizations_with(y_v, y_h, cfg, &mut GaussianSource::new(noise))
}

/// As [`mix_polarizations`], drawing from a persistent noise source.
pub fn mix_polarizations_with(y_v: &[C64], y_h: &[C64], cfg: &MixingConfig, noise: &mut GaussianSource) -> Result<Vec<C64>> {
    if y_v.len() != y_h.len() {
        return Err(Error::LengthMismatch {
            expected: y_v.len(),
            actual: y_h.len(),
        });
    }
    let [a, b] = cfg.amplitudes();
    Ok(y_v
        .iter()
        .zip(y_h)
        .map(|(v, h)| {
            let n_v = noise.sample();
            let n_h = noise.sample();
            (v + n_v) * a + (h + n_h) * b
        })
        .collect())
}

/// Link gains `h[u][b]` from beam `b` to terminal `u`, with an optional
/// slow random walk on their magnitudes.
#[derive(Debug, Clone)]
pub struct LinkGeometry {
    gains: [[C64; NUM_BEAMS]; NUM_BEAMS],
    /// Std of the magnitude random walk in dB per sqrt(hour).
    pub drift_db_per_hour: f64,
    /// Time acceleration of the drift (1 = real time).
    pub drift_time_scale: f64,
    offsets_db: [[f64; NUM_BEAMS]; NUM_BEAMS],
    walk: GaussianSource,
}

impl LinkGeometry {
    pub fn new(gains: [[C64; NUM_BEAMS]; NUM_BEAMS], drift_db_per_hour: f64, drift_time_scale: f64, seed: u64) -> Self {
        LinkGeometry {
            gains,
            drift_db_per_hour,
            drift_time_scale,
            offsets_db: [[0.0; NUM_BEAMS]; NUM_BEAMS],
            walk: GaussianSource::new(NoiseSpec::new(0.0, seed)),
        }
    }

    /// Static geometry from gains in dB and phases in degrees.
    pub fn from_db(gain_db: [[f64; 2]; 2], phase_deg: [[f64; 2]; 2]) -> Self {
        let mut g = [[C64::new(0.0, 0.0); 2]; 2];
        for u in 0..2 {
            for b in 0..2 {
                g[u][b] = C64::from_polar(10f64.powf(gain_db[u][b] / 20.0), phase_deg[u][b].to_radians());
            }
        }
        Self::new(g, 0.0, 1.0, 0)
    }

    pub fn identity() -> Self {
        Self::new(Mat2::identity().0, 0.0, 1.0, 0)
    }

    /// Current gain of beam `b` at terminal `u`.
    pub fn gain(&self, u: usize, b: usize) -> C64 {
        self.gains[u][b] * 10f64.powf(self.offsets_db[u][b] / 20.0)
    }

    pub fn matrix(&self) -> Mat2 {
        Mat2([[self.gain(0, 0), self.gain(0, 1)], [self.gain(1, 0), self.gain(1, 1)]])
    }

    /// Advance the magnitude drift by `seconds` of simulated time.
    pub fn advance(&mut self, seconds: f64) {
        if self.drift_db_per_hour <= 0.0 || seconds <= 0.0 {
            return;
        }
        let std = self.drift_db_per_hour * (seconds * self.drift_time_scale / 3600.0).sqrt();
        for row in self.offsets_db.iter_mut() {
            for v in row.iter_mut() {
                *v += std * self.walk.standard_normal();
            }
        }
    }
}

/// Per-terminal receive chain: polarization weights and front-end noise.
#[derive(Debug, Clone)]
pub struct TerminalFrontEnd {
    pub mixing: MixingConfig,
    pub noise: GaussianSource,
}

#[derive(Debug, Clone)]
pub struct ForwardLinkOutput {
    /// Received stream of each terminal, same shape as the transmit streams.
    pub received: Vec<SymbolStream>,
    /// End-to-end gain from beam `b` to terminal `u` at the block midpoint,
    /// deterministic part only (phase noise inside the block excluded).
    pub effective: Mat2,
}

/// Pass both beams through their transponders and deliver the mix to each
/// terminal.
pub fn forward_link(
    tx: &[SymbolStream; NUM_BEAMS],
    geometry: &LinkGeometry,
    transponders: &mut [TransponderState; NUM_BEAMS],
    terminals: &mut [TerminalFrontEnd; NUM_BEAMS],
    symbol_rate: f64,
) -> Result<ForwardLinkOutput> {
    if !tx[0].same_shape(&tx[1]) {
        return Err(Error::LengthMismatch {
            expected: tx[0].len(),
            actual: tx[1].len(),
        });
    }
    let mid = tx[0].len() as f64 / 2.0;
    let mut effective = Mat2::zeros();
    for (u, fe) in terminals.iter().enumerate() {
        let amp = fe.mixing.amplitudes();
        for b in 0..NUM_BEAMS {
            effective[(u, b)] = geometry.gain(u, b) * transponders[b].gain * transponders[b].predicted_rotation(mid, symbol_rate) * amp[b];
        }
    }

    let relayed: Vec<SymbolStream> = tx
        .iter()
        .zip(transponders.iter_mut())
        .map(|(x, state)| transponder_pass(x, state, symbol_rate))
        .collect();

    let mut received = Vec::with_capacity(NUM_BEAMS);
    for (u, fe) in terminals.iter_mut().enumerate() {
        let (g_v, g_h) = (geometry.gain(u, 0), geometry.gain(u, 1));
        let mut rx = relayed[0].zeros_like();
        for ((out, zv), zh) in rx.chunks_mut().iter_mut().zip(relayed[0].chunks()).zip(relayed[1].chunks()) {
            let y_v: Vec<C64> = zv.samples.iter().map(|s| s * g_v).collect();
            let y_h: Vec<C64> = zh.samples.iter().map(|s| s * g_h).collect();
            out.samples = mix_polarizations_with(&y_v, &y_h, &fe.mixing, &mut fe.noise)?;
        }
        received.push(rx);
    }
    Ok(ForwardLinkOutput { received, effective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framing::stream::Chunk;
    use crate::linalg::c64;
    use crate::noise::seeded_gaussian_stream;

    fn ones(n: usize) -> Vec<C64> {
        vec![c64(1.0, 0.0); n]
    }

    #[test]
    fn ideal_transponder_is_identity() {
        let x = seeded_gaussian_stream(NoiseSpec::new(1.0, 3), 500);
        let y = transponder_pass_block(&x, &mut TransponderState::ideal(1), 1e6);
        assert_eq!(x, y);
    }

    #[test]
    fn frequency_offset_rotates_one_turn() {
        // 100 Hz at 1 Msym/s over 1e4 symbols is exactly one turn.
        let mut st = TransponderState::new(100.0, 0.0, 0.0, c64(1.0, 0.0), 1);
        let y = transponder_pass_block(&ones(10_000), &mut st, 1e6);
        let per_symbol = TAU * 100.0 / 1e6;
        for (t, v) in y.iter().enumerate().step_by(997) {
            assert!((v - C64::from_polar(1.0, per_symbol * t as f64)).norm() < 1e-9);
        }
        assert!(wrap_phase(st.lo_phase).abs() < 1e-9, "{}", st.lo_phase);
    }

    #[test]
    fn sparse_pass_matches_dense_without_phase_noise() {
        let mut a = TransponderState::new(37.0, 0.4, 0.0, c64(0.5, 0.5), 1);
        let mut b = a.clone();
        let x = seeded_gaussian_stream(NoiseSpec::new(1.0, 9), 2000);
        let dense = transponder_pass_block(&x, &mut a, 2e6);
        let sparse = SymbolStream::sparse(
            2000,
            vec![
                Chunk {
                    start: 100,
                    samples: x[100..150].to_vec(),
                },
                Chunk {
                    start: 1500,
                    samples: x[1500..1600].to_vec(),
                },
            ],
        );
        let out = transponder_pass(&sparse, &mut b, 2e6);
        assert!(out
            .window(100, 50)
            .unwrap()
            .iter()
            .zip(&dense[100..150])
            .all(|(p, q)| (p - q).norm() < 1e-9));
        assert!(out
            .window(1500, 100)
            .unwrap()
            .iter()
            .zip(&dense[1500..1600])
            .all(|(p, q)| (p - q).norm() < 1e-9));
        assert!((wrap_phase(a.lo_phase - b.lo_phase)).abs() < 1e-9);
    }

    #[test]
    fn phase_walk_variance_matches_rate() {
        // Increment over N symbols has variance r N T. Check the sample
        // variance over 100 seeded runs against its chi-square spread.
        let (rate, n, fs) = (50.0, 2000usize, 1e6);
        let runs = 100;
        let incs: Vec<f64> = (0..runs)
            .map(|s| {
                let mut st = TransponderState::new(0.0, 0.0, rate, c64(1.0, 0.0), 100 + s);
                let y = transponder_pass_block(&ones(n + 1), &mut st, fs);
                (y[n] * y[0].conj()).arg()
            })
            .collect();
        let var = incs.iter().map(|v| v * v).sum::<f64>() / runs as f64;
        let want = rate * n as f64 / fs;
        // Std of a 100-sample variance estimate is want * sqrt(2/100).
        assert!((var - want).abs() < 3.0 * want * (2.0 / runs as f64).sqrt(), "{var} vs {want}");
    }

    #[test]
    fn gap_skip_has_same_law_as_steps() {
        let (rate, fs) = (200.0, 1e6);
        let runs = 400;
        let var = (0..runs)
            .map(|s| {
                let mut st = TransponderState::new(0.0, 0.0, rate, c64(1.0, 0.0), s);
                st.skip(5000, fs);
                st.lo_phase * st.lo_phase
            })
            .sum::<f64>()
            / runs as f64;
        let want = rate * 5000.0 / fs;
        assert!((var - want).abs() < 4.0 * want * (2.0 / runs as f64).sqrt());
    }

    #[test]
    fn mixing_passes_single_polarization() {
        let y_v = seeded_gaussian_stream(NoiseSpec::new(1.0, 1), 100);
        let y_h = seeded_gaussian_stream(NoiseSpec::new(1.0, 2), 100);
        let out = mix_polarizations(&y_v, &y_h, &MixingConfig::new(1.0, 0.0).unwrap(), NoiseSpec::new(0.0, 0)).unwrap();
        assert_eq!(out, y_v);
    }

    #[test]
    fn mixing_equal_halves_of_orthogonal_signals() {
        // Alternating signs make the two constant-power signals orthogonal.
        let y_v = ones(1000);
        let y_h: Vec<C64> = (0..1000).map(|t| c64(if t % 2 == 0 { 1.0 } else { -1.0 }, 0.0)).collect();
        let out = mix_polarizations(&y_v, &y_h, &MixingConfig::new(0.5, 0.5).unwrap(), NoiseSpec::new(0.0, 0)).unwrap();
        let p = out.iter().map(|v| v.norm_sqr()).sum::<f64>() / 1000.0;
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixing_power_accounting() {
        let n = 1_000_000;
        let (pv, ph, s2) = (1.3, 0.6, 0.1);
        let y_v = seeded_gaussian_stream(NoiseSpec::new(pv, 11), n);
        let y_h = seeded_gaussian_stream(NoiseSpec::new(ph, 12), n);
        let out = mix_polarizations(&y_v, &y_h, &MixingConfig::new(0.7, 0.3).unwrap(), NoiseSpec::new(s2, 13)).unwrap();
        let p = out.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
        let want = 0.7 * pv + 0.3 * ph + (0.7 + 0.3) * s2;
        assert!((p / want - 1.0).abs() < 0.01, "{p} vs {want}");
    }

    #[test]
    fn mixing_rejects_length_mismatch() {
        let r = mix_polarizations(&ones(3), &ones(4), &MixingConfig::new(0.5, 0.5).unwrap(), NoiseSpec::new(0.0, 0));
        assert!(matches!(r, Err(Error::LengthMismatch { .. })));
        assert!(MixingConfig::new(0.0, 0.0).is_err());
        assert!(MixingConfig::new(1.2, 0.0).is_err());
    }

    fn front_ends(mix: [(f64, f64); 2], var: f64) -> [TerminalFrontEnd; 2] {
        [0, 1].map(|u| TerminalFrontEnd {
            mixing: MixingConfig::new(mix[u].0, mix[u].1).unwrap(),
            noise: GaussianSource::new(NoiseSpec::new(var, 50 + u as u64)),
        })
    }

    #[test]
    fn decoupled_terminals_receive_own_beam() {
        let x0 = seeded_gaussian_stream(NoiseSpec::new(1.0, 1), 300);
        let x1 = seeded_gaussian_stream(NoiseSpec::new(1.0, 2), 300);
        let tx = [SymbolStream::dense(x0.clone()), SymbolStream::dense(x1.clone())];
        let mut tp = [TransponderState::ideal(1), TransponderState::ideal(2)];
        let mut fe = front_ends([(1.0, 0.0), (0.0, 1.0)], 0.0);
        let out = forward_link(&tx, &LinkGeometry::identity(), &mut tp, &mut fe, 1e6).unwrap();
        assert_eq!(out.received[0].as_dense().unwrap(), x0.as_slice());
        assert_eq!(out.received[1].as_dense().unwrap(), x1.as_slice());
    }

    #[test]
    fn least_squares_fit_recovers_static_channel() {
        let h = Mat2([[c64(0.9, 0.1), c64(-0.3, 0.4)], [c64(0.2, -0.5), c64(1.1, 0.0)]]);
        let geometry = LinkGeometry::new(h.0, 0.0, 1.0, 0);
        let n = 400;
        let x0 = seeded_gaussian_stream(NoiseSpec::new(1.0, 5), n);
        let x1 = seeded_gaussian_stream(NoiseSpec::new(1.0, 6), n);
        let tx = [SymbolStream::dense(x0.clone()), SymbolStream::dense(x1.clone())];
        let mut tp = [TransponderState::ideal(1), TransponderState::ideal(2)];
        let mut fe = front_ends([(1.0, 1.0), (1.0, 1.0)], 0.0);
        let out = forward_link(&tx, &geometry, &mut tp, &mut fe, 1e6).unwrap();
        // Normal equations for y = a x0 + b x1, solved independently.
        let g = |p: &[C64], q: &[C64]| p.iter().zip(q).map(|(a, b)| a.conj() * b).sum::<C64>();
        let gram = Mat2([[g(&x0, &x0), g(&x0, &x1)], [g(&x1, &x0), g(&x1, &x1)]]);
        for u in 0..2 {
            let y = out.received[u].as_dense().unwrap();
            let coef = gram.inverse().unwrap().mul_vec(&[g(&x0, y), g(&x1, y)]);
            assert!((coef[0] - h[(u, 0)]).norm() < 1e-9);
            assert!((coef[1] - h[(u, 1)]).norm() < 1e-9);
            assert!((out.effective[(u, 0)] - h[(u, 0)]).norm() < 1e-12);
        }
    }

    #[test]
    fn interferer_five_db_below() {
        // Terminal 1 sees its own beam 5 dB above the other one.
        let geometry = LinkGeometry::from_db([[0.0, 0.0], [-5.0, 0.0]], [[0.0; 2]; 2]);
        let n = 1_000_000;
        let x0 = seeded_gaussian_stream(NoiseSpec::new(1.0, 21), n);
        let x1 = seeded_gaussian_stream(NoiseSpec::new(1.0, 22), n);
        let mut tp = [TransponderState::ideal(1), TransponderState::ideal(2)];
        let mut fe = front_ends([(1.0, 1.0), (1.0, 0.0)], 0.0);
        let only0 = forward_link(
            &[SymbolStream::dense(x0.clone()), SymbolStream::dense(vec![c64(0.0, 0.0); n])],
            &geometry,
            &mut tp,
            &mut fe,
            1e6,
        )
        .unwrap();
        fe[1].mixing = MixingConfig::new(0.0, 1.0).unwrap();
        let only1 = forward_link(
            &[SymbolStream::dense(vec![c64(0.0, 0.0); n]), SymbolStream::dense(x1)],
            &geometry,
            &mut tp,
            &mut fe,
            1e6,
        )
        .unwrap();
        let power = |s: &SymbolStream| s.as_dense().unwrap().iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
        let ratio_db = 10.0 * (power(&only1.received[1]) / power(&only0.received[1])).log10();
        assert!((ratio_db - 5.0).abs() < 0.1, "{ratio_db}");
    }

    #[test]
    fn differential_rotation_rate() {
        // Delta f_1 - Delta f_0 = D: the effective-channel ratio advances by
        // 2 pi D T per symbol.
        let fs = 1e6;
        let d = 30.0;
        let mut tp = [
            TransponderState::new(12.0, 0.0, 0.0, c64(1.0, 0.0), 1),
            TransponderState::new(12.0 + d, 0.5, 0.0, c64(1.0, 0.0), 2),
        ];
        let n = 5000;
        let tx = [SymbolStream::dense(ones(n)), SymbolStream::dense(ones(n))];
        let mut fe = front_ends([(1.0, 0.0), (0.0, 1.0)], 0.0);
        let out = forward_link(&tx, &LinkGeometry::identity(), &mut tp, &mut fe, fs).unwrap();
        let y0 = out.received[0].as_dense().unwrap();
        let y1 = out.received[1].as_dense().unwrap();
        for t in [1usize, 100, 4000] {
            let step = (y1[t] * y0[t].conj() * (y1[t - 1] * y0[t - 1].conj()).conj()).arg();
            assert!((step - TAU * d / fs).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seeds_same_streams() {
        let run = || {
            let mut tp = [
                TransponderState::new(5.0, 0.0, 10.0, c64(1.0, 0.0), 1),
                TransponderState::new(-5.0, 0.0, 10.0, c64(1.0, 0.0), 2),
            ];
            let mut fe = front_ends([(1.0, 1.0), (1.0, 1.0)], 0.1);
            let tx = [SymbolStream::dense(ones(100)), SymbolStream::dense(ones(100))];
            forward_link(&tx, &LinkGeometry::identity(), &mut tp, &mut fe, 1e6)
                .unwrap()
                .received
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn drift_moves_magnitudes_slowly() {
        let mut g = LinkGeometry::new(Mat2::identity().0, 0.05, 1.0, 4);
        g.advance(3600.0);
        let db = 20.0 * g.gain(0, 0).norm().log10();
        assert!(db.abs() < 0.3 && db != 0.0, "{db}");
        assert_eq!(g.gain(0, 0).arg(), 0.0);
    }
}
