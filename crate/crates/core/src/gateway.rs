//! Gateway controller: CSI ingestion, differential phase/frequency
//! pre-compensation, precoder selection and superframe transmission.

use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::framing::pilots::{build_pilot_set, PilotSet};
use crate::framing::stream::SymbolStream;
use crate::framing::superframe::{build_superframe, FramePayload, Segment, SuperframeLayout};
use crate::linalg::{wrap_phase, Mat2, C64, NUM_BEAMS};
use crate::precoding::{compute_mmse, compute_mmse_pac, normalize_rows, PacConfig, PacSolution, PrecodingMatrix};
use crate::terminal::CsiReport;

pub const DEFAULT_STALENESS_S: f64 = 2.0;
pub const DEFAULT_MAX_NCO_FREQUENCY: f64 = 1000.0;
/// Loop gains; tuned against a 50 Hz offset with 0.5 s feedback latency.
pub const DEFAULT_K_F: f64 = 0.2;
pub const DEFAULT_K_P: f64 = 0.3;
pub const DEFAULT_K_I: f64 = 0.05;
pub const DEFAULT_LOCK_HZ: f64 = 1.0;
/// Reports per terminal averaged into the MMSE regularizer.
pub const DEFAULT_SIGMA2_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrecoderMode {
    Unprecoded,
    Mmse,
    MmsePac,
}

impl PrecoderMode {
    pub fn name(self) -> &'static str {
        match self {
            PrecoderMode::Unprecoded => "unprecoded",
            PrecoderMode::Mmse => "mmse",
            PrecoderMode::MmsePac => "mmse_pac",
        }
    }
}

impl fmt::Display for PrecoderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrecoderMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "unprecoded" | "none" => Ok(PrecoderMode::Unprecoded),
            "mmse" => Ok(PrecoderMode::Mmse),
            "mmse_pac" | "pac" => Ok(PrecoderMode::MmsePac),
            other => Err(format!("unknown precoder mode `{other}` (expected unprecoded, mmse or mmse_pac)")),
        }
    }
}

/// Piece of the NCO trajectory: from `start` on, the rotation is
/// `phase + 2 pi frequency (n - start) T`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct NcoSegment {
    start: u64,
    frequency: f64,
    phase: f64,
}

/// Tracked differential LO state at the newest measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LoEstimate {
    at: u64,
    phase: f64,
    frequency: f64,
}

/// Rotation applied to beam 1 to cancel the differential LO drift.
///
/// The state keeps a short history of its own trajectory so that a report
/// measured at an earlier symbol can be compared with what was applied at
/// that time.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensationState {
    /// Frequency gain while acquiring.
    pub k_f: f64,
    /// Phase gain while tracking.
    pub k_p: f64,
    /// Frequency gain on the phase innovation while tracking.
    pub k_i: f64,
    /// Coarse frequency disagreement above which the loop re-acquires, Hz.
    pub lock_hz: f64,
    pub enabled: bool,
    pub max_frequency: f64,
    pub symbol_rate: f64,
    history: VecDeque<NcoSegment>,
    estimate: Option<LoEstimate>,
}

impl CompensationState {
    pub fn new(k_f: f64, k_p: f64, max_frequency: f64, symbol_rate: f64) -> Self {
        assert!(symbol_rate > 0.0 && max_frequency > 0.0);
        CompensationState {
            k_f,
            k_p,
            k_i: DEFAULT_K_I,
            lock_hz: DEFAULT_LOCK_HZ,
            enabled: true,
            max_frequency,
            symbol_rate,
            history: VecDeque::from([NcoSegment {
                start: 0,
                frequency: 0.0,
                phase: 0.0,
            }]),
            estimate: None,
        }
    }

    pub fn with_defaults(symbol_rate: f64) -> Self {
        Self::new(DEFAULT_K_F, DEFAULT_K_P, DEFAULT_MAX_NCO_FREQUENCY, symbol_rate)
    }

    fn current(&self) -> &NcoSegment {
        self.history.back().expect("history is never empty")
    }

    pub fn nco_frequency(&self) -> f64 {
        self.current().frequency
    }

    /// Phase of the current segment at its start, wrapped.
    pub fn nco_phase(&self) -> f64 {
        self.current().phase
    }

    fn segment_at(&self, symbol: u64) -> &NcoSegment {
        self.history
            .iter()
            .rev()
            .find(|s| s.start <= symbol)
            .unwrap_or_else(|| self.history.front().unwrap())
    }

    /// Frequency that was applied at `symbol`.
    pub fn frequency_at(&self, symbol: u64) -> f64 {
        self.segment_at(symbol).frequency
    }

    /// Unwrapped rotation applied at `symbol`, relative to the segment
    /// containing it.
    pub fn rotation_at(&self, symbol: u64) -> f64 {
        let s = self.segment_at(symbol);
        s.phase + TAU * s.frequency * (symbol as f64 - s.start as f64) / self.symbol_rate
    }

    /// Discontinuities introduced in the rotation since `since` beyond
    /// steady rotation at the current frequency, i.e. what a channel
    /// measured at `since` must be rotated by to match `now`.
    pub fn rotation_change(&self, since: u64, now: u64) -> f64 {
        let expected = TAU * self.nco_frequency() * (now as f64 - since as f64) / self.symbol_rate;
        wrap_phase(self.rotation_at(now) - self.rotation_at(since) - expected)
    }

    /// Set a new trajectory from `now` on.
    fn retune(&mut self, now: u64, frequency: f64, phase: f64) {
        let frequency = frequency.clamp(-self.max_frequency, self.max_frequency);
        while self.history.back().is_some_and(|s| s.start >= now) && self.history.len() > 1 {
            self.history.pop_back();
        }
        if self.history.len() == 1 && self.history[0].start >= now {
            self.history[0] = NcoSegment {
                start: now,
                frequency,
                phase: wrap_phase(phase),
            };
        } else {
            self.history.push_back(NcoSegment {
                start: now,
                frequency,
                phase: wrap_phase(phase),
            });
        }
        // Keep about ten seconds of trajectory.
        let horizon = (10.0 * self.symbol_rate) as u64;
        while self.history.len() > 2 && now.saturating_sub(self.history[1].start) > horizon {
            self.history.pop_front();
        }
    }

    /// Drop all rotation.
    pub fn reset(&mut self, now: u64) {
        self.estimate = None;
        self.history.clear();
        self.history.push_back(NcoSegment {
            start: now,
            frequency: 0.0,
            phase: 0.0,
        });
    }
}

/// Differential measurement fed to the loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopMeasurement {
    /// Symbol at which the terminal measured.
    pub measured_at: u64,
    pub frequency: f64,
    pub phase: f64,
}

impl LoopMeasurement {
    pub fn from_report(r: &CsiReport) -> Option<Self> {
        r.has_differential().then(|| LoopMeasurement {
            measured_at: r.t_symbol,
            frequency: r.frequency,
            phase: r.differential_phase(),
        })
    }
}

/// One loop step at symbol `now`.
///
/// The loop tracks the differential LO phase `psi = phi_meas + theta(t_m)`,
/// which does not depend on the rotation applied since, so feedback delay
/// only stretches the extrapolation. With `f_lo = f_meas + nco_f(t_m)`:
///
/// ```text
/// acquiring (|f_lo - f_hat| > lock_hz):
///     f_hat   += k_f (f_lo - f_hat),   psi_hat = psi
/// tracking:
///     r        = wrap(psi - psi_hat - 2 pi f_hat dt)
///     psi_hat += 2 pi f_hat dt + k_p r
///     f_hat   += k_i r / (2 pi dt)
/// ```
///
/// `dt` is the time since the previous measurement. The NCO then follows
/// `psi_hat + 2 pi f_hat (n - t_m) T` from `now` on. The first measurement
/// initializes the estimate directly; measurements older than the last one
/// are ignored.
pub fn update_compensation(state: &mut CompensationState, m: &LoopMeasurement, now: u64) {
    if !state.enabled {
        return;
    }
    let t_m = m.measured_at.min(now);
    let psi = wrap_phase(m.phase + state.rotation_at(t_m));
    let f_lo = m.frequency + state.frequency_at(t_m);
    let next = match state.estimate {
        None => LoEstimate {
            at: t_m,
            phase: psi,
            frequency: f_lo,
        },
        Some(e) if t_m <= e.at => return,
        Some(e) if (f_lo - e.frequency).abs() > state.lock_hz => LoEstimate {
            at: t_m,
            phase: psi,
            frequency: e.frequency + state.k_f * (f_lo - e.frequency),
        },
        Some(e) => {
            let dt = (t_m - e.at) as f64 / state.symbol_rate;
            let predicted = e.phase + TAU * e.frequency * dt;
            let r = wrap_phase(psi - predicted);
            LoEstimate {
                at: t_m,
                phase: wrap_phase(predicted + state.k_p * r),
                frequency: e.frequency + state.k_i * r / (TAU * dt),
            }
        }
    };
    let next = LoEstimate {
        frequency: next.frequency.clamp(-state.max_frequency, state.max_frequency),
        ..next
    };
    state.estimate = Some(next);
    let ahead = (now - t_m) as f64 / state.symbol_rate;
    state.retune(now, next.frequency, next.phase + TAU * next.frequency * ahead);
}

/// Rotate beam 1 by `-(2 pi nco_f n T + nco_phase)`; `start_symbol` is the
/// absolute index of the stream's first symbol. Identity when disabled.
pub fn apply_compensation(tx_beam1: &SymbolStream, state: &CompensationState, start_symbol: u64) -> SymbolStream {
    let mut out = tx_beam1.clone();
    if !state.enabled {
        return out;
    }
    out.for_each_mut(|t, v| {
        *v *= C64::from_polar(1.0, -state.rotation_at(start_symbol + t as u64));
    });
    out
}

/// `H_hat` and regularizer from the newest report of every terminal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssembledChannel {
    pub h: Mat2,
    pub sigma2: f64,
    /// Age of each terminal's report at assembly time, seconds.
    pub age_s: [f64; NUM_BEAMS],
    /// Symbol at which each row was measured.
    pub measured_at: [u64; NUM_BEAMS],
}

/// Row `u` of `H_hat` is terminal `u`'s reported `(CSI_0, CSI_1)`;
/// `sigma2` is the mean of the reported noise variances.
pub fn assemble_channel(
    reports: &[Option<CsiReport>; NUM_BEAMS],
    now: u64,
    symbol_rate: f64,
    staleness_s: f64,
) -> Result<AssembledChannel> {
    let mut h = Mat2::zeros();
    let mut age_s = [0.0; NUM_BEAMS];
    let mut measured_at = [0; NUM_BEAMS];
    let mut sigma2 = 0.0;
    for (u, r) in reports.iter().enumerate() {
        let Some(r) = r else {
            return Err(Error::StaleCsi {
                terminal: u,
                age_s: f64::INFINITY,
            });
        };
        let age = now.saturating_sub(r.t_symbol) as f64 / symbol_rate;
        if age > staleness_s {
            return Err(Error::StaleCsi { terminal: u, age_s: age });
        }
        h[(u, 0)] = r.csi[0];
        h[(u, 1)] = r.csi[1];
        age_s[u] = age;
        measured_at[u] = r.t_symbol;
        sigma2 += r.sigma2;
    }
    Ok(AssembledChannel {
        h,
        sigma2: sigma2 / NUM_BEAMS as f64,
        age_s,
        measured_at,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub precoder: PrecodingMatrix,
    pub pac: Option<PacSolution>,
}

/// Row-normalized precoder for `mode`.
pub fn select_precoder(mode: PrecoderMode, h: &Mat2, sigma2: f64, pac: &PacConfig) -> Result<Selection> {
    match mode {
        PrecoderMode::Unprecoded => Ok(Selection {
            precoder: PrecodingMatrix::identity(),
            pac: None,
        }),
        PrecoderMode::Mmse => Ok(Selection {
            precoder: normalize_rows(&compute_mmse(h, sigma2)?)?,
            pac: None,
        }),
        PrecoderMode::MmsePac => {
            let sol = compute_mmse_pac(h, pac)?;
            Ok(Selection {
                precoder: normalize_rows(&sol.precoder)?,
                pac: Some(sol),
            })
        }
    }
}

/// Apply `w` to every precoded segment that is materialized on both beams.
pub fn precode_segments(streams: &mut [SymbolStream], segments: &[Segment], w: &PrecodingMatrix) {
    assert_eq!(streams.len(), NUM_BEAMS);
    let (s0, s1) = streams.split_at_mut(1);
    for seg in segments.iter().filter(|s| s.precoded) {
        let (Some(a), Some(b)) = (s0[0].window_mut(seg.offset, seg.length), s1[0].window_mut(seg.offset, seg.length)) else {
            continue;
        };
        for (x0, x1) in a.iter_mut().zip(b.iter_mut()) {
            let x = w.w.mul_vec(&[*x0, *x1]);
            *x0 = x[0];
            *x1 = x[1];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub pac: PacConfig,
    pub staleness_s: f64,
    pub sigma2_window: usize,
    pub k_f: f64,
    pub k_p: f64,
    pub k_i: f64,
    pub lock_hz: f64,
    pub max_nco_frequency: f64,
    /// Terminal whose differential phase the loop drives to zero.
    pub reference_terminal: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            pac: PacConfig::default(),
            staleness_s: DEFAULT_STALENESS_S,
            sigma2_window: DEFAULT_SIGMA2_WINDOW,
            k_f: DEFAULT_K_F,
            k_p: DEFAULT_K_P,
            k_i: DEFAULT_K_I,
            lock_hz: DEFAULT_LOCK_HZ,
            max_nco_frequency: DEFAULT_MAX_NCO_FREQUENCY,
            reference_terminal: 0,
        }
    }
}

/// Why the precoder in use was not recomputed this superframe.
#[derive(Debug, Clone, PartialEq)]
pub enum PrecoderStatus {
    Fresh,
    /// No usable CSI; the previous precoder is kept.
    Held(Error),
    /// The solver failed; the previous precoder is kept.
    Fallback(Error),
}

/// One line of the gateway event log.
#[derive(Debug, Clone, PartialEq)]
pub struct GatewayRecord {
    pub t_symbol: u64,
    pub mode: PrecoderMode,
    pub nco_frequency: f64,
    pub nco_phase: f64,
    pub w: Mat2,
    pub row_norms: [f64; NUM_BEAMS],
    /// NaN unless the precoder came from the PAC solver.
    pub residual_pac: f64,
    /// Oldest report age behind the precoder, NaN before any CSI.
    pub csi_age_s: f64,
    pub status: PrecoderStatus,
}

#[derive(Debug, Clone)]
pub struct Gateway {
    cfg: GatewayConfig,
    layout: SuperframeLayout,
    pilots: PilotSet,
    symbol_rate: f64,
    latest: [Option<CsiReport>; NUM_BEAMS],
    sigma2_history: [VecDeque<f64>; NUM_BEAMS],
    precoder: PrecodingMatrix,
    residual_pac: f64,
    csi_age_s: f64,
    pub compensation: CompensationState,
}

impl Gateway {
    pub fn new(cfg: GatewayConfig, layout: SuperframeLayout, symbol_rate: f64) -> Result<Self> {
        cfg.pac.validate()?;
        layout.validate()?;
        if cfg.sigma2_window == 0 {
            return Err(Error::config("precoder.sigma2_window", "must be > 0"));
        }
        let mut compensation = CompensationState::new(cfg.k_f, cfg.k_p, cfg.max_nco_frequency, symbol_rate);
        compensation.k_i = cfg.k_i;
        compensation.lock_hz = cfg.lock_hz;
        compensation.enabled = false;
        Ok(Gateway {
            pilots: build_pilot_set(NUM_BEAMS),
            symbol_rate,
            latest: [None, None],
            sigma2_history: Default::default(),
            precoder: PrecodingMatrix::identity(),
            residual_pac: f64::NAN,
            csi_age_s: f64::NAN,
            compensation,
            layout,
            cfg,
        })
    }

    pub fn precoder(&self) -> &PrecodingMatrix {
        &self.precoder
    }

    pub fn latest_reports(&self) -> &[Option<CsiReport>; NUM_BEAMS] {
        &self.latest
    }

    /// Take in a report delivered by the feedback path at symbol `now`.
    pub fn ingest(&mut self, report: CsiReport, now: u64) {
        let u = report.terminal;
        assert!(u < NUM_BEAMS, "terminal id {u} out of range");
        if u == self.cfg.reference_terminal {
            if let Some(m) = LoopMeasurement::from_report(&report) {
                update_compensation(&mut self.compensation, &m, now);
            }
        }
        let hist = &mut self.sigma2_history[u];
        hist.push_back(report.sigma2);
        while hist.len() > self.cfg.sigma2_window {
            hist.pop_front();
        }
        self.latest[u] = Some(report);
    }

    /// Switch the compensation loop; turning it off also clears the
    /// rotation.
    pub fn set_compensation(&mut self, enabled: bool, now: u64) {
        if self.compensation.enabled && !enabled {
            self.compensation.reset(now);
        }
        self.compensation.enabled = enabled;
    }

    /// Channel estimate for the precoder at symbol `now`, with each row's
    /// beam-1 entry rotated by the compensation changes made since it was
    /// measured and the regularizer averaged over recent reports.
    pub fn channel_estimate(&self, now: u64) -> Result<AssembledChannel> {
        let mut ch = assemble_channel(&self.latest, now, self.symbol_rate, self.cfg.staleness_s)?;
        for u in 0..NUM_BEAMS {
            let change = self.compensation.rotation_change(ch.measured_at[u], now);
            ch.h[(u, 1)] *= C64::from_polar(1.0, -change);
        }
        let (sum, n) = self.sigma2_history.iter().flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n > 0 {
            ch.sigma2 = sum / n as f64;
        }
        Ok(ch)
    }

    /// Recompute the precoder for the superframe starting at `now`.
    pub fn update_precoder(&mut self, mode: PrecoderMode, now: u64) -> GatewayRecord {
        let status = if mode == PrecoderMode::Unprecoded {
            self.precoder = PrecodingMatrix::identity();
            self.residual_pac = f64::NAN;
            self.csi_age_s = self.channel_estimate(now).map_or(f64::NAN, |c| max_age(&c));
            PrecoderStatus::Fresh
        } else {
            match self.channel_estimate(now) {
                Err(e) => PrecoderStatus::Held(e),
                Ok(ch) => match select_precoder(mode, &ch.h, ch.sigma2, &self.cfg.pac) {
                    Ok(sel) => {
                        self.precoder = sel.precoder;
                        self.residual_pac = sel.pac.map_or(f64::NAN, |p| p.residual);
                        self.csi_age_s = max_age(&ch);
                        PrecoderStatus::Fresh
                    }
                    Err(e) => PrecoderStatus::Fallback(e),
                },
            }
        };
        GatewayRecord {
            t_symbol: now,
            mode,
            nco_frequency: if self.compensation.enabled {
                self.compensation.nco_frequency()
            } else {
                0.0
            },
            nco_phase: if self.compensation.enabled {
                wrap_phase(self.compensation.rotation_at(now))
            } else {
                0.0
            },
            w: self.precoder.w,
            row_norms: self.precoder.row_norms.unwrap_or([1.0; NUM_BEAMS]),
            residual_pac: self.residual_pac,
            csi_age_s: self.csi_age_s,
            status,
        }
    }

    /// Build, precode and compensate one superframe starting at absolute
    /// symbol `start_symbol`.
    pub fn transmit_superframe(&self, payload: &[Vec<FramePayload>], start_symbol: u64) -> Result<[SymbolStream; NUM_BEAMS]> {
        transmit_superframe(
            &self.layout,
            &self.pilots,
            payload,
            &self.precoder,
            &self.compensation,
            start_symbol,
        )
    }
}

fn max_age(ch: &AssembledChannel) -> f64 {
    ch.age_s.iter().cloned().fold(0.0, f64::max)
}

/// Superframe assembly, precoding of the flagged segments, then the
/// compensation rotation on beam 1.
pub fn transmit_superframe(
    layout: &SuperframeLayout,
    pilots: &PilotSet,
    payload: &[Vec<FramePayload>],
    precoder: &PrecodingMatrix,
    compensation: &CompensationState,
    start_symbol: u64,
) -> Result<[SymbolStream; NUM_BEAMS]> {
    if payload.len() != NUM_BEAMS {
        return Err(Error::LayoutOverflow(format!("expected {NUM_BEAMS} beams, got {}", payload.len())));
    }
    let sf = build_superframe(layout, pilots, payload)?;
    let mut streams = sf.streams;
    precode_segments(&mut streams, &sf.segments, precoder);
    let beam1 = apply_compensation(&streams[1], compensation, start_symbol);
    let beam0 = streams.swap_remove(0);
    Ok([beam0, beam1])
}

/// Unit-modulus rotation `exp(i phase)`.
pub fn phasor(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}
