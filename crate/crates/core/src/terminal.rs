//! User terminal receiver: sync check, pilot-based CSI, differential
//! frequency and phase, P2 SINR, threshold decoding model, CSI feedback.

use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::fmt;

use crate::error::{Error, Result};
use crate::framing::modulation::{demodulate, Modcod, Modulation};
use crate::framing::pilots::{build_pilot_set, PilotSet, WH_LENGTH};
use crate::framing::sosf::{detect_sosf_in, SyncResult, DEFAULT_SYNC_THRESHOLD};
use crate::framing::stream::SymbolStream;
use crate::framing::superframe::{p2_sequence, parse_superframe, sosf_sequence, SuperframeLayout};
use crate::linalg::{c64, C64, NUM_BEAMS};

/// Upper clamp of the P2 SINR estimate.
pub const SINR_CAP_DB: f64 = 40.0;
/// Pilot fields per differential estimate when none is configured.
pub const DEFAULT_DIFFERENTIAL_WINDOW: usize = 8;
pub const DEFAULT_EMA_FACTOR: f64 = 0.5;

const HALF_CORE: usize = WH_LENGTH / 2;

/// CSI measured on one pilot field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelEstimate {
    pub csi: [C64; NUM_BEAMS],
    /// The same correlation over each half of the WH core, `[half][beam]`.
    /// Only used to detect aliasing of the differential frequency.
    pub half_core: [[C64; NUM_BEAMS]; 2],
    pub pilot_index: u64,
    /// Absolute symbol index of the field start.
    pub timestamp: u64,
    pub noise_variance: f64,
}

/// `<y, p> / <p, p>`; for unit-modulus `p` this is `(1/N) sum y conj(p)`,
/// written so that `y = p` gives exactly 1.
fn correlate(y: &[C64], p: &[C64]) -> C64 {
    let energy: f64 = p.iter().map(|v| v.norm_sqr()).sum();
    y.iter().zip(p).map(|(a, b)| a * b.conj()).sum::<C64>() / energy
}

/// `CSI_k = (1/32) sum_t y[t] conj(p_k[t])` over the WH core.
pub fn estimate_csi(field: &[C64], pilots: &PilotSet) -> [C64; NUM_BEAMS] {
    assert!(field.len() >= WH_LENGTH, "pilot field shorter than WH core");
    std::array::from_fn(|k| correlate(&field[..WH_LENGTH], pilots.core(k)))
}

/// Mean squared residual of `y - sum_k CSI_k p_k` over the WH core.
pub fn estimate_noise_variance(field: &[C64], pilots: &PilotSet, csi: &[C64; NUM_BEAMS]) -> f64 {
    assert!(field.len() >= WH_LENGTH, "pilot field shorter than WH core");
    (0..WH_LENGTH)
        .map(|t| {
            let model: C64 = (0..NUM_BEAMS).map(|k| csi[k] * pilots.core(k)[t]).sum();
            (field[t] - model).norm_sqr()
        })
        .sum::<f64>()
        / WH_LENGTH as f64
}

/// Full per-field measurement.
pub fn observe_pilot_field(field: &[C64], pilots: &PilotSet, pilot_index: u64, timestamp: u64) -> ChannelEstimate {
    let csi = estimate_csi(field, pilots);
    let half = |h: usize| -> [C64; NUM_BEAMS] {
        let r = h * HALF_CORE..(h + 1) * HALF_CORE;
        std::array::from_fn(|k| correlate(&field[r.clone()], &pilots.core(k)[r.clone()]))
    };
    ChannelEstimate {
        csi,
        half_core: [half(0), half(1)],
        pilot_index,
        timestamp,
        noise_variance: estimate_noise_variance(field, pilots, &csi),
    }
}

/// Differential rotation of beam 1 against the reference beam 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferentialEstimate {
    /// Cycles per symbol.
    pub epsilon: f64,
    pub frequency: f64,
    /// `arg(CSI_1 conj(CSI_0))` at the newest field, fitted over the
    /// window with the estimated frequency.
    pub phase: f64,
    pub reference_beam: usize,
}

/// Differential frequency from consecutive pilot fields `spacing` symbols
/// apart: with `r_n = CSI_1 conj(CSI_0)`,
/// `eps = mean_n arg(r_{n+1} conj(r_n)) / (2 pi spacing)`.
///
/// Aliasing is detected with a coarse estimate from the two halves of each
/// WH core, whose unambiguous range is `spacing / 16` times wider.
pub fn estimate_differential(history: &[ChannelEstimate], spacing: usize, symbol_rate: f64) -> Result<DifferentialEstimate> {
    if history.len() < 2 {
        return Err(Error::OutOfBounds {
            needed: 2,
            available: history.len(),
        });
    }
    let ratio = |c: &[C64; NUM_BEAMS]| c[1] * c[0].conj();
    let increments: f64 = history.windows(2).map(|w| (ratio(&w[1].csi) * ratio(&w[0].csi).conj()).arg()).sum();
    let epsilon = increments / ((history.len() - 1) as f64 * TAU * spacing as f64);

    let coarse: C64 = history.iter().map(|e| ratio(&e.half_core[1]) * ratio(&e.half_core[0]).conj()).sum();
    let coarse_eps = coarse.arg() / (TAU * HALF_CORE as f64);
    if (coarse_eps - epsilon).abs() > 0.5 / spacing as f64 {
        return Err(Error::Ambiguous {
            coarse_hz: coarse_eps * symbol_rate,
        });
    }
    Ok(DifferentialEstimate {
        epsilon,
        frequency: epsilon * symbol_rate,
        phase: history
            .iter()
            .rev()
            .enumerate()
            .map(|(k, e)| ratio(&e.csi) * C64::from_polar(1.0, TAU * epsilon * (k * spacing) as f64))
            .sum::<C64>()
            .arg(),
        reference_beam: 0,
    })
}

/// Data-aided SINR from a received P2 block and its known reference:
/// `c = <y, p> / <p, p>`, `SINR = |c|^2 P_p / (mean|y|^2 - |c|^2 P_p)`, in
/// dB, clamped to [`SINR_CAP_DB`].
pub fn estimate_sinr_p2(received: &[C64], reference: &[C64]) -> f64 {
    assert_eq!(received.len(), reference.len(), "P2 block and reference differ in length");
    let n = received.len() as f64;
    let p_ref = reference.iter().map(|v| v.norm_sqr()).sum::<f64>() / n;
    let c = correlate(received, reference);
    let signal = c.norm_sqr() * p_ref;
    let total = received.iter().map(|v| v.norm_sqr()).sum::<f64>() / n;
    let residual = total - signal;
    if residual <= 0.0 {
        return SINR_CAP_DB;
    }
    (10.0 * (signal / residual).log10()).min(SINR_CAP_DB)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModcodEntry {
    pub modcod: Modcod,
    pub required_sinr_db: f64,
}

/// Operating points ordered by efficiency.
#[derive(Debug, Clone, PartialEq)]
pub struct ModcodTable {
    entries: Vec<ModcodEntry>,
}

impl ModcodTable {
    pub fn new(mut entries: Vec<ModcodEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::config("modcod.table", "empty table"));
        }
        entries.sort_by(|a, b| a.modcod.efficiency().total_cmp(&b.modcod.efficiency()));
        for w in entries.windows(2) {
            if !(w[1].modcod.efficiency() > w[0].modcod.efficiency() && w[1].required_sinr_db > w[0].required_sinr_db) {
                return Err(Error::config(
                    "modcod.table",
                    format!(
                        "required SINR must rise strictly with efficiency ({} at {} dB, {} at {} dB)",
                        w[0].modcod, w[0].required_sinr_db, w[1].modcod, w[1].required_sinr_db
                    ),
                ));
            }
        }
        Ok(ModcodTable { entries })
    }

    pub fn entries(&self) -> &[ModcodEntry] {
        &self.entries
    }

    pub fn required_sinr_db(&self, modcod: &Modcod) -> Result<f64> {
        self.entries
            .iter()
            .find(|e| e.modcod == *modcod)
            .map(|e| e.required_sinr_db)
            .ok_or_else(|| Error::UnknownModcod(modcod.to_string()))
    }

    /// Most efficient entry whose threshold is met.
    pub fn select(&self, sinr_db: f64) -> Option<&ModcodEntry> {
        self.entries.iter().rev().find(|e| sinr_db >= e.required_sinr_db)
    }
}

impl Default for ModcodTable {
    /// Quasi-error-free thresholds of the standard LDPC operating points
    /// plus 1.5 dB implementation margin.
    fn default() -> Self {
        let e = |m, n, d, s| ModcodEntry {
            modcod: Modcod::new(m, n, d),
            required_sinr_db: s,
        };
        ModcodTable::new(vec![
            e(Modulation::Qpsk, 1, 2, 2.5),
            e(Modulation::Qpsk, 2, 3, 4.6),
            e(Modulation::Qpsk, 3, 4, 5.5),
            e(Modulation::Psk8, 3, 5, 7.0),
            e(Modulation::Psk8, 2, 3, 8.1),
        ])
        .expect("default table is ordered")
    }
}

/// Data symbols of one frame, either as samples or just a count when the
/// simulation did not materialize them.
#[derive(Debug, Clone, Copy)]
pub enum DataBlock<'a> {
    Symbols(&'a [C64]),
    Skipped(usize),
}

impl DataBlock<'_> {
    pub fn len(&self) -> usize {
        match self {
            DataBlock::Symbols(s) => s.len(),
            DataBlock::Skipped(n) => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub modcod: Modcod,
    pub delivered: bool,
    /// Information bits delivered (0 when erased).
    pub bits: f64,
    /// Hard decisions, when the frame was delivered and materialized.
    pub hard_bits: Option<Vec<u8>>,
}

/// Sharp-threshold decoding model: the frame is delivered iff `sinr_db`
/// meets the modcod's required SINR.
pub fn demodulate_and_account(data: DataBlock<'_>, modcod: &Modcod, sinr_db: f64, table: &ModcodTable) -> Result<FrameOutcome> {
    let required = table.required_sinr_db(modcod)?;
    let delivered = sinr_db >= required;
    let hard_bits = match data {
        DataBlock::Symbols(s) if delivered => Some(demodulate(s, modcod.modulation)),
        _ => None,
    };
    Ok(FrameOutcome {
        modcod: *modcod,
        delivered,
        bits: if delivered { data.len() as f64 * modcod.efficiency() } else { 0.0 },
        hard_bits,
    })
}

/// Feedback record sent to the gateway once per superframe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsiReport {
    /// Absolute symbol index of the newest pilot field used.
    pub t_symbol: u64,
    pub terminal: usize,
    /// Smoothed CSI, rotated so that beam 0 is real and non-negative.
    pub csi: [C64; NUM_BEAMS],
    /// NaN when the differential estimate was ambiguous.
    pub epsilon: f64,
    pub frequency: f64,
    pub sinr_db: f64,
    pub sigma2: f64,
    /// Not carried on the wire; parsed reports have 0.
    pub pilot_index: u64,
}

impl CsiReport {
    /// Differential phase of beam 1 against beam 0 in this report.
    pub fn differential_phase(&self) -> f64 {
        (self.csi[1] * self.csi[0].conj()).arg()
    }

    pub fn has_differential(&self) -> bool {
        self.frequency.is_finite()
    }

    /// Parse a line written by the `Display` impl.
    pub fn parse_line(line: &str) -> Result<CsiReport> {
        let bad = |m: String| Error::Io(format!("CSI report `{line}`: {m}"));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 10 {
            return Err(bad(format!("expected 10 fields, got {}", fields.len())));
        }
        let f = |i: usize| fields[i].parse::<f64>().map_err(|e| bad(format!("field {i}: {e}")));
        Ok(CsiReport {
            t_symbol: fields[0].parse().map_err(|e| bad(format!("t_symbol: {e}")))?,
            terminal: fields[1].parse().map_err(|e| bad(format!("terminal_id: {e}")))?,
            csi: [c64(f(2)?, f(3)?), c64(f(4)?, f(5)?)],
            epsilon: f(6)?,
            frequency: f(7)?,
            sinr_db: f(8)?,
            sigma2: f(9)?,
            pilot_index: 0,
        })
    }

    pub const HEADER: &'static str = "t_symbol,terminal_id,csi0_re,csi0_im,csi1_re,csi1_im,eps,f_hz,sinr_db,sigma2";
}

impl fmt::Display for CsiReport {
    /// `t_symbol, terminal_id, re(csi0), im(csi0), re(csi1), im(csi1), eps,
    /// f_hz, sinr_db, sigma2` with shortest round-trip float formatting.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.t_symbol,
            self.terminal,
            self.csi[0].re,
            self.csi[0].im,
            self.csi[1].re,
            self.csi[1].im,
            self.epsilon,
            self.frequency,
            self.sinr_db,
            self.sigma2
        )
    }
}

/// Exponential smoothing of per-field CSI, after rotating each field so
/// that beam 0 is the phase reference.
#[derive(Debug, Clone)]
pub struct CsiTracker {
    /// Weight of the previous smoothed value.
    pub ema_factor: f64,
    smoothed: Option<[C64; NUM_BEAMS]>,
    latest: Option<ChannelEstimate>,
}

impl CsiTracker {
    pub fn new(ema_factor: f64) -> Self {
        assert!((0.0..1.0).contains(&ema_factor), "EMA factor must be in [0, 1)");
        CsiTracker {
            ema_factor,
            smoothed: None,
            latest: None,
        }
    }

    pub fn observe(&mut self, est: &ChannelEstimate) {
        if let Some(prev) = &self.latest {
            assert!(est.pilot_index > prev.pilot_index, "pilot index must increase");
        }
        let norm = est.csi[0].norm();
        let derot = if norm > 0.0 { est.csi[0].conj() / norm } else { c64(1.0, 0.0) };
        let obs = est.csi.map(|c| c * derot);
        self.smoothed = Some(match self.smoothed {
            None => obs,
            Some(s) => std::array::from_fn(|k| s[k] * self.ema_factor + obs[k] * (1.0 - self.ema_factor)),
        });
        self.latest = Some(*est);
    }

    pub fn smoothed(&self) -> Option<[C64; NUM_BEAMS]> {
        self.smoothed
    }

    pub fn latest(&self) -> Option<&ChannelEstimate> {
        self.latest.as_ref()
    }
}

/// Package the tracker state into a report; `None` before any pilot field
/// has been observed.
pub fn emit_csi_report(
    terminal: usize,
    tracker: &CsiTracker,
    differential: Option<&DifferentialEstimate>,
    sinr_db: f64,
    sigma2: f64,
) -> Option<CsiReport> {
    let latest = tracker.latest()?;
    Some(CsiReport {
        t_symbol: latest.timestamp,
        terminal,
        csi: tracker.smoothed()?,
        epsilon: differential.map_or(f64::NAN, |d| d.epsilon),
        frequency: differential.map_or(f64::NAN, |d| d.frequency),
        sinr_db,
        sigma2,
        pilot_index: latest.pilot_index,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalConfig {
    pub id: usize,
    pub ema_factor: f64,
    pub sync_threshold: f64,
    /// Length of the running SINR mean used for MODCOD selection.
    pub sinr_average_s: f64,
    /// Pilot fields per differential estimate; `None` uses every field of
    /// the superframe.
    pub differential_window: Option<usize>,
    pub modcods: ModcodTable,
}

impl TerminalConfig {
    pub fn new(id: usize) -> Self {
        TerminalConfig {
            id,
            ema_factor: DEFAULT_EMA_FACTOR,
            sync_threshold: DEFAULT_SYNC_THRESHOLD,
            sinr_average_s: 1.0,
            differential_window: None,
            modcods: ModcodTable::default(),
        }
    }
}

/// What a terminal made of one superframe.
#[derive(Debug, Clone, PartialEq)]
pub struct Reception {
    /// `None` when the SOSF check failed; nothing else is then measured.
    pub sync: Option<SyncResult>,
    pub sync_metric: f64,
    pub report: Option<CsiReport>,
    pub differential: Option<DifferentialEstimate>,
    /// One SINR per P2 field, dB.
    pub p2_sinr_db: Vec<f64>,
    /// Mean of `p2_sinr_db` in linear units, dB.
    pub sinr_db: f64,
    /// Running mean over the configured averaging time, dB.
    pub sinr_avg_db: f64,
    pub modcod: Option<Modcod>,
    pub frames: Vec<FrameOutcome>,
    pub delivered_bits: f64,
    /// Mean |CSI_k| over the superframe's pilot fields, dB.
    pub csi_magnitude_db: [f64; NUM_BEAMS],
}

#[derive(Debug, Clone)]
pub struct Terminal {
    cfg: TerminalConfig,
    pilots: PilotSet,
    sosf: Vec<Vec<C64>>,
    p2_reference: Vec<C64>,
    tracker: CsiTracker,
    next_pilot_index: u64,
    /// `(time_s, linear SINR)` per superframe.
    sinr_history: VecDeque<(f64, f64)>,
}

impl Terminal {
    pub fn new(cfg: TerminalConfig, layout: &SuperframeLayout) -> Self {
        Terminal {
            pilots: build_pilot_set(NUM_BEAMS),
            sosf: (0..NUM_BEAMS).map(|b| sosf_sequence(b, layout.sosf_length)).collect(),
            p2_reference: p2_sequence(cfg.id),
            tracker: CsiTracker::new(cfg.ema_factor),
            next_pilot_index: 0,
            sinr_history: VecDeque::new(),
            cfg,
        }
    }

    pub fn id(&self) -> usize {
        self.cfg.id
    }

    pub fn config(&self) -> &TerminalConfig {
        &self.cfg
    }

    /// Process one received superframe whose first symbol has absolute
    /// index `start_symbol`.
    pub fn receive(&mut self, rx: &SymbolStream, layout: &SuperframeLayout, start_symbol: u64, symbol_rate: f64) -> Result<Reception> {
        let sosf = rx.window(0, layout.sosf_length).ok_or(Error::OutOfBounds {
            needed: layout.sosf_length,
            available: rx.len(),
        })?;
        let sync = match detect_sosf_in(sosf, &self.sosf, 0..1, self.cfg.sync_threshold) {
            Ok(s) => s,
            Err(Error::NoSync { peak }) => return Ok(self.lost(layout, peak)),
            Err(e) => return Err(e),
        };
        let view = parse_superframe(rx, layout, sync.offset)?;

        let mut history = Vec::with_capacity(view.pilots.len());
        let mut magnitude = [0.0; NUM_BEAMS];
        let mut sigma2 = 0.0;
        for obs in &view.pilots {
            let est = observe_pilot_field(&obs.samples, &self.pilots, self.next_pilot_index, start_symbol + obs.offset as u64);
            self.next_pilot_index += 1;
            self.tracker.observe(&est);
            for k in 0..NUM_BEAMS {
                magnitude[k] += est.csi[k].norm();
            }
            sigma2 += est.noise_variance;
            history.push(est);
        }
        let n_fields = history.len() as f64;
        let csi_magnitude_db = magnitude.map(|m| 20.0 * (m / n_fields).log10());
        sigma2 /= n_fields;

        let window = self.cfg.differential_window.unwrap_or(history.len()).clamp(2, history.len());
        let differential = estimate_differential(&history[history.len() - window..], layout.pilot_spacing, symbol_rate).ok();

        let p2_sinr_db: Vec<f64> = view.p2.iter().map(|y| estimate_sinr_p2(y, &self.p2_reference)).collect();
        let sinr_lin = p2_sinr_db.iter().map(|&s| db_to_linear(s)).sum::<f64>() / p2_sinr_db.len() as f64;
        let sinr_db = linear_to_db(sinr_lin);

        // MODCOD follows the running mean up to the previous superframe; the
        // frames themselves are judged against what this superframe saw.
        let now = start_symbol as f64 / symbol_rate;
        let select_db = self.running_mean_db().unwrap_or(sinr_db);
        self.sinr_history.push_back((now, sinr_lin));
        while let Some(&(t, _)) = self.sinr_history.front() {
            if now - t >= self.cfg.sinr_average_s {
                self.sinr_history.pop_front();
            } else {
                break;
            }
        }
        let sinr_avg_db = self.running_mean_db().unwrap_or(sinr_db);

        let modcod = self.cfg.modcods.select(select_db).map(|e| e.modcod);
        let mut frames = Vec::with_capacity(view.data.len());
        if let Some(mc) = modcod {
            for data in &view.data {
                let block = match data {
                    Some(s) => DataBlock::Symbols(s),
                    None => DataBlock::Skipped(layout.data_frame_length),
                };
                frames.push(demodulate_and_account(block, &mc, sinr_db, &self.cfg.modcods)?);
            }
        }
        let delivered_bits = frames.iter().fold(0.0, |acc, f| acc + f.bits);
        let report = emit_csi_report(self.cfg.id, &self.tracker, differential.as_ref(), sinr_db, sigma2);

        Ok(Reception {
            sync: Some(sync),
            sync_metric: sync.metric,
            report,
            differential,
            p2_sinr_db,
            sinr_db,
            sinr_avg_db,
            modcod,
            frames,
            delivered_bits,
            csi_magnitude_db,
        })
    }

    fn running_mean_db(&self) -> Option<f64> {
        if self.sinr_history.is_empty() {
            return None;
        }
        let mean = self.sinr_history.iter().map(|(_, s)| s).sum::<f64>() / self.sinr_history.len() as f64;
        Some(linear_to_db(mean))
    }

    fn lost(&self, layout: &SuperframeLayout, peak: f64) -> Reception {
        Reception {
            sync: None,
            sync_metric: peak,
            report: None,
            differential: None,
            p2_sinr_db: Vec::new(),
            sinr_db: f64::NAN,
            sinr_avg_db: self.running_mean_db().unwrap_or(f64::NAN),
            modcod: None,
            frames: Vec::with_capacity(layout.frames_per_superframe),
            delivered_bits: 0.0,
            csi_magnitude_db: [f64::NAN; NUM_BEAMS],
        }
    }
}
