//! Scenario configuration.
//!
//! Files are TOML. Nested tables flatten to dotted keys, so
//!
//! ```toml
//! [geometry.ut0]
//! gain_db = [0.0, 1.9]
//! ```
//!
//! and `geometry.ut0.gain_db = [0.0, 1.9]` at top level are the same
//! setting. Every key is optional; unknown keys are errors. See
//! [`KEYS`] for the full list.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::framing::modulation::Modcod;
use crate::framing::superframe::SuperframeLayout;
use crate::gateway::{PrecoderMode, DEFAULT_K_F, DEFAULT_K_I, DEFAULT_K_P, DEFAULT_LOCK_HZ};
use crate::precoding::PacConfig;
use crate::terminal::{ModcodEntry, ModcodTable};

/// Default symbol rate: 12.4 MHz channel at 20% roll-off.
pub const DEFAULT_SYMBOL_RATE: f64 = 12.4e6 / 1.2;

/// Piecewise-constant setting over simulated time, `(start_s, value)`
/// with strictly increasing starts, the first at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<T> {
    entries: Vec<(f64, T)>,
}

impl<T: Clone> Schedule<T> {
    pub fn constant(value: T) -> Self {
        Schedule {
            entries: vec![(0.0, value)],
        }
    }

    pub fn new(entries: Vec<(f64, T)>) -> std::result::Result<Self, String> {
        match entries.first() {
            None => return Err("schedule is empty".into()),
            Some((t, _)) if *t != 0.0 => return Err(format!("first entry must start at 0, got {t}")),
            _ => {}
        }
        if let Some(w) = entries.windows(2).find(|w| !(w[1].0 > w[0].0)) {
            return Err(format!("start times must increase strictly ({} then {})", w[0].0, w[1].0));
        }
        Ok(Schedule { entries })
    }

    pub fn at(&self, t: f64) -> T {
        self.entries
            .iter()
            .rev()
            .find(|(s, _)| *s <= t)
            .unwrap_or(&self.entries[0])
            .1
            .clone()
    }

    pub fn entries(&self) -> &[(f64, T)] {
        &self.entries
    }
}

/// On/off switch for the compensation loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Switch(pub bool);

impl FromStr for Switch {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "on" | "true" => Ok(Switch(true)),
            "off" | "false" => Ok(Switch(false)),
            other => Err(format!("expected on or off, got `{other}`")),
        }
    }
}

impl fmt::Display for Switch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0 { "on" } else { "off" })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransponderConfig {
    pub frequency_hz: f64,
    pub phase_rad: f64,
    /// rad^2/s.
    pub phase_noise_rate: f64,
    pub gain_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration_s: f64,
    /// Start of the window the aggregates are taken over.
    pub warmup_s: f64,
    pub symbol_rate: f64,
    /// Materialize data symbols (slow; the default accounts them by count).
    pub dense: bool,
    pub layout: SuperframeLayout,
    /// `gain_db[u][b]` from beam `b` to terminal `u`.
    pub gain_db: [[f64; 2]; 2],
    pub phase_deg: [[f64; 2]; 2],
    pub drift_db_per_hour: f64,
    pub drift_time_scale: f64,
    /// `(alpha, beta)` per terminal.
    pub mixing: [(f64, f64); 2],
    /// Noise variance per polarization chain, per terminal.
    pub noise_variance: [f64; 2],
    pub transponders: [TransponderConfig; 2],
    pub precoder: Schedule<PrecoderMode>,
    pub pac: PacConfig,
    pub sigma2_window: usize,
    pub compensation: Schedule<Switch>,
    pub k_f: f64,
    pub k_p: f64,
    pub k_i: f64,
    pub lock_hz: f64,
    pub max_nco_frequency: f64,
    pub feedback_latency_s: f64,
    pub staleness_s: f64,
    /// `[start, end)` windows in which reports are lost.
    pub feedback_outages: Vec<(f64, f64)>,
    pub ema_factor: f64,
    pub sync_threshold: f64,
    pub sinr_average_s: f64,
    /// Pilot fields per differential estimate; 0 = the whole superframe.
    pub differential_window: usize,
    pub modcods: ModcodTable,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            duration_s: 10.0,
            warmup_s: 3.0,
            symbol_rate: DEFAULT_SYMBOL_RATE,
            dense: false,
            layout: SuperframeLayout::default(),
            gain_db: [[0.0, -10.0], [-10.0, 0.0]],
            phase_deg: [[0.0, 40.0], [-70.0, 0.0]],
            drift_db_per_hour: 0.05,
            drift_time_scale: 1.0,
            mixing: [(1.0, 1.0); 2],
            noise_variance: [0.01; 2],
            transponders: [
                TransponderConfig {
                    frequency_hz: 12.0,
                    phase_rad: 0.0,
                    phase_noise_rate: 0.005,
                    gain_db: 0.0,
                },
                TransponderConfig {
                    frequency_hz: -38.0,
                    phase_rad: 1.0,
                    phase_noise_rate: 0.005,
                    gain_db: 0.0,
                },
            ],
            precoder: Schedule::constant(PrecoderMode::Mmse),
            pac: PacConfig::default(),
            sigma2_window: 10,
            compensation: Schedule::constant(Switch(true)),
            k_f: DEFAULT_K_F,
            k_p: DEFAULT_K_P,
            k_i: DEFAULT_K_I,
            lock_hz: DEFAULT_LOCK_HZ,
            max_nco_frequency: 1000.0,
            feedback_latency_s: 0.5,
            staleness_s: 2.0,
            feedback_outages: Vec::new(),
            ema_factor: 0.5,
            sync_threshold: 0.5,
            sinr_average_s: 1.0,
            differential_window: 0,
            modcods: ModcodTable::default(),
        }
    }
}

/// Every recognized key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("run.seed", "master seed (integer)"),
    ("run.duration_s", "simulated time, s (> 0)"),
    ("run.warmup_s", "aggregates start here, s (0 <= warmup < duration)"),
    ("run.symbol_rate", "symbols per second"),
    ("run.dense", "materialize data symbols (bool)"),
    ("layout.sosf_length", "SOSF symbols"),
    ("layout.pilot_spacing", "symbols from one pilot field start to the next"),
    ("layout.frames_per_superframe", "bundled frames per superframe"),
    ("layout.data_frame_length", "data symbols per frame"),
    ("geometry.ut0.gain_db", "[beam0, beam1] link gain to terminal 0, dB"),
    ("geometry.ut0.phase_deg", "[beam0, beam1] link phase to terminal 0, deg"),
    ("geometry.ut1.gain_db", "[beam0, beam1] link gain to terminal 1, dB"),
    ("geometry.ut1.phase_deg", "[beam0, beam1] link phase to terminal 1, deg"),
    ("geometry.drift_db_per_hour", "std of the gain random walk, dB per sqrt(hour)"),
    ("geometry.drift_time_scale", "time acceleration of the drift"),
    ("mixing.ut0.alpha", "terminal 0 weight of V-pol (beam 0)"),
    ("mixing.ut0.beta", "terminal 0 weight of H-pol (beam 1)"),
    ("mixing.ut1.alpha", "terminal 1 weight of V-pol (beam 0)"),
    ("mixing.ut1.beta", "terminal 1 weight of H-pol (beam 1)"),
    ("noise.ut0.variance", "terminal 0 noise variance per polarization chain"),
    ("noise.ut1.variance", "terminal 1 noise variance per polarization chain"),
    ("transponder.b0.frequency_hz", "beam 0 LO frequency offset, Hz"),
    ("transponder.b0.phase_rad", "beam 0 initial LO phase, rad"),
    ("transponder.b0.phase_noise_rate", "beam 0 LO phase random walk, rad^2/s"),
    ("transponder.b0.gain_db", "beam 0 transponder gain, dB"),
    ("transponder.b1.frequency_hz", "beam 1 LO frequency offset, Hz"),
    ("transponder.b1.phase_rad", "beam 1 initial LO phase, rad"),
    ("transponder.b1.phase_noise_rate", "beam 1 LO phase random walk, rad^2/s"),
    ("transponder.b1.gain_db", "beam 1 transponder gain, dB"),
    ("precoder.schedule", "[\"t:mode\", ...] with mode unprecoded | mmse | mmse_pac"),
    ("precoder.sigma2_window", "reports per terminal averaged into sigma^2"),
    ("precoder.pac.power_budget", "[phi0, phi1] per-antenna power budget"),
    ("precoder.pac.max_iterations", "solver step budget"),
    ("precoder.pac.tolerance", "solver residual tolerance"),
    ("precoder.pac.lambda_floor", "lower bound on Lambda entries"),
    ("compensation.schedule", "[\"t:on\", \"t:off\", ...]"),
    ("compensation.k_f", "frequency gain while acquiring"),
    ("compensation.k_p", "phase gain while tracking"),
    ("compensation.k_i", "frequency gain on the phase error while tracking"),
    ("compensation.lock_hz", "frequency disagreement that triggers re-acquisition, Hz"),
    ("compensation.max_frequency_hz", "NCO frequency bound, Hz"),
    ("feedback.latency_s", "report delay to the gateway, s"),
    ("feedback.staleness_s", "reports older than this are not used, s"),
    ("feedback.outage", "[\"start:end\", ...] windows in which reports are lost, s"),
    ("terminal.ema_factor", "CSI smoothing weight of the previous value, [0, 1)"),
    ("terminal.sync_threshold", "SOSF metric threshold"),
    ("terminal.sinr_average_s", "running SINR mean for MODCOD selection, s"),
    (
        "terminal.differential_window",
        "pilot fields per differential estimate, 0 = whole superframe",
    ),
    ("modcod.table", "[\"QPSK 1/2:2.5\", ...] modcod and required SINR in dB"),
];

/// Flatten a TOML document into dotted keys.
pub fn flatten(text: &str) -> Result<BTreeMap<String, toml::Value>> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
    let mut out = BTreeMap::new();
    flatten_into(&table, "", &mut out);
    Ok(out)
}

fn flatten_into(table: &toml::Table, prefix: &str, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten_into(t, &key, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::config(key, format!("expected a number, got {}", v.type_str()))),
    }
}

fn as_usize(key: &str, v: &toml::Value) -> Result<usize> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(Error::config(key, format!("expected a non-negative integer, got {v}"))),
    }
}

fn as_bool(key: &str, v: &toml::Value) -> Result<bool> {
    v.as_bool()
        .ok_or_else(|| Error::config(key, format!("expected true or false, got {v}")))
}

fn as_pair(key: &str, v: &toml::Value) -> Result<[f64; 2]> {
    let arr = v.as_array().ok_or_else(|| Error::config(key, "expected an array of two numbers"))?;
    if arr.len() != 2 {
        return Err(Error::config(key, format!("expected two entries, got {}", arr.len())));
    }
    Ok([as_f64(key, &arr[0])?, as_f64(key, &arr[1])?])
}

fn as_strings(key: &str, v: &toml::Value) -> Result<Vec<String>> {
    let arr = v.as_array().ok_or_else(|| Error::config(key, "expected an array of strings"))?;
    arr.iter()
        .map(|s| {
            s.as_str()
                .map(str::to_owned)
                .ok_or_else(|| Error::config(key, format!("expected a string, got {s}")))
        })
        .collect()
}

fn parse_schedule<T: Clone + FromStr<Err = String>>(key: &str, v: &toml::Value) -> Result<Schedule<T>> {
    let mut entries = Vec::new();
    for item in as_strings(key, v)? {
        let (t, val) = item
            .split_once(':')
            .ok_or_else(|| Error::config(key, format!("entry `{item}` is not `time:value`")))?;
        let t: f64 = t.trim().parse().map_err(|_| Error::config(key, format!("bad time in `{item}`")))?;
        entries.push((t, val.parse::<T>().map_err(|e| Error::config(key, e))?));
    }
    Schedule::new(entries).map_err(|e| Error::config(key, e))
}

fn parse_modcods(key: &str, v: &toml::Value) -> Result<ModcodTable> {
    let mut entries = Vec::new();
    for item in as_strings(key, v)? {
        let (mc, db) = item
            .rsplit_once(':')
            .ok_or_else(|| Error::config(key, format!("entry `{item}` is not `MODCOD:dB`")))?;
        let modcod = Modcod::parse(mc).ok_or_else(|| Error::config(key, format!("unknown modcod `{mc}`")))?;
        let required_sinr_db = db
            .trim()
            .parse()
            .map_err(|_| Error::config(key, format!("bad threshold in `{item}`")))?;
        entries.push(ModcodEntry { modcod, required_sinr_db });
    }
    ModcodTable::new(entries).map_err(|e| match e {
        Error::Config { message, .. } => Error::config(key, message),
        other => other,
    })
}

fn parse_outages(key: &str, v: &toml::Value) -> Result<Vec<(f64, f64)>> {
    as_strings(key, v)?
        .iter()
        .map(|item| {
            let (a, b) = item
                .split_once(':')
                .ok_or_else(|| Error::config(key, format!("entry `{item}` is not `start:end`")))?;
            let (a, b): (f64, f64) = (
                a.trim().parse().map_err(|_| Error::config(key, format!("bad start in `{item}`")))?,
                b.trim().parse().map_err(|_| Error::config(key, format!("bad end in `{item}`")))?,
            );
            if !(b > a) {
                return Err(Error::config(key, format!("window `{item}` is empty")));
            }
            Ok((a, b))
        })
        .collect()
}

fn terminal_index(part: &str) -> Option<usize> {
    match part {
        "ut0" => Some(0),
        "ut1" => Some(1),
        _ => None,
    }
}

fn beam_index(part: &str) -> Option<usize> {
    match part {
        "b0" => Some(0),
        "b1" => Some(1),
        _ => None,
    }
}

impl ScenarioConfig {
    /// Defaults overridden by a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg = ScenarioConfig::default();
        cfg.apply_toml(text)?;
        Ok(cfg)
    }

    pub fn apply_toml(&mut self, text: &str) -> Result<()> {
        for (k, v) in flatten(text)? {
            self.set(&k, &v)?;
        }
        self.validate()
    }

    /// Set one dotted key.
    pub fn set(&mut self, key: &str, v: &toml::Value) -> Result<()> {
        let parts: Vec<&str> = key.split('.').collect();
        let unknown = || Error::config(key, "unknown key");
        match parts.as_slice() {
            ["run", "seed"] => {
                self.seed = match v {
                    toml::Value::Integer(i) if *i >= 0 => *i as u64,
                    _ => return Err(Error::config(key, "expected a non-negative integer")),
                }
            }
            ["run", "duration_s"] => self.duration_s = as_f64(key, v)?,
            ["run", "warmup_s"] => self.warmup_s = as_f64(key, v)?,
            ["run", "symbol_rate"] => self.symbol_rate = as_f64(key, v)?,
            ["run", "dense"] => self.dense = as_bool(key, v)?,
            ["layout", "sosf_length"] => self.layout.sosf_length = as_usize(key, v)?,
            ["layout", "pilot_spacing"] => self.layout.pilot_spacing = as_usize(key, v)?,
            ["layout", "frames_per_superframe"] => self.layout.frames_per_superframe = as_usize(key, v)?,
            ["layout", "data_frame_length"] => self.layout.data_frame_length = as_usize(key, v)?,
            ["geometry", ut, "gain_db"] => self.gain_db[terminal_index(ut).ok_or_else(unknown)?] = as_pair(key, v)?,
            ["geometry", ut, "phase_deg"] => self.phase_deg[terminal_index(ut).ok_or_else(unknown)?] = as_pair(key, v)?,
            ["geometry", "drift_db_per_hour"] => self.drift_db_per_hour = as_f64(key, v)?,
            ["geometry", "drift_time_scale"] => self.drift_time_scale = as_f64(key, v)?,
            ["mixing", ut, "alpha"] => self.mixing[terminal_index(ut).ok_or_else(unknown)?].0 = as_f64(key, v)?,
            ["mixing", ut, "beta"] => self.mixing[terminal_index(ut).ok_or_else(unknown)?].1 = as_f64(key, v)?,
            ["noise", ut, "variance"] => self.noise_variance[terminal_index(ut).ok_or_else(unknown)?] = as_f64(key, v)?,
            ["transponder", b, field] => {
                let t = &mut self.transponders[beam_index(b).ok_or_else(unknown)?];
                match *field {
                    "frequency_hz" => t.frequency_hz = as_f64(key, v)?,
                    "phase_rad" => t.phase_rad = as_f64(key, v)?,
                    "phase_noise_rate" => t.phase_noise_rate = as_f64(key, v)?,
                    "gain_db" => t.gain_db = as_f64(key, v)?,
                    _ => return Err(unknown()),
                }
            }
            ["precoder", "schedule"] => self.precoder = parse_schedule(key, v)?,
            ["precoder", "sigma2_window"] => self.sigma2_window = as_usize(key, v)?,
            ["precoder", "pac", "power_budget"] => self.pac.power_budget = as_pair(key, v)?,
            ["precoder", "pac", "max_iterations"] => self.pac.max_iterations = as_usize(key, v)?,
            ["precoder", "pac", "tolerance"] => self.pac.residual_tolerance = as_f64(key, v)?,
            ["precoder", "pac", "lambda_floor"] => self.pac.lambda_floor = as_f64(key, v)?,
            ["compensation", "schedule"] => self.compensation = parse_schedule(key, v)?,
            ["compensation", "k_f"] => self.k_f = as_f64(key, v)?,
            ["compensation", "k_p"] => self.k_p = as_f64(key, v)?,
            ["compensation", "k_i"] => self.k_i = as_f64(key, v)?,
            ["compensation", "lock_hz"] => self.lock_hz = as_f64(key, v)?,
            ["compensation", "max_frequency_hz"] => self.max_nco_frequency = as_f64(key, v)?,
            ["feedback", "latency_s"] => self.feedback_latency_s = as_f64(key, v)?,
            ["feedback", "staleness_s"] => self.staleness_s = as_f64(key, v)?,
            ["feedback", "outage"] => self.feedback_outages = parse_outages(key, v)?,
            ["terminal", "ema_factor"] => self.ema_factor = as_f64(key, v)?,
            ["terminal", "sync_threshold"] => self.sync_threshold = as_f64(key, v)?,
            ["terminal", "sinr_average_s"] => self.sinr_average_s = as_f64(key, v)?,
            ["terminal", "differential_window"] => self.differential_window = as_usize(key, v)?,
            ["modcod", "table"] => self.modcods = parse_modcods(key, v)?,
            _ => return Err(unknown()),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(Error::config(key, msg)) };
        check(
            self.duration_s > 0.0 && self.duration_s.is_finite(),
            "run.duration_s",
            "must be > 0",
        )?;
        check(
            self.warmup_s >= 0.0 && self.warmup_s < self.duration_s,
            "run.warmup_s",
            "must satisfy 0 <= warmup < duration",
        )?;
        check(
            self.symbol_rate > 0.0 && self.symbol_rate.is_finite(),
            "run.symbol_rate",
            "must be > 0",
        )?;
        self.layout.validate()?;
        check(self.drift_db_per_hour >= 0.0, "geometry.drift_db_per_hour", "must be >= 0")?;
        check(self.drift_time_scale > 0.0, "geometry.drift_time_scale", "must be > 0")?;
        for (u, (a, b)) in self.mixing.iter().enumerate() {
            let ok = (0.0..=1.0).contains(a) && (0.0..=1.0).contains(b) && a + b > 0.0;
            check(ok, &format!("mixing.ut{u}"), "need alpha, beta in [0, 1] with alpha + beta > 0")?;
        }
        for (u, row) in self.gain_db.iter().enumerate() {
            check(
                row.iter().all(|g| g.is_finite() || *g == f64::NEG_INFINITY),
                &format!("geometry.ut{u}.gain_db"),
                "must be finite or -inf",
            )?;
        }
        for (u, v) in self.noise_variance.iter().enumerate() {
            check(*v >= 0.0 && v.is_finite(), &format!("noise.ut{u}.variance"), "must be >= 0")?;
        }
        for (b, t) in self.transponders.iter().enumerate() {
            check(
                t.phase_noise_rate >= 0.0,
                &format!("transponder.b{b}.phase_noise_rate"),
                "must be >= 0",
            )?;
            check(t.gain_db.is_finite(), &format!("transponder.b{b}.gain_db"), "must be finite")?;
        }
        self.pac.validate().map_err(|e| match e {
            Error::Config { path, message } => Error::config(format!("precoder.{path}"), message),
            other => other,
        })?;
        check(self.sigma2_window > 0, "precoder.sigma2_window", "must be > 0")?;
        check(self.max_nco_frequency > 0.0, "compensation.max_frequency_hz", "must be > 0")?;
        check(self.k_f > 0.0 && self.k_f <= 1.0, "compensation.k_f", "must be in (0, 1]")?;
        check(self.k_p > 0.0 && self.k_p <= 1.0, "compensation.k_p", "must be in (0, 1]")?;
        check(self.k_i >= 0.0 && self.k_i < 1.0, "compensation.k_i", "must be in [0, 1)")?;
        check(self.lock_hz > 0.0, "compensation.lock_hz", "must be > 0")?;
        check(self.feedback_latency_s >= 0.0, "feedback.latency_s", "must be >= 0")?;
        check(self.staleness_s > 0.0, "feedback.staleness_s", "must be > 0")?;
        check((0.0..1.0).contains(&self.ema_factor), "terminal.ema_factor", "must be in [0, 1)")?;
        check(
            (0.0..=1.0).contains(&self.sync_threshold),
            "terminal.sync_threshold",
            "must be in [0, 1]",
        )?;
        check(self.sinr_average_s > 0.0, "terminal.sinr_average_s", "must be > 0")?;
        check(
            self.differential_window != 1,
            "terminal.differential_window",
            "needs at least 2 fields (or 0)",
        )?;
        Ok(())
    }

    /// Seconds per superframe.
    pub fn superframe_s(&self) -> f64 {
        self.layout.total_length() as f64 / self.symbol_rate
    }

    /// Resolved settings as `key = value` lines, in [`KEYS`] order.
    pub fn to_manifest(&self) -> String {
        let pair = |p: [f64; 2]| format!("[{}, {}]", p[0], p[1]);
        let sched = |e: Vec<String>| format!("[{}]", e.iter().map(|s| format!("\"{s}\"")).collect::<Vec<_>>().join(", "));
        let mut lines = Vec::new();
        for (key, _) in KEYS {
            let parts: Vec<&str> = key.split('.').collect();
            let value = match parts.as_slice() {
                ["run", "seed"] => self.seed.to_string(),
                ["run", "duration_s"] => self.duration_s.to_string(),
                ["run", "warmup_s"] => self.warmup_s.to_string(),
                ["run", "symbol_rate"] => self.symbol_rate.to_string(),
                ["run", "dense"] => self.dense.to_string(),
                ["layout", "sosf_length"] => self.layout.sosf_length.to_string(),
                ["layout", "pilot_spacing"] => self.layout.pilot_spacing.to_string(),
                ["layout", "frames_per_superframe"] => self.layout.frames_per_superframe.to_string(),
                ["layout", "data_frame_length"] => self.layout.data_frame_length.to_string(),
                ["geometry", ut, "gain_db"] => pair(self.gain_db[terminal_index(ut).unwrap()]),
                ["geometry", ut, "phase_deg"] => pair(self.phase_deg[terminal_index(ut).unwrap()]),
                ["geometry", "drift_db_per_hour"] => self.drift_db_per_hour.to_string(),
                ["geometry", "drift_time_scale"] => self.drift_time_scale.to_string(),
                ["mixing", ut, "alpha"] => self.mixing[terminal_index(ut).unwrap()].0.to_string(),
                ["mixing", ut, "beta"] => self.mixing[terminal_index(ut).unwrap()].1.to_string(),
                ["noise", ut, "variance"] => self.noise_variance[terminal_index(ut).unwrap()].to_string(),
                ["transponder", b, field] => {
                    let t = &self.transponders[beam_index(b).unwrap()];
                    match *field {
                        "frequency_hz" => t.frequency_hz,
                        "phase_rad" => t.phase_rad,
                        "phase_noise_rate" => t.phase_noise_rate,
                        _ => t.gain_db,
                    }
                    .to_string()
                }
                ["precoder", "schedule"] => sched(self.precoder.entries().iter().map(|(t, m)| format!("{t}:{m}")).collect()),
                ["precoder", "sigma2_window"] => self.sigma2_window.to_string(),
                ["precoder", "pac", "power_budget"] => pair(self.pac.power_budget),
                ["precoder", "pac", "max_iterations"] => self.pac.max_iterations.to_string(),
                ["precoder", "pac", "tolerance"] => format!("{:e}", self.pac.residual_tolerance),
                ["precoder", "pac", "lambda_floor"] => self.pac.lambda_floor.to_string(),
                ["compensation", "schedule"] => sched(self.compensation.entries().iter().map(|(t, s)| format!("{t}:{s}")).collect()),
                ["compensation", "k_f"] => self.k_f.to_string(),
                ["compensation", "k_p"] => self.k_p.to_string(),
                ["compensation", "k_i"] => self.k_i.to_string(),
                ["compensation", "lock_hz"] => self.lock_hz.to_string(),
                ["compensation", "max_frequency_hz"] => self.max_nco_frequency.to_string(),
                ["feedback", "latency_s"] => self.feedback_latency_s.to_string(),
                ["feedback", "staleness_s"] => self.staleness_s.to_string(),
                ["feedback", "outage"] => sched(self.feedback_outages.iter().map(|(a, b)| format!("{a}:{b}")).collect()),
                ["terminal", "ema_factor"] => self.ema_factor.to_string(),
                ["terminal", "sync_threshold"] => self.sync_threshold.to_string(),
                ["terminal", "sinr_average_s"] => self.sinr_average_s.to_string(),
                ["terminal", "differential_window"] => self.differential_window.to_string(),
                ["modcod", "table"] => sched(
                    self.modcods
                        .entries()
                        .iter()
                        .map(|e| format!("{}:{}", e.modcod, e.required_sinr_db))
                        .collect(),
                ),
                _ => unreachable!("key list and manifest out of step: {key}"),
            };
            lines.push(format!("{key} = {value}"));
        }
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ScenarioConfig::from_toml("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn nested_and_dotted_keys_agree() {
        let a = ScenarioConfig::from_toml("[geometry.ut0]\ngain_db = [0.0, 1.9]\n").unwrap();
        let b = ScenarioConfig::from_toml("geometry.ut0.gain_db = [0, 1.9]\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.gain_db[0], [0.0, 1.9]);
    }

    #[test]
    fn schedules_parse() {
        let cfg = ScenarioConfig::from_toml(
            r#"
            [precoder]
            schedule = ["0:unprecoded", "10:mmse", "20:mmse_pac"]
            [compensation]
            schedule = ["0:off", "5:on"]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.precoder.at(0.0), PrecoderMode::Unprecoded);
        assert_eq!(cfg.precoder.at(10.0), PrecoderMode::Mmse);
        assert_eq!(cfg.precoder.at(99.0), PrecoderMode::MmsePac);
        assert_eq!(cfg.compensation.at(4.9), Switch(false));
        assert_eq!(cfg.compensation.at(5.0), Switch(true));
    }

    fn err_path(text: &str) -> String {
        match ScenarioConfig::from_toml(text) {
            Err(Error::Config { path, .. }) => path,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(err_path("run.duration_s = -1"), "run.duration_s");
        assert_eq!(err_path("run.bogus = 1"), "run.bogus");
        assert_eq!(err_path("geometry.ut2.gain_db = [0, 0]"), "geometry.ut2.gain_db");
        assert_eq!(err_path("geometry.ut0.gain_db = [0]"), "geometry.ut0.gain_db");
        assert_eq!(err_path("precoder.schedule = [\"5:mmse\"]"), "precoder.schedule");
        assert_eq!(err_path("precoder.schedule = [\"0:mmse\", \"0:pac\"]"), "precoder.schedule");
        assert_eq!(err_path("precoder.schedule = [\"0:zf\"]"), "precoder.schedule");
        assert_eq!(err_path("mixing.ut1.alpha = 0\nmixing.ut1.beta = 0"), "mixing.ut1");
        assert_eq!(err_path("modcod.table = [\"QPSK 1/2:3\", \"QPSK 2/3:2\"]"), "modcod.table");
        assert_eq!(err_path("precoder.pac.power_budget = [1, 0]"), "precoder.pac.power_budget");
        assert_eq!(err_path("run.dense = 3"), "run.dense");
        assert_eq!(err_path("layout.pilot_spacing = 10"), "layout.pilot_spacing");
        assert_eq!(err_path("= ="), "<file>");
    }

    #[test]
    fn manifest_reparses_to_same_config() {
        let mut cfg = ScenarioConfig::from_toml(
            r#"
            run.seed = 9
            precoder.schedule = ["0:unprecoded", "2.5:mmse_pac"]
            feedback.outage = ["1:2"]
            precoder.pac.power_budget = [0.7, 0.45]
            "#,
        )
        .unwrap();
        cfg.gain_db[1] = [-11.8, 0.125];
        let again = ScenarioConfig::from_toml(&cfg.to_manifest()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(cfg.to_manifest().lines().count(), KEYS.len());
    }
}
