//! Preset scenarios: the compensation loop pair, CSI stability and the
//! precoding-gain triple.

use crate::error::{Error, Result};
use crate::gateway::PrecoderMode;

use super::config::{ScenarioConfig, Schedule, Switch, TransponderConfig};
use super::run::run_scenario;

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &["comp", "csi", "table1"];

/// One scenario of a preset, with the subdirectory it is written to.
#[derive(Debug, Clone)]
pub struct PresetRun {
    pub name: String,
    pub config: ScenarioConfig,
    /// Comment lines for the manifest.
    pub note: String,
}

fn transponder(frequency_hz: f64, phase_rad: f64, phase_noise_rate: f64) -> TransponderConfig {
    TransponderConfig {
        frequency_hz,
        phase_rad,
        phase_noise_rate,
        gain_db: 0.0,
    }
}

/// 25 s with a 50 Hz differential LO offset, loop off then on. Nothing
/// else differs between the two.
pub fn compensation_experiment() -> [ScenarioConfig; 2] {
    let base = ScenarioConfig {
        duration_s: 25.0,
        warmup_s: 5.0,
        gain_db: [[0.0, -6.0], [-6.0, 0.0]],
        phase_deg: [[0.0, 30.0], [-50.0, 0.0]],
        drift_db_per_hour: 0.0,
        noise_variance: [0.01; 2],
        transponders: [transponder(12.0, 0.0, 0.005), transponder(62.0, 2.0, 0.005)],
        precoder: Schedule::constant(PrecoderMode::Unprecoded),
        ..ScenarioConfig::default()
    };
    let off = ScenarioConfig {
        compensation: Schedule::constant(Switch(false)),
        ..base.clone()
    };
    let on = ScenarioConfig {
        compensation: Schedule::constant(Switch(true)),
        ..base
    };
    [off, on]
}

/// Two hours of link drift compressed into two minutes.
pub const CSI_TIME_SCALE: f64 = 60.0;

/// CSI magnitudes under slow gain drift, with MMSE precoding and the loop
/// running.
pub fn csi_stability() -> ScenarioConfig {
    ScenarioConfig {
        duration_s: 120.0,
        warmup_s: 5.0,
        gain_db: [[0.0, -8.0], [-9.0, 0.0]],
        phase_deg: [[0.0, 60.0], [-20.0, 0.0]],
        drift_db_per_hour: 0.2,
        drift_time_scale: CSI_TIME_SCALE,
        noise_variance: [0.01; 2],
        precoder: Schedule::constant(PrecoderMode::Mmse),
        compensation: Schedule::constant(Switch(true)),
        ..ScenarioConfig::default()
    }
}

/// [`csi_stability`] with every random and moving part removed.
pub fn csi_stability_noiseless() -> ScenarioConfig {
    ScenarioConfig {
        drift_db_per_hour: 0.0,
        noise_variance: [0.0; 2],
        transponders: [transponder(0.0, 0.0, 0.0), transponder(0.0, 0.5, 0.0)],
        compensation: Schedule::constant(Switch(false)),
        ..csi_stability()
    }
}

/// Unprecoded SINR targets of the calibrated two-terminal scenario, dB.
pub const TABLE1_TARGETS_DB: [f64; 2] = [-2.0, 5.0];

/// The precoding-gain scenario before noise calibration. Terminal 0 sees
/// the other beam stronger than its own; terminal 1 is nearly
/// interference free.
pub fn precoding_gains_base() -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        duration_s: 15.0,
        warmup_s: 3.0,
        gain_db: [[0.0, 1.9], [-11.8, 0.0]],
        phase_deg: [[0.0, 112.5], [0.0, 0.0]],
        drift_db_per_hour: 0.0,
        noise_variance: [0.036, 0.25],
        // Terminal 1's weak beam-0 entry needs ~100 pilot fields of
        // smoothing to keep the precoder from chasing estimation noise.
        ema_factor: 0.98,
        precoder: Schedule::constant(PrecoderMode::Unprecoded),
        compensation: Schedule::constant(Switch(true)),
        ..ScenarioConfig::default()
    };
    cfg.pac.power_budget = [0.65, 0.45];
    cfg
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub noise_variance: [f64; 2],
    /// Measured unprecoded SINR at the calibrated noise, dB.
    pub sinr_db: [f64; 2],
    pub runs: usize,
}

/// Bisect each terminal's noise variance (in log scale) until its measured
/// unprecoded mean SINR is within `tolerance_db` of the target. The
/// terminals are independent, so both are bisected in the same runs.
pub fn calibrate_noise(base: &ScenarioConfig, targets_db: [f64; 2], tolerance_db: f64) -> Result<Calibration> {
    let mut probe = base.clone();
    probe.precoder = Schedule::constant(PrecoderMode::Unprecoded);
    probe.duration_s = 1.0;
    probe.warmup_s = 0.0;
    let mut lo = [-7.0f64; 2];
    let mut hi = [2.0f64; 2];
    let mut done = [false; 2];
    let mut sinr = [f64::NAN; 2];
    for runs in 1..=60 {
        for u in 0..2 {
            if !done[u] {
                probe.noise_variance[u] = 10f64.powf((lo[u] + hi[u]) / 2.0);
            }
        }
        let log = run_scenario(&probe)?;
        for u in 0..2 {
            if done[u] {
                continue;
            }
            sinr[u] = log.aggregates.mean_sinr_db[u];
            let err = sinr[u] - targets_db[u];
            if err.abs() < tolerance_db {
                done[u] = true;
            } else if err > 0.0 {
                lo[u] = (lo[u] + hi[u]) / 2.0;
            } else {
                hi[u] = (lo[u] + hi[u]) / 2.0;
            }
        }
        if done == [true; 2] {
            return Ok(Calibration {
                noise_variance: probe.noise_variance,
                sinr_db: sinr,
                runs,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: 60,
        residual: (0..2).map(|u| (sinr[u] - targets_db[u]).abs()).fold(0.0, f64::max),
    })
}

/// Calibrated Unprecoded, MMSE and MMSE-PAC scenarios, identical except for
/// the precoder.
pub fn precoding_gains() -> Result<([ScenarioConfig; 3], Calibration)> {
    precoding_gains_from(precoding_gains_base())
}

fn precoding_gains_from(mut base: ScenarioConfig) -> Result<([ScenarioConfig; 3], Calibration)> {
    let cal = calibrate_noise(&base, TABLE1_TARGETS_DB, 0.02)?;
    base.noise_variance = cal.noise_variance;
    let triple = [PrecoderMode::Unprecoded, PrecoderMode::Mmse, PrecoderMode::MmsePac].map(|m| ScenarioConfig {
        precoder: Schedule::constant(m),
        ..base.clone()
    });
    Ok((triple, cal))
}

/// Scenarios of the named preset.
pub fn preset(name: &str) -> Result<Vec<PresetRun>> {
    preset_with(name, |_| Ok(()))
}

/// As [`preset`], with `adjust` applied to every scenario before it is
/// finalized. For `table1` that is before noise calibration, so calibration
/// still overrides `terminal.noise_variance`.
pub fn preset_with(name: &str, adjust: impl Fn(&mut ScenarioConfig) -> Result<()>) -> Result<Vec<PresetRun>> {
    let run = |name: &str, mut config: ScenarioConfig, note: String| -> Result<PresetRun> {
        adjust(&mut config)?;
        config.validate()?;
        Ok(PresetRun {
            name: name.to_string(),
            config,
            note,
        })
    };
    match name {
        "comp" => {
            let [off, on] = compensation_experiment();
            let note = "differential LO offset 50 Hz; the two runs differ only in compensation.schedule".to_string();
            Ok(vec![run("loop_off", off, note.clone())?, run("loop_on", on, note)?])
        }
        "csi" => {
            let note = format!(
                "two hours of drift run as {} s at drift_time_scale {CSI_TIME_SCALE}",
                csi_stability().duration_s
            );
            Ok(vec![
                run("drift", csi_stability(), note)?,
                run("noiseless", csi_stability_noiseless(), "no noise, drift or LO motion".to_string())?,
            ])
        }
        "table1" => {
            let mut base = precoding_gains_base();
            adjust(&mut base)?;
            let (triple, cal) = precoding_gains_from(base)?;
            let note = format!(
                "noise calibrated to unprecoded SINR {:?} dB: measured {:.3} / {:.3} dB after {} runs",
                TABLE1_TARGETS_DB, cal.sinr_db[0], cal.sinr_db[1], cal.runs
            );
            triple
                .into_iter()
                .zip(["unprecoded", "mmse", "mmse_pac"])
                .map(|(config, n)| {
                    config.validate()?;
                    Ok(PresetRun {
                        name: n.to_string(),
                        config,
                        note: note.clone(),
                    })
                })
                .collect()
        }
        other => Err(Error::config(
            "preset",
            format!("unknown preset `{other}`, expected one of {PRESETS:?}"),
        )),
    }
}
