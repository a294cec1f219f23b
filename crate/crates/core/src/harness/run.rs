//! The closed loop: gateway, transponders, terminals and the return path,
//! one superframe per step.

use std::collections::VecDeque;

use crate::channel::{forward_link, LinkGeometry, MixingConfig, TerminalFrontEnd, TransponderState};
use crate::error::Result;
use crate::framing::superframe::FramePayload;
use crate::gateway::{Gateway, GatewayConfig};
use crate::linalg::{C64, NUM_BEAMS};
use crate::noise::{derive_seed, prbs_bits, GaussianSource, NoiseSpec};
use crate::terminal::{CsiReport, Terminal, TerminalConfig};

use super::config::ScenarioConfig;
use super::metrics::{Aggregates, GatewayRow, MetricsLog, SeriesRow};

// Labels mixed into the master seed, one per random source.
const SEED_GEOMETRY: u64 = 1;
const SEED_TRANSPONDER: u64 = 10;
const SEED_NOISE: u64 = 20;
const SEED_DATA: u64 = 1 << 32;

/// Number of superframes a run of `cfg` covers.
pub fn superframe_count(cfg: &ScenarioConfig) -> usize {
    ((cfg.duration_s / cfg.superframe_s()).floor() as usize).max(1)
}

/// Run the scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsLog> {
    run_scenario_with(cfg, |_| {})
}

/// As [`run_scenario`], handing every report to `on_report` when the
/// terminal emits it.
pub fn run_scenario_with(cfg: &ScenarioConfig, mut on_report: impl FnMut(&CsiReport)) -> Result<MetricsLog> {
    cfg.validate()?;
    let fs = cfg.symbol_rate;
    let layout = cfg.layout;
    let sf_len = layout.total_length() as u64;

    let mut gateway = Gateway::new(
        GatewayConfig {
            pac: cfg.pac.clone(),
            staleness_s: cfg.staleness_s,
            sigma2_window: cfg.sigma2_window,
            k_f: cfg.k_f,
            k_p: cfg.k_p,
            k_i: cfg.k_i,
            lock_hz: cfg.lock_hz,
            max_nco_frequency: cfg.max_nco_frequency,
            reference_terminal: 0,
        },
        layout,
        fs,
    )?;

    let static_geometry = LinkGeometry::from_db(cfg.gain_db, cfg.phase_deg).matrix();
    let mut geometry = LinkGeometry::new(
        static_geometry.0,
        cfg.drift_db_per_hour,
        cfg.drift_time_scale,
        derive_seed(cfg.seed, SEED_GEOMETRY),
    );
    let mut transponders: [TransponderState; NUM_BEAMS] = std::array::from_fn(|b| {
        let t = &cfg.transponders[b];
        TransponderState::new(
            t.frequency_hz,
            t.phase_rad,
            t.phase_noise_rate,
            C64::new(10f64.powf(t.gain_db / 20.0), 0.0),
            derive_seed(cfg.seed, SEED_TRANSPONDER + b as u64),
        )
    });
    let mut front_ends = Vec::with_capacity(NUM_BEAMS);
    let mut terminals = Vec::with_capacity(NUM_BEAMS);
    for u in 0..NUM_BEAMS {
        let (alpha, beta) = cfg.mixing[u];
        front_ends.push(TerminalFrontEnd {
            mixing: MixingConfig::new(alpha, beta)?,
            noise: GaussianSource::new(NoiseSpec::new(cfg.noise_variance[u], derive_seed(cfg.seed, SEED_NOISE + u as u64))),
        });
        let mut tc = TerminalConfig::new(u);
        tc.ema_factor = cfg.ema_factor;
        tc.sync_threshold = cfg.sync_threshold;
        tc.sinr_average_s = cfg.sinr_average_s;
        tc.differential_window = (cfg.differential_window > 0).then_some(cfg.differential_window);
        tc.modcods = cfg.modcods.clone();
        terminals.push(Terminal::new(tc, &layout));
    }
    let mut front_ends: [TerminalFrontEnd; NUM_BEAMS] = front_ends.try_into().expect("two front ends");

    let latency = (cfg.feedback_latency_s * fs).round() as u64;
    let in_outage = |sym: u64| {
        let t = sym as f64 / fs;
        cfg.feedback_outages.iter().any(|&(a, b)| t >= a && t < b)
    };
    let lowest = cfg.modcods.entries()[0].modcod;
    let mut tx_modcod = [lowest; NUM_BEAMS];
    let mut in_flight: VecDeque<(u64, CsiReport)> = VecDeque::new();

    let n = superframe_count(cfg);
    let mut series: [Vec<SeriesRow>; NUM_BEAMS] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut gateway_rows = Vec::with_capacity(n);

    for k in 0..n as u64 {
        let start = k * sf_len;
        let t = start as f64 / fs;

        gateway.set_compensation(cfg.compensation.at(t).0, start);
        while in_flight.front().is_some_and(|(arrival, _)| *arrival <= start) {
            let (arrival, report) = in_flight.pop_front().unwrap();
            if !in_outage(arrival) {
                gateway.ingest(report, start);
            }
        }
        let record = gateway.update_precoder(cfg.precoder.at(t), start);
        gateway_rows.push(GatewayRow::from(&record));

        let payload: Vec<Vec<FramePayload>> = tx_modcod
            .iter()
            .enumerate()
            .map(|(b, &modcod)| {
                (0..layout.frames_per_superframe)
                    .map(|f| FramePayload {
                        modcod,
                        bits: cfg.dense.then(|| {
                            let label = SEED_DATA + (k * NUM_BEAMS as u64 + b as u64) * layout.frames_per_superframe as u64 + f as u64;
                            prbs_bits(
                                derive_seed(cfg.seed, label),
                                layout.data_frame_length * modcod.modulation.bits_per_symbol(),
                            )
                        }),
                    })
                    .collect()
            })
            .collect();
        let tx = gateway.transmit_superframe(&payload, start)?;

        geometry.advance(cfg.superframe_s());
        let link = forward_link(&tx, &geometry, &mut transponders, &mut front_ends, fs)?;

        for (u, terminal) in terminals.iter_mut().enumerate() {
            let rx = terminal.receive(&link.received[u], &layout, start, fs)?;
            if let Some(m) = rx.modcod {
                tx_modcod[u] = m;
            }
            if let Some(report) = rx.report {
                on_report(&report);
                in_flight.push_back((report.t_symbol + latency, report));
            }
            series[u].push(SeriesRow {
                t_s: t,
                t_symbol: start,
                sinr_db: rx.sinr_db,
                sinr_avg_db: rx.sinr_avg_db,
                csi_db: rx.csi_magnitude_db,
                diff_f_hz: rx.differential.map_or(f64::NAN, |d| d.frequency),
                diff_phase_deg: rx.differential.map_or(f64::NAN, |d| d.phase.to_degrees()),
                modcod: rx.modcod,
                delivered_bits: rx.delivered_bits,
                sync_metric: rx.sync_metric,
            });
        }
    }

    let aggregates = Aggregates::from_series(&series, &gateway_rows, cfg.superframe_s(), cfg.warmup_s, fs);
    Ok(MetricsLog {
        symbol_rate: fs,
        series,
        gateway: gateway_rows,
        aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::PrecoderMode;
    use crate::harness::config::{Schedule, Switch, TransponderConfig};
    use crate::harness::metrics::StatusKind;
    use crate::terminal::SINR_CAP_DB;

    fn trivial() -> ScenarioConfig {
        let quiet = TransponderConfig {
            frequency_hz: 0.0,
            phase_rad: 0.0,
            phase_noise_rate: 0.0,
            gain_db: 0.0,
        };
        ScenarioConfig {
            duration_s: 1.0,
            warmup_s: 0.0,
            gain_db: [[0.0, f64::NEG_INFINITY], [f64::NEG_INFINITY, 0.0]],
            phase_deg: [[0.0; 2]; 2],
            drift_db_per_hour: 0.0,
            noise_variance: [0.0; 2],
            transponders: [quiet.clone(), quiet],
            precoder: Schedule::constant(PrecoderMode::Unprecoded),
            compensation: Schedule::constant(Switch(false)),
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn lossless_pipeline_caps_sinr_and_delivers_everything() {
        let cfg = trivial();
        let log = run_scenario(&cfg).unwrap();
        let top = cfg.modcods.entries().last().unwrap().modcod;
        let per_sf = cfg.layout.frames_per_superframe as f64 * cfg.layout.data_frame_length as f64 * top.efficiency();
        let analytic = per_sf / cfg.superframe_s() / 1e6;
        for u in 0..2 {
            for r in &log.series[u] {
                assert_eq!(r.sinr_db, SINR_CAP_DB);
                assert_eq!(r.modcod, Some(top));
            }
            assert!((log.aggregates.goodput_mbps[u] - analytic).abs() < 1e-9 * analytic);
        }
        assert_eq!(log.series[0].len(), superframe_count(&cfg));
        assert_eq!(log.aggregates.nosync, [0, 0]);
    }

    #[test]
    fn same_seed_same_bytes() {
        let mut cfg = ScenarioConfig {
            duration_s: 1.0,
            warmup_s: 0.5,
            ..ScenarioConfig::default()
        };
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a.series_csv(0), b.series_csv(0));
        assert_eq!(a.series_csv(1), b.series_csv(1));
        assert_eq!(a.gateway_csv(), b.gateway_csv());
        cfg.seed += 1;
        let c = run_scenario(&cfg).unwrap();
        assert_ne!(a.series_csv(0), c.series_csv(0));
    }

    #[test]
    fn nothing_delivered_is_positive_zero() {
        let cfg = ScenarioConfig {
            noise_variance: [0.8; 2],
            ..trivial()
        };
        let log = run_scenario(&cfg).unwrap();
        // Synced, but below every MODCOD threshold.
        assert!(log.series[0].iter().all(|r| r.synced() && r.modcod.is_none()));
        assert!(log.series[0].iter().all(|r| r.delivered_bits.to_bits() == 0));
        assert_eq!(log.aggregates.goodput_mbps[0].to_bits(), 0);
        assert!(!log.series_csv(0).contains("-0e0"));
    }

    #[test]
    fn row_count_matches_duration() {
        let mut cfg = trivial();
        cfg.duration_s = 2.0;
        let log = run_scenario(&cfg).unwrap();
        let expect = (2.0 / cfg.superframe_s()).floor() as usize;
        assert_eq!(log.series[1].len(), expect);
        assert_eq!(log.gateway.len(), expect);
        assert!(log.series[0].windows(2).all(|w| w[1].t_s > w[0].t_s));
    }

    #[test]
    fn outage_holds_precoder_once_csi_goes_stale() {
        let cfg = ScenarioConfig {
            duration_s: 6.0,
            warmup_s: 0.0,
            feedback_outages: vec![(1.0, 6.0)],
            ..ScenarioConfig::default()
        };
        let log = run_scenario(&cfg).unwrap();
        let held: Vec<f64> = log
            .gateway
            .iter()
            .filter(|g| g.status == StatusKind::Held)
            .map(|g| g.t_symbol as f64 / cfg.symbol_rate)
            .collect();
        // Held before the first reports arrive, then again once the last
        // pre-outage report ages out.
        assert!(held[0] < 1.0);
        let later: Vec<f64> = held.iter().cloned().filter(|&t| t > 1.0).collect();
        assert!(!later.is_empty());
        assert!(
            later[0] > 1.0 + cfg.staleness_s - cfg.feedback_latency_s - 0.1,
            "held at {}",
            later[0]
        );
        assert!(later[0] < 1.0 + cfg.staleness_s + 0.2, "held at {}", later[0]);
    }
}
