//! Run log, aggregates and their CSV form.
//!
//! Floats are written in shortest round-trip exponent form (`{:e}`), so
//! parsing a written log gives back the same values bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::framing::modulation::Modcod;
use crate::gateway::{GatewayRecord, PrecoderMode, PrecoderStatus};
use crate::linalg::{Mat2, C64, NUM_BEAMS};
use crate::terminal::{db_to_linear, linear_to_db};

pub const SERIES_HEADER: &str =
    "t_s,t_symbol,sinr_db,sinr_avg_db,csi0_db,csi1_db,diff_f_hz,diff_phase_deg,modcod,delivered_bits,sync_metric";

pub const GATEWAY_HEADER: &str =
    "t_symbol,mode,nco_f_hz,nco_phase_rad,w11_re,w11_im,w12_re,w12_im,w21_re,w21_im,w22_re,w22_im,a1,a2,residual_pac,csi_age_s,status";

pub const AGGREGATES_HEADER: &str = "metric,value";

/// One superframe as seen by one terminal. NaN marks a value that could not
/// be measured (lost sync, too few pilot fields).
#[derive(Debug, Clone)]
pub struct SeriesRow {
    pub t_s: f64,
    pub t_symbol: u64,
    pub sinr_db: f64,
    pub sinr_avg_db: f64,
    pub csi_db: [f64; NUM_BEAMS],
    pub diff_f_hz: f64,
    pub diff_phase_deg: f64,
    /// None when no MODCOD cleared its threshold.
    pub modcod: Option<Modcod>,
    pub delivered_bits: f64,
    pub sync_metric: f64,
}

impl SeriesRow {
    pub fn synced(&self) -> bool {
        !self.sinr_db.is_nan()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatusKind {
    Fresh,
    Held,
    Fallback,
}

impl StatusKind {
    fn name(self) -> &'static str {
        match self {
            StatusKind::Fresh => "fresh",
            StatusKind::Held => "held",
            StatusKind::Fallback => "fallback",
        }
    }
}

impl From<&PrecoderStatus> for StatusKind {
    fn from(s: &PrecoderStatus) -> Self {
        match s {
            PrecoderStatus::Fresh => StatusKind::Fresh,
            PrecoderStatus::Held(_) => StatusKind::Held,
            PrecoderStatus::Fallback(_) => StatusKind::Fallback,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GatewayRow {
    pub t_symbol: u64,
    pub mode: PrecoderMode,
    pub nco_f_hz: f64,
    pub nco_phase_rad: f64,
    pub w: Mat2,
    /// Row norms divided out by the normalization.
    pub a: [f64; NUM_BEAMS],
    pub residual_pac: f64,
    pub csi_age_s: f64,
    pub status: StatusKind,
}

impl From<&GatewayRecord> for GatewayRow {
    fn from(r: &GatewayRecord) -> Self {
        GatewayRow {
            t_symbol: r.t_symbol,
            mode: r.mode,
            nco_f_hz: r.nco_frequency,
            nco_phase_rad: r.nco_phase,
            w: r.w,
            a: r.row_norms,
            residual_pac: r.residual_pac,
            csi_age_s: r.csi_age_s,
            status: (&r.status).into(),
        }
    }
}

/// Per-run summary over the rows at or after the warm-up.
#[derive(Debug, Clone)]
pub struct Aggregates {
    pub superframe_s: f64,
    pub warmup_s: f64,
    pub superframes: usize,
    /// Linear mean of the per-superframe SINR, in dB.
    pub mean_sinr_db: [f64; NUM_BEAMS],
    pub goodput_mbps: [f64; NUM_BEAMS],
    /// Sum of the per-terminal goodputs.
    pub system_goodput_mbps: f64,
    pub nosync: [usize; NUM_BEAMS],
    pub held: usize,
    pub fallback: usize,
}

impl Aggregates {
    pub fn from_series(
        series: &[Vec<SeriesRow>; NUM_BEAMS],
        gateway: &[GatewayRow],
        superframe_s: f64,
        warmup_s: f64,
        symbol_rate: f64,
    ) -> Self {
        let mut mean_sinr_db = [f64::NAN; NUM_BEAMS];
        let mut goodput_mbps = [0.0; NUM_BEAMS];
        let mut nosync = [0; NUM_BEAMS];
        for u in 0..NUM_BEAMS {
            let rows: Vec<&SeriesRow> = series[u].iter().filter(|r| r.t_s >= warmup_s).collect();
            let synced: Vec<f64> = rows.iter().filter(|r| r.synced()).map(|r| db_to_linear(r.sinr_db)).collect();
            if !synced.is_empty() {
                mean_sinr_db[u] = linear_to_db(synced.iter().sum::<f64>() / synced.len() as f64);
            }
            if !rows.is_empty() {
                let bits = rows.iter().fold(0.0, |acc, r| acc + r.delivered_bits);
                goodput_mbps[u] = bits / (rows.len() as f64 * superframe_s) / 1e6;
            }
            nosync[u] = series[u].iter().filter(|r| !r.synced()).count();
        }
        let warm = |t: u64| t as f64 / symbol_rate >= warmup_s;
        Aggregates {
            superframe_s,
            warmup_s,
            superframes: series[0].len(),
            mean_sinr_db,
            goodput_mbps,
            system_goodput_mbps: goodput_mbps.iter().fold(0.0, |acc, g| acc + g),
            nosync,
            held: gateway.iter().filter(|g| warm(g.t_symbol) && g.status == StatusKind::Held).count(),
            fallback: gateway
                .iter()
                .filter(|g| warm(g.t_symbol) && g.status == StatusKind::Fallback)
                .count(),
        }
    }

    fn rows(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("superframe_s".to_string(), format!("{:e}", self.superframe_s)),
            ("warmup_s".into(), format!("{:e}", self.warmup_s)),
            ("superframes".into(), self.superframes.to_string()),
        ];
        for u in 0..NUM_BEAMS {
            out.push((format!("ut{u}_mean_sinr_db"), format!("{:e}", self.mean_sinr_db[u])));
            out.push((format!("ut{u}_goodput_mbps"), format!("{:e}", self.goodput_mbps[u])));
            out.push((format!("ut{u}_nosync"), self.nosync[u].to_string()));
        }
        out.push(("system_goodput_mbps".into(), format!("{:e}", self.system_goodput_mbps)));
        out.push(("precoder_held".into(), self.held.to_string()));
        out.push(("precoder_fallback".into(), self.fallback.to_string()));
        out
    }
}

#[derive(Debug, Clone)]
pub struct MetricsLog {
    pub symbol_rate: f64,
    pub series: [Vec<SeriesRow>; NUM_BEAMS],
    pub gateway: Vec<GatewayRow>,
    pub aggregates: Aggregates,
}

fn same_f(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

fn same_series(a: &SeriesRow, b: &SeriesRow) -> bool {
    same_f(a.t_s, b.t_s)
        && a.t_symbol == b.t_symbol
        && same_f(a.sinr_db, b.sinr_db)
        && same_f(a.sinr_avg_db, b.sinr_avg_db)
        && same_f(a.csi_db[0], b.csi_db[0])
        && same_f(a.csi_db[1], b.csi_db[1])
        && same_f(a.diff_f_hz, b.diff_f_hz)
        && same_f(a.diff_phase_deg, b.diff_phase_deg)
        && a.modcod == b.modcod
        && same_f(a.delivered_bits, b.delivered_bits)
        && same_f(a.sync_metric, b.sync_metric)
}

fn same_gateway(a: &GatewayRow, b: &GatewayRow) -> bool {
    let w =
        a.w.0
            .iter()
            .flatten()
            .zip(b.w.0.iter().flatten())
            .all(|(x, y)| same_f(x.re, y.re) && same_f(x.im, y.im));
    a.t_symbol == b.t_symbol
        && a.mode == b.mode
        && same_f(a.nco_f_hz, b.nco_f_hz)
        && same_f(a.nco_phase_rad, b.nco_phase_rad)
        && w
        && same_f(a.a[0], b.a[0])
        && same_f(a.a[1], b.a[1])
        && same_f(a.residual_pac, b.residual_pac)
        && same_f(a.csi_age_s, b.csi_age_s)
        && a.status == b.status
}

impl MetricsLog {
    /// Field-by-field equality with NaN equal to NaN.
    pub fn same_as(&self, other: &MetricsLog) -> bool {
        let series = (0..NUM_BEAMS).all(|u| {
            self.series[u].len() == other.series[u].len() && self.series[u].iter().zip(&other.series[u]).all(|(a, b)| same_series(a, b))
        });
        series
            && self.gateway.len() == other.gateway.len()
            && self.gateway.iter().zip(&other.gateway).all(|(a, b)| same_gateway(a, b))
            && self.aggregates.rows() == other.aggregates.rows()
    }

    pub fn series_csv(&self, u: usize) -> String {
        let mut s = String::from(SERIES_HEADER);
        s.push('\n');
        for r in &self.series[u] {
            let modcod = r.modcod.map_or_else(|| "none".to_string(), |m| m.to_string());
            writeln!(
                s,
                "{:e},{},{:e},{:e},{:e},{:e},{:e},{:e},{},{:e},{:e}",
                r.t_s,
                r.t_symbol,
                r.sinr_db,
                r.sinr_avg_db,
                r.csi_db[0],
                r.csi_db[1],
                r.diff_f_hz,
                r.diff_phase_deg,
                modcod,
                r.delivered_bits,
                r.sync_metric
            )
            .unwrap();
        }
        s
    }

    pub fn gateway_csv(&self) -> String {
        let mut s = String::from(GATEWAY_HEADER);
        s.push('\n');
        for g in &self.gateway {
            write!(s, "{},{},{:e},{:e}", g.t_symbol, g.mode, g.nco_f_hz, g.nco_phase_rad).unwrap();
            for v in g.w.0.iter().flatten() {
                write!(s, ",{:e},{:e}", v.re, v.im).unwrap();
            }
            writeln!(
                s,
                ",{:e},{:e},{:e},{:e},{}",
                g.a[0],
                g.a[1],
                g.residual_pac,
                g.csi_age_s,
                g.status.name()
            )
            .unwrap();
        }
        s
    }

    pub fn aggregates_csv(&self) -> String {
        let mut s = String::from(AGGREGATES_HEADER);
        s.push('\n');
        for (k, v) in self.aggregates.rows() {
            writeln!(s, "{k},{v}").unwrap();
        }
        s
    }

    /// Parse the three CSV kinds back into a log.
    pub fn parse(series: [&str; NUM_BEAMS], gateway: &str, aggregates: &str, symbol_rate: f64) -> Result<MetricsLog> {
        let series = [
            parse_series(series[0], "terminal0_series.csv")?,
            parse_series(series[1], "terminal1_series.csv")?,
        ];
        let gateway = parse_gateway(gateway)?;
        let aggregates = parse_aggregates(aggregates)?;
        Ok(MetricsLog {
            symbol_rate,
            series,
            gateway,
            aggregates,
        })
    }

    /// Read a directory written by [`emit_csv`].
    pub fn read_dir(dir: &Path, symbol_rate: f64) -> Result<MetricsLog> {
        let read = |name: &str| fs::read_to_string(dir.join(name)).map_err(|e| Error::Io(format!("{name}: {e}")));
        let (s0, s1) = (read("terminal0_series.csv")?, read("terminal1_series.csv")?);
        MetricsLog::parse([&s0, &s1], &read("gateway_log.csv")?, &read("aggregates.csv")?, symbol_rate)
    }
}

/// Write `terminal<u>_series.csv`, `gateway_log.csv` and `aggregates.csv`
/// into `dir`, creating it if needed.
pub fn emit_csv(log: &MetricsLog, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for u in 0..NUM_BEAMS {
        fs::write(dir.join(format!("terminal{u}_series.csv")), log.series_csv(u))?;
    }
    fs::write(dir.join("gateway_log.csv"), log.gateway_csv())?;
    fs::write(dir.join("aggregates.csv"), log.aggregates_csv())?;
    Ok(())
}

fn bad(file: &str, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Io(format!("{file}:{line}: {msg}"))
}

fn body<'a>(text: &'a str, header: &str, file: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)> + 'a> {
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(bad(file, 1, "unexpected header"));
    }
    let width = header.split(',').count();
    let rows: Vec<(usize, Vec<&str>)> = lines.enumerate().map(|(i, l)| (i + 2, l.split(',').collect())).collect();
    if let Some((n, r)) = rows.iter().find(|(_, r)| r.len() != width) {
        return Err(bad(file, *n, format!("expected {width} fields, got {}", r.len())));
    }
    Ok(rows.into_iter())
}

fn num<T: std::str::FromStr>(s: &str, file: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| bad(file, line, format!("bad number `{s}`")))
}

fn parse_series(text: &str, file: &str) -> Result<Vec<SeriesRow>> {
    body(text, SERIES_HEADER, file)?
        .map(|(n, f)| {
            let modcod = match f[8] {
                "none" => None,
                m => Some(Modcod::parse(m).ok_or_else(|| bad(file, n, format!("bad modcod `{m}`")))?),
            };
            Ok(SeriesRow {
                t_s: num(f[0], file, n)?,
                t_symbol: num(f[1], file, n)?,
                sinr_db: num(f[2], file, n)?,
                sinr_avg_db: num(f[3], file, n)?,
                csi_db: [num(f[4], file, n)?, num(f[5], file, n)?],
                diff_f_hz: num(f[6], file, n)?,
                diff_phase_deg: num(f[7], file, n)?,
                modcod,
                delivered_bits: num(f[9], file, n)?,
                sync_metric: num(f[10], file, n)?,
            })
        })
        .collect()
}

fn parse_gateway(text: &str) -> Result<Vec<GatewayRow>> {
    let file = "gateway_log.csv";
    body(text, GATEWAY_HEADER, file)?
        .map(|(n, f)| {
            let c = |i: usize| -> Result<C64> { Ok(C64::new(num(f[i], file, n)?, num(f[i + 1], file, n)?)) };
            let status = match f[16] {
                "fresh" => StatusKind::Fresh,
                "held" => StatusKind::Held,
                "fallback" => StatusKind::Fallback,
                s => return Err(bad(file, n, format!("bad status `{s}`"))),
            };
            Ok(GatewayRow {
                t_symbol: num(f[0], file, n)?,
                mode: f[1].parse().map_err(|e: String| bad(file, n, e))?,
                nco_f_hz: num(f[2], file, n)?,
                nco_phase_rad: num(f[3], file, n)?,
                w: Mat2([[c(4)?, c(6)?], [c(8)?, c(10)?]]),
                a: [num(f[12], file, n)?, num(f[13], file, n)?],
                residual_pac: num(f[14], file, n)?,
                csi_age_s: num(f[15], file, n)?,
                status,
            })
        })
        .collect()
}

fn parse_aggregates(text: &str) -> Result<Aggregates> {
    let file = "aggregates.csv";
    let map: std::collections::HashMap<&str, (usize, &str)> =
        body(text, AGGREGATES_HEADER, file)?.map(|(n, f)| (f[0], (n, f[1]))).collect();
    let get = |k: &str| map.get(k).copied().ok_or_else(|| bad(file, 0, format!("missing `{k}`")));
    let f = |k: &str| -> Result<f64> {
        let (n, v) = get(k)?;
        num(v, file, n)
    };
    let i = |k: &str| -> Result<usize> {
        let (n, v) = get(k)?;
        num(v, file, n)
    };
    Ok(Aggregates {
        superframe_s: f("superframe_s")?,
        warmup_s: f("warmup_s")?,
        superframes: i("superframes")?,
        mean_sinr_db: [f("ut0_mean_sinr_db")?, f("ut1_mean_sinr_db")?],
        goodput_mbps: [f("ut0_goodput_mbps")?, f("ut1_goodput_mbps")?],
        system_goodput_mbps: f("system_goodput_mbps")?,
        nosync: [i("ut0_nosync")?, i("ut1_nosync")?],
        held: i("precoder_held")?,
        fallback: i("precoder_fallback")?,
    })
}
