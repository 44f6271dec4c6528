//! Synthetic per-client series: a sine-driven location curve with a
//! client-specific phase, a level shift over the tail of the series, and
//! centered GEV or log-normal noise, clamped to a fixed band.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};

use crate::distributions::{sample, DistKind, Distribution, GevParams, LogNormParams};
use crate::error::{Error, Result};
use crate::numfmt::sig9;
use crate::rng::RngStream;

/// 2023-05-11T09:00:00Z.
pub const SYNTH_START_EPOCH: i64 = 1_683_795_600;
pub const HOUR: i64 = 3600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DistLabel {
    Gev,
    LogNorm,
    Real,
}

impl DistLabel {
    pub fn tag(self) -> &'static str {
        match self {
            DistLabel::Gev => "gev",
            DistLabel::LogNorm => "lognorm",
            DistLabel::Real => "real",
        }
    }
}

impl From<DistKind> for DistLabel {
    fn from(k: DistKind) -> Self {
        match k {
            DistKind::Gev => DistLabel::Gev,
            DistKind::LogNorm => DistLabel::LogNorm,
        }
    }
}

impl fmt::Display for DistLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for DistLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gev" => Ok(DistLabel::Gev),
            "lognorm" => Ok(DistLabel::LogNorm),
            "real" => Ok(DistLabel::Real),
            other => Err(Error::Config(format!("unknown distribution label `{other}`"))),
        }
    }
}

/// Uniformly spaced univariate series owned by one client.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub start_epoch: i64,
    pub step: i64,
    pub values: Vec<f64>,
    pub client_id: u32,
    pub dist_label: DistLabel,
}

impl TimeSeries {
    pub fn new(
        start_epoch: i64,
        step: i64,
        values: Vec<f64>,
        client_id: u32,
        dist_label: DistLabel,
    ) -> Result<Self> {
        if step <= 0 {
            return Err(Error::Data(format!("series step must be positive, got {step}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at index {i}")));
        }
        Ok(TimeSeries {
            start_epoch,
            step,
            values,
            client_id,
            dist_label,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> i64 {
        self.start_epoch + self.step * index as i64
    }

    /// `client_<k>_<dist>.csv`
    pub fn file_name(&self) -> String {
        format!("client_{}_{}.csv", self.client_id, self.dist_label)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 32 + 16);
        out.push_str("timestamp,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&iso8601(self.timestamp(i)));
            out.push(',');
            out.push_str(&sig9(*v));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// Reads a `timestamp,value` file. Spacing must be uniform.
    pub fn read_csv(path: &Path, client_id: u32, dist_label: DistLabel) -> Result<TimeSeries> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Schema {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
        };
        let (ts_col, val_col) = (col("timestamp")?, col("value")?);
        let mut stamps = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let ts = parse_timestamp(rec.get(ts_col).unwrap_or(""))
                .map_err(|e| Error::Data(format!("{}:{line}: {e}", path.display())))?;
            let v: f64 = rec
                .get(val_col)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("{}:{line}: unparseable value", path.display())))?;
            stamps.push(ts);
            values.push(v);
        }
        if stamps.len() < 2 {
            return Err(Error::Length { needed: 2, got: stamps.len() });
        }
        let step = stamps[1] - stamps[0];
        if let Some(k) = stamps.windows(2).position(|w| w[1] - w[0] != step) {
            return Err(Error::Data(format!(
                "{}: irregular spacing at row {}",
                path.display(),
                k + 3
            )));
        }
        TimeSeries::new(stamps[0], step, values, client_id, dist_label)
    }
}

pub fn iso8601(epoch: i64) -> String {
    DateTime::<Utc>::from_timestamp(epoch, 0)
        .map(|t| t.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| epoch.to_string())
}

/// Accepts RFC 3339, naive `YYYY-MM-DD[T ]HH:MM[:SS]` (taken as UTC), or integer epoch seconds.
pub fn parse_timestamp(text: &str) -> std::result::Result<i64, String> {
    let t = text.trim();
    if let Ok(secs) = t.parse::<i64>() {
        return Ok(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        return Ok(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(t, fmt) {
            return Ok(dt.and_utc().timestamp());
        }
    }
    Err(format!("unparseable timestamp `{t}`"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_points: usize,
    pub base_level: f64,
    pub sine_amplitude: f64,
    /// Hours.
    pub sine_period: f64,
    /// Radians of phase per unit of client id.
    pub client_phase_gain: f64,
    pub offset_value: f64,
    pub offset_start_frac: f64,
    pub clamp_lo: f64,
    pub clamp_hi: f64,
    pub gev_sigma: f64,
    pub gev_xi: f64,
    pub lognorm_mu: f64,
    pub lognorm_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_points: 10_000,
            base_level: 8.0,
            sine_amplitude: 3.0,
            sine_period: 168.0,
            client_phase_gain: 1.0,
            offset_value: 4.0,
            offset_start_frac: 0.6,
            clamp_lo: 2.0,
            clamp_hi: 20.0,
            gev_sigma: 1.0,
            gev_xi: 0.1,
            lognorm_mu: 0.0,
            lognorm_sigma: 0.25,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 1 {
            return Err(Error::Config("synth.n_points must be at least 1".into()));
        }
        if !(self.clamp_lo < self.clamp_hi) {
            return Err(Error::Config(format!(
                "synth.clamp_lo ({}) must be below synth.clamp_hi ({})",
                self.clamp_lo, self.clamp_hi
            )));
        }
        if !(self.offset_start_frac > 0.0 && self.offset_start_frac < 1.0) {
            return Err(Error::Config("synth.offset_start_frac must lie in (0, 1)".into()));
        }
        if !(self.sine_period > 0.0) {
            return Err(Error::Config("synth.sine_period must be positive".into()));
        }
        self.noise(DistKind::Gev)?;
        self.noise(DistKind::LogNorm)?;
        Ok(())
    }

    pub fn noise(&self, kind: DistKind) -> Result<Distribution> {
        let wrap = |e: Error| Error::Config(e.to_string());
        Ok(match kind {
            DistKind::Gev => {
                Distribution::Gev(GevParams::new(0.0, self.gev_sigma, self.gev_xi).map_err(wrap)?)
            }
            DistKind::LogNorm => Distribution::LogNorm(
                LogNormParams::new(self.lognorm_mu, self.lognorm_sigma).map_err(wrap)?,
            ),
        })
    }
}

/// Noise-free location of client `client_id` at step `t`.
pub fn location(t: usize, client_id: u32, cfg: &SynthConfig) -> f64 {
    let phase = 2.0 * PI * t as f64 / cfg.sine_period + cfg.client_phase_gain * client_id as f64;
    let offset = if t as f64 >= cfg.offset_start_frac * cfg.n_points as f64 {
        cfg.offset_value
    } else {
        0.0
    };
    cfg.base_level + cfg.sine_amplitude * phase.sin() + offset
}

pub fn generate_client_series(
    client_id: u32,
    kind: DistKind,
    cfg: &SynthConfig,
    rng: &mut RngStream,
) -> Result<TimeSeries> {
    cfg.validate()?;
    let noise = cfg.noise(kind)?;
    let center = noise.median()?;
    let draws = sample(&noise, cfg.n_points, rng)?;
    let values = draws
        .iter()
        .enumerate()
        .map(|(t, s)| (location(t, client_id, cfg) + (s - center)).clamp(cfg.clamp_lo, cfg.clamp_hi))
        .collect();
    TimeSeries::new(SYNTH_START_EPOCH, HOUR, values, client_id, kind.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    Gev,
    LogNorm,
    Mixed,
}

impl Regime {
    pub fn tag(self) -> &'static str {
        match self {
            Regime::Gev => "gev",
            Regime::LogNorm => "lognorm",
            Regime::Mixed => "mixed",
        }
    }

    /// Distribution of client `client_id` (1-based) in a cohort of `n_clients`.
    pub fn kind_for(self, client_id: u32, n_clients: usize) -> DistKind {
        match self {
            Regime::Gev => DistKind::Gev,
            Regime::LogNorm => DistKind::LogNorm,
            Regime::Mixed => {
                if (client_id as usize) <= n_clients.div_ceil(2) {
                    DistKind::Gev
                } else {
                    DistKind::LogNorm
                }
            }
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gev" => Ok(Regime::Gev),
            "lognorm" => Ok(Regime::LogNorm),
            "mixed" => Ok(Regime::Mixed),
            other => Err(Error::Config(format!("unknown regime `{other}`"))),
        }
    }
}

/// Clients are numbered 1..=n_clients; each draws from `client-<k>-data` under `master_seed`.
pub fn generate_cohort(
    regime: Regime,
    n_clients: usize,
    cfg: &SynthConfig,
    master_seed: u64,
) -> Result<Vec<TimeSeries>> {
    if n_clients == 0 {
        return Err(Error::Config("cohort needs at least one client".into()));
    }
    if regime == Regime::Mixed && n_clients < 2 {
        return Err(Error::Config("mixed regime needs at least two clients".into()));
    }
    (1..=n_clients as u32)
        .map(|id| {
            let mut rng = RngStream::new(master_seed, format!("client-{id}-data"));
            generate_client_series(id, regime.kind_for(id, n_clients), cfg, &mut rng)
        })
        .collect()
}

/// Writes each series as `client_<k>_<dist>.csv` under `dir`.
pub fn write_cohort(cohort: &[TimeSeries], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    cohort
        .iter()
        .map(|s| {
            let path = dir.join(s.file_name());
            s.write_csv(&path)?;
            Ok(path)
        })
        .collect()
}

/// Loads every `client_<k>_<dist>.csv` in `dir`, ordered by client id.
pub fn read_cohort(dir: &Path) -> Result<Vec<TimeSeries>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(stem) = name.strip_prefix("client_").and_then(|n| n.strip_suffix(".csv")) else {
            continue;
        };
        let Some((id, label)) = stem.split_once('_') else {
            continue;
        };
        let Ok(id) = id.parse::<u32>() else {
            continue;
        };
        found.push((id, label.parse::<DistLabel>()?, path.clone()));
    }
    found.sort_by_key(|(id, _, _)| *id);
    if let Some(w) = found.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Data(format!("duplicate files for client {}", w[0].0)));
    }
    if found.is_empty() {
        return Err(Error::Data(format!("no client_<k>_<dist>.csv files in {}", dir.display())));
    }
    found
        .into_iter()
        .map(|(id, label, path)| TimeSeries::read_csv(&path, id, label))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn location_examples() {
        let cfg = SynthConfig::default();
        assert_relative_eq!(location(0, 0, &cfg), 8.0);
        assert_relative_eq!(location(42, 0, &cfg), 11.0, epsilon = 1e-12);
        let no_offset = SynthConfig { offset_value: 0.0, ..cfg.clone() };
        assert_relative_eq!(location(6000, 0, &cfg), location(6000, 0, &no_offset) + 4.0);
        assert_relative_eq!(location(5999, 0, &cfg), location(5999, 0, &no_offset));
    }

    #[test]
    fn start_epoch_is_may_11_2023_9am_utc() {
        assert_eq!(iso8601(SYNTH_START_EPOCH), "2023-05-11T09:00:00Z");
    }

    #[test]
    fn generated_series_shape() {
        let cfg = SynthConfig::default();
        for kind in [DistKind::Gev, DistKind::LogNorm] {
            let s = generate_client_series(3, kind, &cfg, &mut RngStream::new(1, "c3")).unwrap();
            assert_eq!(s.len(), 10_000);
            assert_eq!(s.timestamp(1), s.start_epoch + 3600);
            assert!(s.values.iter().all(|v| (2.0..=20.0).contains(v)));
            assert_eq!(s.dist_label, DistLabel::from(kind));
            let clamped = s.values.iter().filter(|&&v| v == 2.0 || v == 20.0).count();
            assert!((clamped as f64) < 0.05 * s.len() as f64);
            let tenth = s.len() / 10;
            let head: f64 = s.values[..tenth].iter().sum::<f64>() / tenth as f64;
            let tail: f64 = s.values[s.len() - tenth..].iter().sum::<f64>() / tenth as f64;
            assert!((tail - head).abs() >= cfg.offset_value / 2.0);
        }
    }

    #[test]
    fn degenerate_noise_sits_on_base_level() {
        let cfg = SynthConfig {
            n_points: 200,
            sine_amplitude: 0.0,
            offset_value: 0.0,
            gev_sigma: 1e-9,
            lognorm_sigma: 1e-9,
            ..SynthConfig::default()
        };
        for kind in [DistKind::Gev, DistKind::LogNorm] {
            let s = generate_client_series(1, kind, &cfg, &mut RngStream::new(0, "d")).unwrap();
            assert!(s.values.iter().all(|v| (v - 8.0).abs() < 1e-6));
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut rng = RngStream::new(0, "x");
        let bad = SynthConfig { clamp_lo: 5.0, clamp_hi: 5.0, ..SynthConfig::default() };
        assert!(matches!(
            generate_client_series(1, DistKind::Gev, &bad, &mut rng),
            Err(Error::Config(_))
        ));
        let bad = SynthConfig { offset_start_frac: 1.0, ..SynthConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SynthConfig { gev_sigma: 0.0, ..SynthConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cohort_labels_and_determinism() {
        let cfg = SynthConfig { n_points: 300, ..SynthConfig::default() };
        let mixed = generate_cohort(Regime::Mixed, 10, &cfg, 7).unwrap();
        let labels: Vec<_> = mixed.iter().map(|s| s.dist_label).collect();
        assert_eq!(labels[..5], [DistLabel::Gev; 5]);
        assert_eq!(labels[5..], [DistLabel::LogNorm; 5]);
        assert_eq!(mixed.iter().map(|s| s.client_id).collect::<Vec<_>>(), (1..=10).collect::<Vec<_>>());
        assert_eq!(mixed, generate_cohort(Regime::Mixed, 10, &cfg, 7).unwrap());

        let gev = generate_cohort(Regime::Gev, 10, &cfg, 7).unwrap();
        assert!(gev.iter().all(|s| s.dist_label == DistLabel::Gev));
        assert_ne!(gev[0].values, gev[1].values);
        assert!(generate_cohort(Regime::Mixed, 1, &cfg, 7).is_err());
    }

    #[test]
    fn distinct_clients_differ_even_with_shared_stream() {
        let cfg = SynthConfig { n_points: 100, ..SynthConfig::default() };
        let a = generate_client_series(1, DistKind::Gev, &cfg, &mut RngStream::new(0, "same")).unwrap();
        let b = generate_client_series(2, DistKind::Gev, &cfg, &mut RngStream::new(0, "same")).unwrap();
        assert_ne!(a.values, b.values);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig { n_points: 50, ..SynthConfig::default() };
        let cohort = generate_cohort(Regime::Mixed, 4, &cfg, 3).unwrap();
        let paths = write_cohort(&cohort, dir.path()).unwrap();
        assert!(paths[0].ends_with("client_1_gev.csv"));
        assert!(paths[3].ends_with("client_4_lognorm.csv"));
        let text = fs::read_to_string(&paths[0]).unwrap();
        assert!(text.starts_with("timestamp,value\n2023-05-11T09:00:00Z,"));
        assert!(text.lines().nth(2).unwrap().starts_with("2023-05-11T10:00:00Z,"));
        let back = read_cohort(dir.path()).unwrap();
        assert_eq!(back.len(), 4);
        for (a, b) in cohort.iter().zip(&back) {
            assert_eq!(a.start_epoch, b.start_epoch);
            assert_eq!(a.step, b.step);
            assert_eq!(a.dist_label, b.dist_label);
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() <= 1e-8 * x.abs());
            }
        }
    }

    #[test]
    fn timestamp_parsing() {
        assert_eq!(parse_timestamp("2023-05-11T09:00:00Z").unwrap(), SYNTH_START_EPOCH);
        assert_eq!(parse_timestamp("2023-05-11 09:00:00").unwrap(), SYNTH_START_EPOCH);
        assert_eq!(parse_timestamp("2023-05-11T19:00:00+10:00").unwrap(), SYNTH_START_EPOCH);
        assert_eq!(parse_timestamp("1683795600").unwrap(), SYNTH_START_EPOCH);
        assert!(parse_timestamp("yesterday").is_err());
    }
}
