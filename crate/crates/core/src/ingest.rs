//! Loading real per-client meter CSVs, hourly resampling, and gap filling.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::synth::{parse_timestamp, DistLabel, TimeSeries, HOUR};

#[derive(Debug, Clone, PartialEq)]
pub struct IngestConfig {
    pub timestamp_col: String,
    pub value_col: String,
    /// Seconds between source readings.
    pub source_step: i64,
    /// Seconds per output bucket.
    pub target_step: i64,
    pub max_missing_frac: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            timestamp_col: "timestamp".into(),
            value_col: "value".into(),
            source_step: 900,
            target_step: HOUR,
            max_missing_frac: 0.05,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.source_step <= 0 || self.target_step <= 0 {
            return Err(Error::Config("ingest steps must be positive".into()));
        }
        if self.target_step % self.source_step != 0 {
            return Err(Error::Config(format!(
                "target step {} is not a multiple of source step {}",
                self.target_step, self.source_step
            )));
        }
        if !(0.0..=1.0).contains(&self.max_missing_frac) {
            return Err(Error::Config("ingest.max_missing_frac must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Timestamped readings as loaded, ascending, possibly irregular.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
}

/// Uniformly bucketed series where empty buckets are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct GappySeries {
    pub start_epoch: i64,
    pub step: i64,
    pub values: Vec<Option<f64>>,
}

impl GappySeries {
    pub fn gap_fraction(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().filter(|v| v.is_none()).count() as f64 / self.values.len() as f64
    }
}

pub fn load_csv(path: &Path, cfg: &IngestConfig) -> Result<RawSeries> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    let (ts_col, val_col) = (col(&cfg.timestamp_col)?, col(&cfg.value_col)?);
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let ts = parse_timestamp(rec.get(ts_col).unwrap_or(""))
            .map_err(|e| Error::Data(format!("{}:{line}: {e}", path.display())))?;
        let raw = rec.get(val_col).unwrap_or("").trim();
        let v: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::Data(format!("{}:{line}: bad value `{raw}`", path.display())))?;
        rows.push((ts, v));
    }
    rows.sort_by_key(|(t, _)| *t);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Data(format!(
            "{}: duplicate timestamp {}",
            path.display(),
            crate::synth::iso8601(w[0].0)
        )));
    }
    Ok(RawSeries {
        timestamps: rows.iter().map(|r| r.0).collect(),
        values: rows.iter().map(|r| r.1).collect(),
    })
}

/// Mean of the readings in each `[t, t + target_step)` bucket, buckets aligned
/// to multiples of `target_step` since the epoch.
pub fn resample_hourly(series: &RawSeries, cfg: &IngestConfig) -> Result<GappySeries> {
    cfg.validate()?;
    if series.timestamps.is_empty() {
        return Err(Error::Length { needed: 1, got: 0 });
    }
    if let Some(w) = series.timestamps.windows(2).find(|w| {
        let d = w[1] - w[0];
        d <= 0 || d % cfg.source_step != 0
    }) {
        return Err(Error::Data(format!(
            "readings at {} and {} break the {} s source spacing",
            w[0], w[1], cfg.source_step
        )));
    }
    let step = cfg.target_step;
    let mut buckets: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for (&t, &v) in series.timestamps.iter().zip(&series.values) {
        let e = buckets.entry(t.div_euclid(step) * step).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    let start = *buckets.keys().next().expect("non-empty");
    let end = *buckets.keys().next_back().expect("non-empty");
    let n = ((end - start) / step + 1) as usize;
    let mut values = vec![None; n];
    for (t, (sum, count)) in buckets {
        values[((t - start) / step) as usize] = Some(sum / count as f64);
    }
    Ok(GappySeries { start_epoch: start, step, values })
}

/// Forward-fills gaps; leading gaps are dropped.
pub fn fill_gaps(
    series: &GappySeries,
    cfg: &IngestConfig,
    client_id: u32,
    dist_label: DistLabel,
) -> Result<TimeSeries> {
    let fraction = series.gap_fraction();
    if fraction > cfg.max_missing_frac {
        return Err(Error::Quality { fraction, max: cfg.max_missing_frac });
    }
    let first = series
        .values
        .iter()
        .position(|v| v.is_some())
        .ok_or_else(|| Error::Data("series has no observations".into()))?;
    let mut last = series.values[first].expect("observed");
    let values = series.values[first..]
        .iter()
        .map(|v| {
            if let Some(x) = v {
                last = *x;
            }
            last
        })
        .collect();
    TimeSeries::new(
        series.start_epoch + first as i64 * series.step,
        series.step,
        values,
        client_id,
        dist_label,
    )
}

/// load → resample → fill.
pub fn ingest_file(path: &Path, cfg: &IngestConfig, client_id: u32, dist_label: DistLabel) -> Result<TimeSeries> {
    let raw = load_csv(path, cfg)?;
    let hourly = resample_hourly(&raw, cfg)?;
    fill_gaps(&hourly, cfg, client_id, dist_label)
}
