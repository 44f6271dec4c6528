//! Trend removal transforms and their inverses.
//!
//! Every transform returns a [`DetrendState`] that carries what is needed to
//! rebuild the input exactly and, for the fitted trends, to extrapolate the
//! trend past the end of the series.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numfmt::exact;

pub const DEFAULT_MA_WINDOW: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetrendTechnique {
    None,
    Differencing,
    MovingAverage { window: usize },
    SubtractMean,
    LinearModel,
    QuadraticModel,
}

impl DetrendTechnique {
    pub fn tag(&self) -> &'static str {
        match self {
            DetrendTechnique::None => "none",
            DetrendTechnique::Differencing => "differencing",
            DetrendTechnique::MovingAverage { .. } => "moving_average",
            DetrendTechnique::SubtractMean => "subtract_mean",
            DetrendTechnique::LinearModel => "linear_model",
            DetrendTechnique::QuadraticModel => "quadratic_model",
        }
    }

    /// Parses a tag; `moving_average` takes `window` as its period.
    pub fn from_tag(tag: &str, window: usize) -> Result<Self> {
        let t = match tag {
            "none" => DetrendTechnique::None,
            "differencing" => DetrendTechnique::Differencing,
            "moving_average" => DetrendTechnique::MovingAverage { window },
            "subtract_mean" => DetrendTechnique::SubtractMean,
            "linear_model" => DetrendTechnique::LinearModel,
            "quadratic_model" => DetrendTechnique::QuadraticModel,
            other => return Err(Error::Config(format!("unknown detrend technique `{other}`"))),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if let DetrendTechnique::MovingAverage { window } = self {
            if *window < 2 {
                return Err(Error::Config(format!("moving average window must be >= 2, got {window}")));
            }
        }
        Ok(())
    }

    /// Minimum input length accepted by [`detrend`].
    pub fn min_len(&self) -> usize {
        match self {
            DetrendTechnique::MovingAverage { window } => (*window).max(2),
            DetrendTechnique::None => 1,
            _ => 2,
        }
    }

    /// Number of leading input points that have no transformed counterpart.
    pub fn lost_prefix(&self) -> usize {
        match self {
            DetrendTechnique::Differencing => 1,
            DetrendTechnique::MovingAverage { window } => window - 1,
            _ => 0,
        }
    }
}

impl fmt::Display for DetrendTechnique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for DetrendTechnique {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DetrendTechnique::from_tag(s, DEFAULT_MA_WINDOW)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetrendState {
    None { n: usize },
    Differencing { anchor: f64, n: usize },
    /// `head` holds the first `window − 1` inputs, which have no output; `means[k]`
    /// is the mean of the window ending at input index `k + window − 1`.
    MovingAverage { window: usize, head: Vec<f64>, means: Vec<f64>, n: usize },
    SubtractMean { mean: f64, n: usize },
    LinearModel { beta: [f64; 2], n: usize },
    QuadraticModel { beta: [f64; 3], n: usize },
}

impl DetrendState {
    pub fn original_len(&self) -> usize {
        match self {
            DetrendState::None { n }
            | DetrendState::Differencing { n, .. }
            | DetrendState::MovingAverage { n, .. }
            | DetrendState::SubtractMean { n, .. }
            | DetrendState::LinearModel { n, .. }
            | DetrendState::QuadraticModel { n, .. } => *n,
        }
    }

    pub fn technique(&self) -> DetrendTechnique {
        match self {
            DetrendState::None { .. } => DetrendTechnique::None,
            DetrendState::Differencing { .. } => DetrendTechnique::Differencing,
            DetrendState::MovingAverage { window, .. } => DetrendTechnique::MovingAverage { window: *window },
            DetrendState::SubtractMean { .. } => DetrendTechnique::SubtractMean,
            DetrendState::LinearModel { .. } => DetrendTechnique::LinearModel,
            DetrendState::QuadraticModel { .. } => DetrendTechnique::QuadraticModel,
        }
    }

    /// Input index of detrended element 0.
    pub fn offset(&self) -> usize {
        self.technique().lost_prefix()
    }

    pub fn detrended_len(&self) -> usize {
        self.original_len() - self.offset()
    }

    /// Serializes as `key = value` lines. Reals use shortest round-trip text.
    pub fn to_sidecar(&self) -> String {
        let mut kv: Vec<(&str, String)> = vec![("technique", self.technique().tag().to_string())];
        kv.push(("n", self.original_len().to_string()));
        let list = |v: &[f64]| v.iter().map(|x| exact(*x)).collect::<Vec<_>>().join(",");
        match self {
            DetrendState::None { .. } => {}
            DetrendState::Differencing { anchor, .. } => kv.push(("anchor", exact(*anchor))),
            DetrendState::MovingAverage { window, head, means, .. } => {
                kv.push(("window", window.to_string()));
                kv.push(("head", list(head)));
                kv.push(("means", list(means)));
            }
            DetrendState::SubtractMean { mean, .. } => kv.push(("mean", exact(*mean))),
            DetrendState::LinearModel { beta, .. } => kv.push(("beta", list(beta))),
            DetrendState::QuadraticModel { beta, .. } => kv.push(("beta", list(beta))),
        }
        kv.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn from_sidecar(text: &str) -> Result<DetrendState> {
        let mut kv = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::State(format!("line {}: expected `key = value`", i + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| Error::State(format!("missing key `{k}`")));
        let real = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::State(format!("bad real for `{k}`")))
        };
        let list = |k: &str| -> Result<Vec<f64>> {
            let v = get(k)?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|x| x.trim().parse().map_err(|_| Error::State(format!("bad list for `{k}`"))))
                .collect()
        };
        let n: usize = get("n")?.parse().map_err(|_| Error::State("bad `n`".into()))?;
        let state = match get("technique")?.as_str() {
            "none" => DetrendState::None { n },
            "differencing" => DetrendState::Differencing { anchor: real("anchor")?, n },
            "moving_average" => DetrendState::MovingAverage {
                window: get("window")?.parse().map_err(|_| Error::State("bad `window`".into()))?,
                head: list("head")?,
                means: list("means")?,
                n,
            },
            "subtract_mean" => DetrendState::SubtractMean { mean: real("mean")?, n },
            "linear_model" => {
                let b = list("beta")?;
                if b.len() != 2 {
                    return Err(Error::State("linear model needs 2 coefficients".into()));
                }
                DetrendState::LinearModel { beta: [b[0], b[1]], n }
            }
            "quadratic_model" => {
                let b = list("beta")?;
                if b.len() != 3 {
                    return Err(Error::State("quadratic model needs 3 coefficients".into()));
                }
                DetrendState::QuadraticModel { beta: [b[0], b[1], b[2]], n }
            }
            other => return Err(Error::State(format!("unknown technique `{other}`"))),
        };
        if let DetrendState::MovingAverage { window, head, means, n } = &state {
            if *window < 2 || head.len() != window - 1 || head.len() + means.len() != *n {
                return Err(Error::State("moving average payload inconsistent with `n`".into()));
            }
        }
        Ok(state)
    }
}

pub fn detrend(series: &[f64], tech: DetrendTechnique) -> Result<(Vec<f64>, DetrendState)> {
    tech.validate()?;
    let n = series.len();
    if n < tech.min_len() {
        return Err(Error::Length { needed: tech.min_len(), got: n });
    }
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite value at index {i}")));
    }
    Ok(match tech {
        DetrendTechnique::None => (series.to_vec(), DetrendState::None { n }),
        DetrendTechnique::Differencing => {
            let out = series.windows(2).map(|w| w[1] - w[0]).collect();
            (out, DetrendState::Differencing { anchor: series[0], n })
        }
        DetrendTechnique::MovingAverage { window } => {
            let means: Vec<f64> = series
                .windows(window)
                .map(|w| w.iter().sum::<f64>() / window as f64)
                .collect();
            let out = series[window - 1..].iter().zip(&means).map(|(x, m)| x - m).collect();
            let head = series[..window - 1].to_vec();
            (out, DetrendState::MovingAverage { window, head, means, n })
        }
        DetrendTechnique::SubtractMean => {
            let mean = series.iter().sum::<f64>() / n as f64;
            (series.iter().map(|x| x - mean).collect(), DetrendState::SubtractMean { mean, n })
        }
        DetrendTechnique::LinearModel => {
            let c = least_squares_fit(series, 1)?;
            let beta = [c[0], c[1]];
            let out = series.iter().enumerate().map(|(i, x)| x - poly(&beta, i as f64)).collect();
            (out, DetrendState::LinearModel { beta, n })
        }
        DetrendTechnique::QuadraticModel => {
            let c = least_squares_fit(series, 2)?;
            let beta = [c[0], c[1], c[2]];
            let out = series.iter().enumerate().map(|(i, x)| x - poly(&beta, i as f64)).collect();
            (out, DetrendState::QuadraticModel { beta, n })
        }
    })
}

pub fn retrend(detrended: &[f64], state: &DetrendState) -> Result<Vec<f64>> {
    if detrended.len() != state.detrended_len() {
        return Err(Error::State(format!(
            "state expects {} detrended values, got {}",
            state.detrended_len(),
            detrended.len()
        )));
    }
    Ok(match state {
        DetrendState::None { .. } => detrended.to_vec(),
        DetrendState::Differencing { anchor, n } => {
            let mut out = Vec::with_capacity(*n);
            out.push(*anchor);
            let mut acc = *anchor;
            for d in detrended {
                acc += d;
                out.push(acc);
            }
            out
        }
        DetrendState::MovingAverage { head, means, n, .. } => {
            if means.len() != detrended.len() {
                return Err(Error::State("moving average means do not match input".into()));
            }
            let mut out = Vec::with_capacity(*n);
            out.extend_from_slice(head);
            out.extend(detrended.iter().zip(means).map(|(d, m)| d + m));
            out
        }
        DetrendState::SubtractMean { mean, .. } => detrended.iter().map(|d| d + mean).collect(),
        DetrendState::LinearModel { beta, .. } => {
            detrended.iter().enumerate().map(|(i, d)| d + poly(beta, i as f64)).collect()
        }
        DetrendState::QuadraticModel { beta, .. } => {
            detrended.iter().enumerate().map(|(i, d)| d + poly(beta, i as f64)).collect()
        }
    })
}

/// Trend value at input index `i`, including indices past the fitted range.
pub fn trend_at(state: &DetrendState, i: usize) -> Result<f64> {
    match state {
        DetrendState::SubtractMean { mean, .. } => Ok(*mean),
        DetrendState::LinearModel { beta, .. } => Ok(poly(beta, i as f64)),
        DetrendState::QuadraticModel { beta, .. } => Ok(poly(beta, i as f64)),
        other => Err(Error::Capability(format!(
            "{} has no closed-form trend to extrapolate",
            other.technique()
        ))),
    }
}

/// Maps forecasts made in detrended space back to data units.
///
/// `history` is the observed input series up to (not including) input index
/// `start`, the index of `preds[0]`. Differencing and moving-average chain
/// through earlier forecasts for later steps.
pub fn reconstruct_forecast(
    state: &DetrendState,
    history: &[f64],
    start: usize,
    preds: &[f64],
) -> Result<Vec<f64>> {
    if history.len() < start {
        return Err(Error::State(format!(
            "forecast at index {start} needs {start} history values, got {}",
            history.len()
        )));
    }
    match state {
        DetrendState::None { .. } => Ok(preds.to_vec()),
        DetrendState::Differencing { .. } => {
            if start == 0 {
                return Err(Error::State("differencing forecast needs one prior value".into()));
            }
            let mut level = history[start - 1];
            Ok(preds
                .iter()
                .map(|d| {
                    level += d;
                    level
                })
                .collect())
        }
        DetrendState::MovingAverage { window, .. } => {
            let p = *window;
            if start + 1 < p {
                return Err(Error::State(format!("moving average forecast needs {} prior values", p - 1)));
            }
            // X_i − (X_i + S)/p = d  ⇒  X_i = (p·d + S)/(p − 1), S = sum of the p − 1 values before i.
            let mut recent: Vec<f64> = history[start + 1 - p..start].to_vec();
            let mut out = Vec::with_capacity(preds.len());
            for d in preds {
                let s: f64 = recent.iter().sum();
                let x = (p as f64 * d + s) / (p as f64 - 1.0);
                out.push(x);
                recent.remove(0);
                recent.push(x);
            }
            Ok(out)
        }
        _ => preds
            .iter()
            .enumerate()
            .map(|(k, d)| Ok(d + trend_at(state, start + k)?))
            .collect(),
    }
}

fn poly(beta: &[f64], i: f64) -> f64 {
    beta.iter().rev().fold(0.0, |acc, b| acc * i + b)
}

/// Ordinary least squares polynomial fit of `values` against index i = 0..n−1.
///
/// Returns coefficients lowest order first. The index is centered and scaled
/// to [-1, 1] before forming the normal equations, which are then solved by
/// Gaussian elimination with partial pivoting; coefficients are mapped back
/// to the raw index basis.
pub fn least_squares_fit(values: &[f64], degree: usize) -> Result<Vec<f64>> {
    if !(1..=2).contains(&degree) {
        return Err(Error::Capability(format!("polynomial degree {degree} not supported")));
    }
    let n = values.len();
    if n < degree + 1 {
        return Err(Error::Length { needed: degree + 1, got: n });
    }
    let k = degree + 1;
    let center = (n as f64 - 1.0) / 2.0;
    let scale = center.max(1.0);

    let mut gram = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for (i, &y) in values.iter().enumerate() {
        let t = (i as f64 - center) / scale;
        let basis = [1.0, t, t * t];
        for r in 0..k {
            rhs[r] += basis[r] * y;
            for c in 0..k {
                gram[r][c] += basis[r] * basis[c];
            }
        }
    }
    let a = solve_pivoted(&mut gram, &mut rhs, k)?;

    // Expand a0 + a1·t + a2·t² with t = (i − c)/s into powers of i.
    let (c, s) = (center, scale);
    let mut beta = vec![0.0; k];
    beta[0] = a[0] - a[1] * c / s;
    beta[1] = a[1] / s;
    if degree == 2 {
        beta[0] += a[2] * c * c / (s * s);
        beta[1] -= 2.0 * a[2] * c / (s * s);
        beta[2] = a[2] / (s * s);
    }
    Ok(beta)
}

fn solve_pivoted(m: &mut [[f64; 3]; 3], rhs: &mut [f64; 3], k: usize) -> Result<[f64; 3]> {
    let scale = m.iter().take(k).flat_map(|r| r.iter().take(k)).fold(0.0f64, |a, v| a.max(v.abs()));
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .expect("non-empty range");
        if m[pivot][col].abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Numeric("singular normal equations".into()));
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..k {
            let f = m[row][col] / m[col][col];
            for c in col..k {
                m[row][c] -= f * m[col][c];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..k).rev() {
        let tail: f64 = (row + 1..k).map(|c| m[row][c] * x[c]).sum();
        x[row] = (rhs[row] - tail) / m[row][row];
    }
    Ok(x)
}
