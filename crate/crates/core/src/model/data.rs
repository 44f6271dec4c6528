use ndarray::{s, Array2, Axis};

use crate::error::{Error, Result};

/// Min-max scaler onto [0, 1]. A constant fit is degenerate and maps everything to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaler {
    pub min: f64,
    pub max: f64,
    pub degenerate: bool,
}

impl Scaler {
    pub fn identity() -> Self {
        Scaler { min: 0.0, max: 1.0, degenerate: false }
    }

    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Length { needed: 1, got: 0 });
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Scaler { min, max, degenerate: max == min })
    }

    pub fn scale(&self, x: f64) -> f64 {
        if self.degenerate {
            0.0
        } else {
            (x - self.min) / (self.max - self.min)
        }
    }

    pub fn unscale(&self, y: f64) -> f64 {
        if self.degenerate {
            self.min
        } else {
            self.min + y * (self.max - self.min)
        }
    }

    pub fn scale_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.scale(x)).collect()
    }

    pub fn unscale_all(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.unscale(y)).collect()
    }
}

pub fn min_max_scale(series: &[f64]) -> Result<(Vec<f64>, Scaler)> {
    if series.len() < 2 {
        return Err(Error::Length { needed: 2, got: series.len() });
    }
    let scaler = Scaler::fit(series)?;
    Ok((scaler.scale_all(series), scaler))
}

/// Overlapping stride-1 windows: row k of `inputs` is `scaled[k..k+L)`,
/// row k of `targets` is `scaled[k+L..k+L+O)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub scaler: Scaler,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn lookback(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn horizon(&self) -> usize {
        self.targets.ncols()
    }

    pub fn with_scaler(mut self, scaler: Scaler) -> Self {
        self.scaler = scaler;
        self
    }

    pub fn rows(&self, range: std::ops::Range<usize>) -> WindowedDataset {
        WindowedDataset {
            inputs: self.inputs.slice(s![range.clone(), ..]).to_owned(),
            targets: self.targets.slice(s![range, ..]).to_owned(),
            scaler: self.scaler,
        }
    }

    /// Stacks datasets in the given order; the result carries an identity scaler.
    pub fn concat(parts: &[&WindowedDataset]) -> Result<WindowedDataset> {
        let first = parts.first().ok_or_else(|| Error::Length { needed: 1, got: 0 })?;
        for p in parts {
            if p.lookback() != first.lookback() || p.horizon() != first.horizon() {
                return Err(Error::Shape { expected: first.lookback(), got: p.lookback() });
            }
        }
        let inputs: Vec<_> = parts.iter().map(|p| p.inputs.view()).collect();
        let targets: Vec<_> = parts.iter().map(|p| p.targets.view()).collect();
        Ok(WindowedDataset {
            inputs: ndarray::concatenate(Axis(0), &inputs).expect("matching widths"),
            targets: ndarray::concatenate(Axis(0), &targets).expect("matching widths"),
            scaler: Scaler::identity(),
        })
    }
}

pub fn make_windows(scaled: &[f64], lookback: usize, horizon: usize) -> Result<WindowedDataset> {
    if lookback == 0 || horizon == 0 {
        return Err(Error::Config("lookback and horizon must be positive".into()));
    }
    let span = lookback + horizon;
    if scaled.len() < span {
        return Err(Error::Length { needed: span, got: scaled.len() });
    }
    let n = scaled.len() - span + 1;
    let inputs = Array2::from_shape_fn((n, lookback), |(k, j)| scaled[k + j]);
    let targets = Array2::from_shape_fn((n, horizon), |(k, j)| scaled[k + lookback + j]);
    Ok(WindowedDataset { inputs, targets, scaler: Scaler::identity() })
}

/// Number of leading windows that go to training: ⌊frac·N⌋, kept within [1, N−1].
pub fn train_count(n: usize, train_frac: f64) -> usize {
    ((train_frac * n as f64).floor() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// First ⌊frac·N⌋ windows train, the rest validate; order is preserved.
pub fn chrono_split(ds: &WindowedDataset, train_frac: f64) -> Result<(WindowedDataset, WindowedDataset)> {
    let n = ds.len();
    if n < 2 {
        return Err(Error::Length { needed: 2, got: n });
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config(format!("train fraction must lie in (0, 1), got {train_frac}")));
    }
    let k = train_count(n, train_frac);
    Ok((ds.rows(0..k), ds.rows(k..n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_examples() {
        let (y, s) = min_max_scale(&[2.0, 11.0, 20.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.5, 1.0]);
        assert_eq!((s.min, s.max, s.degenerate), (2.0, 20.0, false));
        let (y, s) = min_max_scale(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(y, vec![0.0; 3]);
        assert!(s.degenerate);
        assert_eq!(s.unscale(0.0), 5.0);
        assert!(min_max_scale(&[1.0]).is_err());
    }

    #[test]
    fn scale_round_trip() {
        let x = [3.7, -1.25, 9.0, 0.001, 4.4];
        let (y, s) = min_max_scale(&x).unwrap();
        for (a, b) in x.iter().zip(s.unscale_all(&y)) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn window_counts_and_indexing() {
        let v: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let ds = make_windows(&v, 24, 2).unwrap();
        assert_eq!(ds.len(), 5);
        assert_eq!(ds.targets.row(0).to_vec(), vec![24.0, 25.0]);
        assert_eq!(ds.inputs.row(4)[0], 4.0);
        assert_eq!(make_windows(&v[..26], 24, 2).unwrap().len(), 1);
        assert!(matches!(make_windows(&v[..25], 24, 2), Err(Error::Length { .. })));
    }

    #[test]
    fn chronological_split() {
        let v: Vec<f64> = (0..35).map(|i| i as f64).collect();
        let ds = make_windows(&v, 24, 2).unwrap();
        assert_eq!(ds.len(), 10);
        let (tr, va) = chrono_split(&ds, 0.9).unwrap();
        assert_eq!((tr.len(), va.len()), (9, 1));
        assert!(tr.inputs[[8, 0]] < va.inputs[[0, 0]]);

        let v: Vec<f64> = (0..125).map(|i| i as f64).collect();
        let (tr, va) = chrono_split(&make_windows(&v, 24, 2).unwrap(), 0.9).unwrap();
        assert_eq!((tr.len(), va.len()), (90, 10));
    }

    #[test]
    fn concat_keeps_order() {
        let a = make_windows(&[0.0, 1.0, 2.0, 3.0], 2, 1).unwrap();
        let b = make_windows(&[10.0, 11.0, 12.0], 2, 1).unwrap();
        let c = WindowedDataset::concat(&[&a, &b]).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.targets.column(0).to_vec(), vec![2.0, 3.0, 12.0]);
    }
}
