use ndarray::{s, Array2, Axis};

use super::{adam_step, backward_batch, forward_batch, predict, AdamState, ModelParams, WindowedDataset};
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, Metrics};
use crate::rng::RngStream;

const EVAL_BATCH: usize = 512;

/// One pass over `train`: shuffle with `rng`, then one Adam step per mini-batch
/// on the batch-mean gradient. Returns the window-weighted mean training loss.
pub fn train_epoch(
    params: &mut ModelParams,
    opt: &mut AdamState,
    train: &WindowedDataset,
    batch_size: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    let n = train.len();
    if n == 0 {
        return Err(Error::Length { needed: 1, got: 0 });
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);

    let mut total = 0.0;
    for chunk in order.chunks(batch_size) {
        let inputs = train.inputs.select(Axis(0), chunk);
        let targets = train.targets.select(Axis(0), chunk);
        let tape = forward_batch(params, inputs.view())?;
        let diff = &tape.pred - &targets;
        total += diff.iter().map(|d| d * d).sum::<f64>() / train.horizon() as f64;
        let grad = backward_batch(params, &tape, targets.view())?;
        adam_step(params.as_mut_slice(), &grad, opt)?;
        if !params.is_finite() {
            return Err(Error::Numeric(format!(
                "parameters diverged after optimizer step {}",
                opt.t
            )));
        }
    }
    Ok(total / n as f64)
}

/// Predictions for every window of `ds`, in row order (scaled units).
pub fn predict_dataset(params: &ModelParams, ds: &WindowedDataset) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((ds.len(), params.shape().output));
    let mut start = 0;
    while start < ds.len() {
        let end = (start + EVAL_BATCH).min(ds.len());
        let pred = predict(params, ds.inputs.slice(s![start..end, ..]))?;
        out.slice_mut(s![start..end, ..]).assign(&pred);
        start = end;
    }
    Ok(out)
}

/// Validation metrics in scaled units.
pub fn evaluate(params: &ModelParams, ds: &WindowedDataset) -> Result<Metrics> {
    let preds = predict_dataset(params, ds)?;
    compute_metrics(preds.view(), ds.targets.view())
}
