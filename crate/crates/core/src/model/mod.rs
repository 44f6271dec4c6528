//! Single-layer LSTM forecaster with a fully connected head.
//!
//! Parameters live in one flat `Vec<f64>` so that federated averaging,
//! the optimizer, and checkpoints all work on the same contiguous buffer.
//! Layout, in order: `W_ih` (4H×I, row-major), `W_hh` (4H×H), `b_ih` (4H),
//! `b_hh` (4H), `W_fc` (O×H), `b_fc` (O). Gate blocks inside the 4H rows are
//! ordered input, forget, cell candidate, output.

mod adam;
mod checkpoint;
mod data;
mod lstm;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use data::{chrono_split, make_windows, min_max_scale, train_count, Scaler, WindowedDataset};
pub use lstm::{backward, backward_batch, forward, forward_batch, mse_loss, predict, Tape};
pub use train::{evaluate, predict_dataset, train_epoch};

use std::ops::Range;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelShape {
    pub hidden: usize,
    pub input: usize,
    pub output: usize,
}

impl ModelShape {
    pub fn new(hidden: usize, input: usize, output: usize) -> Result<Self> {
        if hidden == 0 || input == 0 || output == 0 {
            return Err(Error::Config(format!(
                "model dimensions must be positive (H={hidden}, I={input}, O={output})"
            )));
        }
        Ok(ModelShape { hidden, input, output })
    }

    pub fn param_count(&self) -> usize {
        self.b_fc().end
    }

    pub fn w_ih(&self) -> Range<usize> {
        0..4 * self.hidden * self.input
    }

    pub fn w_hh(&self) -> Range<usize> {
        let s = self.w_ih().end;
        s..s + 4 * self.hidden * self.hidden
    }

    pub fn b_ih(&self) -> Range<usize> {
        let s = self.w_hh().end;
        s..s + 4 * self.hidden
    }

    pub fn b_hh(&self) -> Range<usize> {
        let s = self.b_ih().end;
        s..s + 4 * self.hidden
    }

    pub fn w_fc(&self) -> Range<usize> {
        let s = self.b_hh().end;
        s..s + self.output * self.hidden
    }

    pub fn b_fc(&self) -> Range<usize> {
        let s = self.w_fc().end;
        s..s + self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    shape: ModelShape,
    data: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(shape: ModelShape) -> Self {
        ModelParams {
            shape,
            data: vec![0.0; shape.param_count()],
        }
    }

    /// Weights uniform in [−1/√H, 1/√H]; forget-gate input bias 1, other biases 0.
    pub fn init(shape: ModelShape, rng: &mut RngStream) -> Self {
        let mut p = ModelParams::zeros(shape);
        let bound = 1.0 / (shape.hidden as f64).sqrt();
        for range in [shape.w_ih(), shape.w_hh(), shape.w_fc()] {
            for w in &mut p.data[range] {
                *w = rng.uniform_range(-bound, bound);
            }
        }
        let h = shape.hidden;
        let forget = shape.b_ih().start + h..shape.b_ih().start + 2 * h;
        p.data[forget].fill(1.0);
        p
    }

    pub fn unflatten(shape: ModelShape, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != shape.param_count() {
            return Err(Error::Shape {
                expected: shape.param_count(),
                got: flat.len(),
            });
        }
        Ok(ModelParams { shape, data: flat })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn w_ih(&self) -> ArrayView2<'_, f64> {
        let s = self.shape;
        ArrayView2::from_shape((4 * s.hidden, s.input), &self.data[s.w_ih()]).expect("w_ih")
    }

    pub fn w_hh(&self) -> ArrayView2<'_, f64> {
        let s = self.shape;
        ArrayView2::from_shape((4 * s.hidden, s.hidden), &self.data[s.w_hh()]).expect("w_hh")
    }

    pub fn b_ih(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.data[self.shape.b_ih()])
    }

    pub fn b_hh(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.data[self.shape.b_hh()])
    }

    pub fn w_fc(&self) -> ArrayView2<'_, f64> {
        let s = self.shape;
        ArrayView2::from_shape((s.output, s.hidden), &self.data[s.w_fc()]).expect("w_fc")
    }

    pub fn b_fc(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.data[self.shape.b_fc()])
    }

    /// Mutable views of every block at once, in layout order.
    pub(crate) fn blocks_mut(&mut self) -> Blocks<'_> {
        let s = self.shape;
        let (w_ih, rest) = self.data.split_at_mut(s.w_ih().len());
        let (w_hh, rest) = rest.split_at_mut(s.w_hh().len());
        let (b_ih, rest) = rest.split_at_mut(s.b_ih().len());
        let (b_hh, rest) = rest.split_at_mut(s.b_hh().len());
        let (w_fc, b_fc) = rest.split_at_mut(s.w_fc().len());
        Blocks {
            w_ih: ArrayViewMut2::from_shape((4 * s.hidden, s.input), w_ih).expect("w_ih"),
            w_hh: ArrayViewMut2::from_shape((4 * s.hidden, s.hidden), w_hh).expect("w_hh"),
            b_ih: ArrayViewMut1::from(b_ih),
            b_hh: ArrayViewMut1::from(b_hh),
            w_fc: ArrayViewMut2::from_shape((s.output, s.hidden), w_fc).expect("w_fc"),
            b_fc: ArrayViewMut1::from(b_fc),
        }
    }
}

pub(crate) struct Blocks<'a> {
    pub w_ih: ArrayViewMut2<'a, f64>,
    pub w_hh: ArrayViewMut2<'a, f64>,
    pub b_ih: ArrayViewMut1<'a, f64>,
    pub b_hh: ArrayViewMut1<'a, f64>,
    pub w_fc: ArrayViewMut2<'a, f64>,
    pub b_fc: ArrayViewMut1<'a, f64>,
}
