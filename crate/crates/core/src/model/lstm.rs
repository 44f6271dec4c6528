use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};

use super::ModelParams;
use crate::error::{Error, Result};

/// Activations cached by [`forward_batch`] for backpropagation through time.
///
/// Step `t` (0-based) reads `h[t]`, `c[t]` and writes `h[t + 1]`, `c[t + 1]`;
/// `h[0]` and `c[0]` are the zero initial state.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Per-step inputs, batch × input.
    pub x: Vec<Array2<f64>>,
    /// Per-step activated gates, batch × 4H in (i, f, g, o) order.
    pub gates: Vec<Array2<f64>>,
    pub c: Vec<Array2<f64>>,
    pub h: Vec<Array2<f64>>,
    /// tanh of the new cell state, per step.
    pub tanh_c: Vec<Array2<f64>>,
    /// batch × output.
    pub pred: Array2<f64>,
}

impl Tape {
    pub fn steps(&self) -> usize {
        self.gates.len()
    }

    pub fn batch(&self) -> usize {
        self.pred.nrows()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// tanh through one `exp`; libm's `tanh` is more than twice as slow and this
/// runs five times per hidden unit per step. Relative error below 1e-14.
#[inline]
fn tanh(x: f64) -> f64 {
    let a = x.abs();
    if a < 0.0625 {
        // (1 - e) cancels near zero; the odd series is exact to rounding here.
        let x2 = x * x;
        return x * (1.0 - x2 * (1.0 / 3.0 - x2 * (2.0 / 15.0 - x2 * (17.0 / 315.0 - x2 * (62.0 / 2835.0)))));
    }
    let e = (-2.0 * a).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

fn check_inputs(params: &ModelParams, inputs: &ArrayView2<f64>) -> Result<usize> {
    let i = params.shape().input;
    if inputs.ncols() == 0 || inputs.ncols() % i != 0 {
        return Err(Error::Shape {
            expected: i,
            got: inputs.ncols(),
        });
    }
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in input window".into()));
    }
    Ok(inputs.ncols() / i)
}

/// Combined bias row (b_ih + b_hh) broadcast to `batch` rows.
fn bias_rows(params: &ModelParams, batch: usize) -> Array2<f64> {
    let bias = &params.b_ih() + &params.b_hh();
    bias.broadcast((batch, bias.len())).expect("broadcast").to_owned()
}

/// One LSTM step. `pre` enters holding the bias rows and leaves holding activated gates.
fn cell_step(
    params: &ModelParams,
    x_t: &ArrayView2<f64>,
    h_prev: &Array2<f64>,
    c_prev: &Array2<f64>,
    pre: &mut Array2<f64>,
    c_new: &mut Array2<f64>,
    tanh_c: &mut Array2<f64>,
    h_new: &mut Array2<f64>,
) {
    let hsz = params.shape().hidden;
    if x_t.ncols() == 1 {
        // Univariate input: a rank-1 update, far cheaper than a K=1 gemm call.
        let w = params.w_ih();
        let w = w.as_slice().expect("contiguous block");
        for (mut row, &x) in pre.rows_mut().into_iter().zip(x_t.column(0)) {
            row.iter_mut().zip(w).for_each(|(p, &wi)| *p += x * wi);
        }
    } else {
        general_mat_mul(1.0, x_t, &params.w_ih().t(), 1.0, pre);
    }
    general_mat_mul(1.0, h_prev, &params.w_hh().t(), 1.0, pre);
    let batch = pre.nrows();
    let g = pre.as_slice_mut().expect("standard layout");
    let cp = c_prev.as_slice().expect("standard layout");
    let cn = c_new.as_slice_mut().expect("standard layout");
    let tc = tanh_c.as_slice_mut().expect("standard layout");
    let hn = h_new.as_slice_mut().expect("standard layout");
    for b in 0..batch {
        let row = &mut g[b * 4 * hsz..(b + 1) * 4 * hsz];
        let (ifg, o) = row.split_at_mut(3 * hsz);
        let (i_f, gg) = ifg.split_at_mut(2 * hsz);
        i_f.iter_mut().for_each(|v| *v = sigmoid(*v));
        gg.iter_mut().for_each(|v| *v = tanh(*v));
        o.iter_mut().for_each(|v| *v = sigmoid(*v));
        let (i, f) = i_f.split_at(hsz);
        let k = b * hsz..(b + 1) * hsz;
        let (cp, cn, tc) = (&cp[k.clone()], &mut cn[k.clone()], &mut tc[k.clone()]);
        for j in 0..hsz {
            cn[j] = f[j] * cp[j] + i[j] * gg[j];
        }
        for j in 0..hsz {
            tc[j] = tanh(cn[j]);
        }
        let hn = &mut hn[k];
        for j in 0..hsz {
            hn[j] = o[j] * tc[j];
        }
    }
}

fn head(params: &ModelParams, h_last: &Array2<f64>) -> Array2<f64> {
    let o = params.shape().output;
    let mut pred = params
        .b_fc()
        .broadcast((h_last.nrows(), o))
        .expect("broadcast")
        .to_owned();
    general_mat_mul(1.0, h_last, &params.w_fc().t(), 1.0, &mut pred);
    pred
}

/// Runs a batch of windows (rows; each row is `steps × input` values, time-major).
pub fn forward_batch(params: &ModelParams, inputs: ArrayView2<f64>) -> Result<Tape> {
    let steps = check_inputs(params, &inputs)?;
    let shape = params.shape();
    let (batch, hsz, isz) = (inputs.nrows(), shape.hidden, shape.input);

    let mut tape = Tape {
        x: Vec::with_capacity(steps),
        gates: Vec::with_capacity(steps),
        c: Vec::with_capacity(steps + 1),
        h: Vec::with_capacity(steps + 1),
        tanh_c: Vec::with_capacity(steps),
        pred: Array2::zeros((0, 0)),
    };
    tape.c.push(Array2::zeros((batch, hsz)));
    tape.h.push(Array2::zeros((batch, hsz)));
    let bias = bias_rows(params, batch);

    for t in 0..steps {
        let x_t = inputs.slice(s![.., t * isz..(t + 1) * isz]).to_owned();
        let mut pre = bias.clone();
        let mut c_new = Array2::zeros((batch, hsz));
        let mut tanh_c = Array2::zeros((batch, hsz));
        let mut h_new = Array2::zeros((batch, hsz));
        cell_step(
            params,
            &x_t.view(),
            &tape.h[t],
            &tape.c[t],
            &mut pre,
            &mut c_new,
            &mut tanh_c,
            &mut h_new,
        );
        tape.x.push(x_t);
        tape.gates.push(pre);
        tape.c.push(c_new);
        tape.tanh_c.push(tanh_c);
        tape.h.push(h_new);
    }
    tape.pred = head(params, &tape.h[steps]);
    if tape.pred.iter().any(|v| !v.is_finite()) {
        let step = (1..=steps)
            .find(|&t| tape.h[t].iter().chain(tape.c[t].iter()).any(|v| !v.is_finite()))
            .map(|t| t - 1);
        return Err(match step {
            Some(t) => Error::Numeric(format!("non-finite LSTM state at step {t}")),
            None => Error::Numeric("non-finite prediction in output layer".into()),
        });
    }
    Ok(tape)
}

/// Forward pass without a tape; only the running state is kept.
pub fn predict(params: &ModelParams, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
    let steps = check_inputs(params, &inputs)?;
    let shape = params.shape();
    let (batch, hsz, isz) = (inputs.nrows(), shape.hidden, shape.input);
    let bias = bias_rows(params, batch);
    let mut h = Array2::zeros((batch, hsz));
    let mut c = Array2::zeros((batch, hsz));
    let mut h_new = Array2::zeros((batch, hsz));
    let mut c_new = Array2::zeros((batch, hsz));
    let mut tanh_c = Array2::zeros((batch, hsz));
    let mut pre = bias.clone();
    for t in 0..steps {
        pre.assign(&bias);
        let x_t = inputs.slice(s![.., t * isz..(t + 1) * isz]);
        cell_step(params, &x_t, &h, &c, &mut pre, &mut c_new, &mut tanh_c, &mut h_new);
        std::mem::swap(&mut h, &mut h_new);
        std::mem::swap(&mut c, &mut c_new);
    }
    let pred = head(params, &h);
    if pred.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite prediction".into()));
    }
    Ok(pred)
}

/// Single-window forward pass.
pub fn forward(params: &ModelParams, window: &[f64]) -> Result<(Vec<f64>, Tape)> {
    let inputs = ArrayView2::from_shape((1, window.len()), window).expect("row view");
    let tape = forward_batch(params, inputs)?;
    Ok((tape.pred.row(0).to_vec(), tape))
}

pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape {
            expected: pred.len(),
            got: target.len(),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// Gradient of the batch-mean MSE (mean over all batch × output entries) w.r.t. every parameter.
pub fn backward_batch(params: &ModelParams, tape: &Tape, targets: ArrayView2<f64>) -> Result<Vec<f64>> {
    let shape = params.shape();
    let (batch, hsz) = (tape.batch(), shape.hidden);
    if targets.dim() != tape.pred.dim() {
        return Err(Error::Shape {
            expected: tape.pred.len(),
            got: targets.len(),
        });
    }
    let mut grad = ModelParams::zeros(shape);
    let mut g = grad.blocks_mut();

    let scale = 2.0 / (batch * shape.output) as f64;
    let dpred = (&tape.pred - &targets) * scale;
    let h_last = &tape.h[tape.steps()];
    general_mat_mul(1.0, &dpred.t(), h_last, 0.0, &mut g.w_fc);
    g.b_fc.assign(&dpred.sum_axis(Axis(0)));

    let mut dh = dpred.dot(&params.w_fc());
    let mut dc = Array2::<f64>::zeros((batch, hsz));
    let mut dgates = Array2::<f64>::zeros((batch, 4 * hsz));
    let mut db = ndarray::Array1::<f64>::zeros(4 * hsz);

    for t in (0..tape.steps()).rev() {
        {
            let gates = tape.gates[t].as_slice().expect("standard layout");
            let tc = tape.tanh_c[t].as_slice().expect("standard layout");
            let c_prev = tape.c[t].as_slice().expect("standard layout");
            let dh_s = dh.as_slice().expect("standard layout");
            let dc_s = dc.as_slice_mut().expect("standard layout");
            let dg = dgates.as_slice_mut().expect("standard layout");
            for b in 0..batch {
                let gr = &gates[b * 4 * hsz..(b + 1) * 4 * hsz];
                let dr = &mut dg[b * 4 * hsz..(b + 1) * 4 * hsz];
                for j in 0..hsz {
                    let k = b * hsz + j;
                    let (i, f, gg, o) = (gr[j], gr[hsz + j], gr[2 * hsz + j], gr[3 * hsz + j]);
                    let dhk = dh_s[k];
                    let dck = dc_s[k] + dhk * o * (1.0 - tc[k] * tc[k]);
                    dr[j] = dck * gg * i * (1.0 - i);
                    dr[hsz + j] = dck * c_prev[k] * f * (1.0 - f);
                    dr[2 * hsz + j] = dck * i * (1.0 - gg * gg);
                    dr[3 * hsz + j] = dhk * tc[k] * o * (1.0 - o);
                    dc_s[k] = dck * f;
                }
            }
        }
        general_mat_mul(1.0, &dgates.t(), &tape.x[t], 1.0, &mut g.w_ih);
        general_mat_mul(1.0, &dgates.t(), &tape.h[t], 1.0, &mut g.w_hh);
        db += &dgates.sum_axis(Axis(0));
        if t > 0 {
            dh = dgates.dot(&params.w_hh());
        }
    }
    g.b_ih.assign(&db);
    g.b_hh.assign(&db);
    Ok(grad.into_flat())
}

/// Gradient of `mse_loss(forward(window).0, target)`.
pub fn backward(params: &ModelParams, tape: &Tape, target: &[f64]) -> Result<Vec<f64>> {
    let targets = ArrayView2::from_shape((1, target.len()), target).map_err(|_| Error::Shape {
        expected: tape.pred.ncols(),
        got: target.len(),
    })?;
    backward_batch(params, tape, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelShape;
    use crate::rng::RngStream;

    fn random_params(h: usize, seed: u64) -> ModelParams {
        let shape = ModelShape::new(h, 1, 2).unwrap();
        let mut p = ModelParams::init(shape, &mut RngStream::new(seed, "init"));
        // Non-zero biases everywhere so every block contributes to the loss.
        let mut r = RngStream::new(seed, "bias");
        for range in [shape.b_ih(), shape.b_hh(), shape.b_fc()] {
            for v in &mut p.as_mut_slice()[range] {
                *v += r.uniform_range(-0.5, 0.5);
            }
        }
        p
    }

    #[test]
    fn zero_params_predict_head_bias() {
        let shape = ModelShape::new(4, 1, 2).unwrap();
        let mut p = ModelParams::zeros(shape);
        let r = shape.b_fc();
        p.as_mut_slice()[r].copy_from_slice(&[0.25, -1.5]);
        let (pred, _) = forward(&p, &[0.3, 0.1, 0.9]).unwrap();
        assert_eq!(pred, vec![0.25, -1.5]);
    }

    #[test]
    fn single_unit_single_step_by_hand() {
        // H=1, I=1, O=1, one time step from zero state.
        let shape = ModelShape::new(1, 1, 1).unwrap();
        let w_ih = [0.5, -0.3, 0.8, 0.2];
        let w_hh = [0.1, 0.4, -0.6, 0.9];
        let b_ih = [0.05, 0.6, -0.1, 0.02];
        let b_hh = [-0.01, 0.03, 0.07, 0.11];
        let (w_fc, b_fc) = (1.7, -0.4);
        let mut flat = Vec::new();
        flat.extend_from_slice(&w_ih);
        flat.extend_from_slice(&w_hh);
        flat.extend_from_slice(&b_ih);
        flat.extend_from_slice(&b_hh);
        flat.push(w_fc);
        flat.push(b_fc);
        let p = ModelParams::unflatten(shape, flat).unwrap();
        let x = 0.7;
        let (pred, _) = forward(&p, &[x]).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(w_ih[0] * x + b_ih[0] + b_hh[0]);
        let f = sig(w_ih[1] * x + b_ih[1] + b_hh[1]);
        let g = (w_ih[2] * x + b_ih[2] + b_hh[2]).tanh();
        let o = sig(w_ih[3] * x + b_ih[3] + b_hh[3]);
        let c = f * 0.0 + i * g;
        let h = o * c.tanh();
        let expected = w_fc * h + b_fc;
        assert!((pred[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn forward_is_deterministic_and_gates_in_range() {
        let p = random_params(8, 2);
        let w: Vec<f64> = (0..24).map(|k| (k as f64 * 0.37).sin().abs()).collect();
        let (a, tape) = forward(&p, &w).unwrap();
        let (b, _) = forward(&p, &w).unwrap();
        assert_eq!(a, b);
        let h = 8;
        for gates in &tape.gates {
            for (k, v) in gates.iter().enumerate() {
                let j = k % (4 * h);
                if (2 * h..3 * h).contains(&j) {
                    assert!((-1.0..=1.0).contains(v));
                } else {
                    assert!((0.0..=1.0).contains(v));
                }
            }
        }
        for tc in &tape.tanh_c {
            assert!(tc.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn predict_matches_forward_batch() {
        let p = random_params(6, 5);
        let mut r = RngStream::new(1, "x");
        let inputs = Array2::from_shape_fn((7, 10), |_| r.uniform_range(0.0, 1.0));
        let tape = forward_batch(&p, inputs.view()).unwrap();
        let pred = predict(&p, inputs.view()).unwrap();
        assert_eq!(tape.pred, pred);
    }

    #[test]
    fn rejects_non_finite_windows() {
        let p = random_params(4, 1);
        assert!(matches!(forward(&p, &[0.0, f64::NAN]), Err(Error::Numeric(_))));
    }

    #[test]
    fn divergence_names_the_step() {
        let shape = ModelShape::new(2, 1, 1).unwrap();
        let mut p = ModelParams::zeros(shape);
        // inf + -inf in the coupled biases poisons the first step.
        let (bi, bh) = (shape.b_ih(), shape.b_hh());
        p.as_mut_slice()[bi].fill(f64::INFINITY);
        p.as_mut_slice()[bh].fill(f64::NEG_INFINITY);
        let err = forward(&p, &[1.0, 1.0]).unwrap_err();
        assert!(err.to_string().contains("step 0"), "{err}");
    }

    #[test]
    fn fast_tanh_matches_libm() {
        for k in -40_000..=40_000 {
            let x = k as f64 / 1000.0;
            let (a, b) = (tanh(x), x.tanh());
            assert!((a - b).abs() <= 1e-14 * b.abs().max(1e-300), "x={x}: {a} vs {b}");
        }
        assert_eq!(tanh(800.0), 1.0);
        assert_eq!(tanh(-800.0), -1.0);
        assert!(tanh(f64::NAN).is_nan());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 4.0]).unwrap(), 2.0);
        assert_eq!(mse_loss(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5);
        assert!(matches!(mse_loss(&[0.0], &[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn head_gradients_closed_form() {
        let p = random_params(8, 9);
        let w: Vec<f64> = (0..6).map(|k| k as f64 / 6.0).collect();
        let (pred, tape) = forward(&p, &w).unwrap();
        let target = [0.3, 0.9];
        let g = backward(&p, &tape, &target).unwrap();
        let s = p.shape();
        for k in 0..2 {
            let expected = 2.0 * (pred[k] - target[k]) / 2.0;
            assert!((g[s.b_fc()][k] - expected).abs() < 1e-15);
        }
        let g0 = backward(&p, &tape, &pred).unwrap();
        assert!(g0[s.w_fc()].iter().all(|v| *v == 0.0));
        assert!(g0[s.b_fc()].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn batch_gradient_is_mean_of_window_gradients() {
        let p = random_params(5, 4);
        let mut r = RngStream::new(8, "w");
        let inputs = Array2::from_shape_fn((4, 6), |_| r.uniform_range(0.0, 1.0));
        let targets = Array2::from_shape_fn((4, 2), |_| r.uniform_range(0.0, 1.0));
        let tape = forward_batch(&p, inputs.view()).unwrap();
        let g = backward_batch(&p, &tape, targets.view()).unwrap();
        let mut mean = vec![0.0; g.len()];
        for b in 0..4 {
            let w = inputs.row(b).to_vec();
            let (_, t1) = forward(&p, &w).unwrap();
            let gb = backward(&p, &t1, &targets.row(b).to_vec()).unwrap();
            for (m, v) in mean.iter_mut().zip(gb) {
                *m += v / 4.0;
            }
        }
        for (a, b) in g.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }
}
