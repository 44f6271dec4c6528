//! C ABI over the `d3fl` library.
//!
//! Conventions:
//! - Every fallible function returns a [`D3flStatus`]; results go through out-pointers.
//! - On failure, [`d3fl_last_error`] copies a message for the calling thread.
//! - Models and detrend states are opaque handles, released with their `_free` function.
//! - Output arrays are caller-allocated. A function that writes a variable
//!   number of values takes a capacity, always reports the required length,
//!   and returns `D3FL_BUFFER_TOO_SMALL` without writing when it does not fit.
//! - Panics never cross the boundary; they surface as `D3FL_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::slice;

use d3fl::detrend::{self, DetrendState, DetrendTechnique};
use d3fl::distributions::{self, DistKind, GevParams, LogNormParams};
use d3fl::federation::{fedavg, ClientUpdate};
use d3fl::model::{self, ModelParams, ModelShape};
use d3fl::rng::RngStream;
use d3fl::synth::{generate_client_series, SynthConfig};
use d3fl::Error;

/// Result code of every fallible call.
#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D3flStatus {
    D3FL_OK = 0,
    D3FL_NULL_POINTER = 1,
    D3FL_INVALID_ARGUMENT = 2,
    D3FL_DOMAIN = 3,
    D3FL_LENGTH = 4,
    D3FL_STATE = 5,
    D3FL_CAPABILITY = 6,
    D3FL_NUMERIC = 7,
    D3FL_SHAPE = 8,
    D3FL_PROTOCOL = 9,
    D3FL_IO = 10,
    D3FL_FORMAT = 11,
    D3FL_BUFFER_TOO_SMALL = 12,
    D3FL_PANIC = 99,
}

use D3flStatus::*;

/// Detrending technique selector for [`d3fl_detrend`].
#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D3flTechnique {
    D3FL_TECH_NONE = 0,
    D3FL_TECH_DIFFERENCING = 1,
    D3FL_TECH_MOVING_AVERAGE = 2,
    D3FL_TECH_SUBTRACT_MEAN = 3,
    D3FL_TECH_LINEAR_MODEL = 4,
    D3FL_TECH_QUADRATIC_MODEL = 5,
}

/// Noise family selector for [`d3fl_generate_series`].
#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D3flDist {
    D3FL_DIST_GEV = 0,
    D3FL_DIST_LOGNORM = 1,
}

/// Opaque LSTM parameter set.
pub struct D3flModel {
    params: ModelParams,
}

/// Opaque record of a detrending, enough to invert it exactly.
pub struct D3flDetrendState {
    state: DetrendState,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> D3flStatus {
    match e {
        Error::Param(_) | Error::Config(_) | Error::EmptyRequest | Error::Usage(_) => D3FL_INVALID_ARGUMENT,
        Error::Domain(_) => D3FL_DOMAIN,
        Error::Length { .. } => D3FL_LENGTH,
        Error::State(_) => D3FL_STATE,
        Error::Capability(_) => D3FL_CAPABILITY,
        Error::Numeric(_) => D3FL_NUMERIC,
        Error::Shape { .. } => D3FL_SHAPE,
        Error::Protocol(_) => D3FL_PROTOCOL,
        Error::Client { source, .. } => status_of(source),
        Error::Io(_) => D3FL_IO,
        Error::Data(_) | Error::Schema { .. } | Error::Quality { .. } | Error::Checkpoint(_) | Error::Csv(_) => {
            D3FL_FORMAT
        }
    }
}

/// Failure inside an entry point, before it is turned into a status.
enum Fail {
    Lib(Error),
    Null(&'static str),
    Small { needed: usize, capacity: usize },
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `body`, converting errors and panics into a status and a stored message.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> D3flStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => D3FL_OK,
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            D3FL_NULL_POINTER
        }
        Ok(Err(Fail::Small { needed, capacity })) => {
            set_error(format!("output buffer holds {capacity} values, {needed} needed"));
            D3FL_BUFFER_TOO_SMALL
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            D3FL_PANIC
        }
    }
}

unsafe fn input<'a>(ptr: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn out_ref<'a, T>(ptr: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    ptr.as_mut().ok_or(Fail::Null(what))
}

/// Copies `values` into a caller buffer of `capacity`, always reporting the length.
unsafe fn write_out(values: &[f64], out: *mut f64, capacity: usize, out_len: *mut usize) -> Result<(), Fail> {
    if let Some(len) = out_len.as_mut() {
        *len = values.len();
    }
    if values.len() > capacity {
        return Err(Fail::Small {
            needed: values.len(),
            capacity,
        });
    }
    if !values.is_empty() {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        slice::from_raw_parts_mut(out, values.len()).copy_from_slice(values);
    }
    Ok(())
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Fail> {
    if path.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| Fail::Lib(Error::Usage("path is not valid UTF-8".into())))?;
    Ok(PathBuf::from(s))
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn d3fl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Stores a scalar result through `out`.
unsafe fn scalar(out: *mut f64, value: impl FnOnce() -> d3fl::Result<f64>) -> D3flStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = value()?;
        Ok(())
    })
}

/// GEV density at `x`.
///
/// # Safety
/// `out` must be null or point to one writable `double`.
#[no_mangle]
pub unsafe extern "C" fn d3fl_gev_pdf(x: f64, mu: f64, sigma: f64, xi: f64, out: *mut f64) -> D3flStatus {
    scalar(out, || distributions::gev_pdf(x, &GevParams { mu, sigma, xi }))
}

/// GEV distribution function at `x`.
///
/// # Safety
/// `out` must be null or point to one writable `double`.
#[no_mangle]
pub unsafe extern "C" fn d3fl_gev_cdf(x: f64, mu: f64, sigma: f64, xi: f64, out: *mut f64) -> D3flStatus {
    scalar(out, || distributions::gev_cdf(x, &GevParams { mu, sigma, xi }))
}

/// GEV quantile for `u` in (0, 1).
///
/// # Safety
/// `out` must be null or point to one writable `double`.
#[no_mangle]
pub unsafe extern "C" fn d3fl_gev_quantile(u: f64, mu: f64, sigma: f64, xi: f64, out: *mut f64) -> D3flStatus {
    scalar(out, || distributions::gev_quantile(u, &GevParams { mu, sigma, xi }))
}

/// Log-normal density at `x`.
///
/// # Safety
/// `out` must be null or point to one writable `double`.
#[no_mangle]
pub unsafe extern "C" fn d3fl_lognorm_pdf(x: f64, mu: f64, sigma: f64, out: *mut f64) -> D3flStatus {
    scalar(out, || distributions::lognorm_pdf(x, &LogNormParams { mu, sigma }))
}

/// Log-normal distribution function at `x`.
///
/// # Safety
/// `out` must be null or point to one writable `double`.
#[no_mangle]
pub unsafe extern "C" fn d3fl_lognorm_cdf(x: f64, mu: f64, sigma: f64, out: *mut f64) -> D3flStatus {
    scalar(out, || distributions::lognorm_cdf(x, &LogNormParams { mu, sigma }))
}

/// Log-normal quantile for `u` in (0, 1).
///
/// # Safety
/// `out` must be null or point to one writable `double`.
#[no_mangle]
pub unsafe extern "C" fn d3fl_lognorm_quantile(u: f64, mu: f64, sigma: f64, out: *mut f64) -> D3flStatus {
    scalar(out, || distributions::lognorm_quantile(u, &LogNormParams { mu, sigma }))
}

/// Generates one synthetic client series of `n_points` hourly values with the
/// default generator settings, drawing from stream `client-<id>-data` of `seed`.
///
/// # Safety
/// `out` must hold `capacity` doubles; `out_len` may be null.
#[no_mangle]
pub unsafe extern "C" fn d3fl_generate_series(
    client_id: u32,
    dist: D3flDist,
    n_points: usize,
    seed: u64,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> D3flStatus {
    guard(|| {
        let kind = match dist {
            D3flDist::D3FL_DIST_GEV => DistKind::Gev,
            D3flDist::D3FL_DIST_LOGNORM => DistKind::LogNorm,
        };
        let cfg = SynthConfig {
            n_points,
            ..SynthConfig::default()
        };
        let mut rng = RngStream::new(seed, format!("client-{client_id}-data"));
        let series = generate_client_series(client_id, kind, &cfg, &mut rng)?;
        write_out(&series.values, out, capacity, out_len)
    })
}

fn technique(tech: D3flTechnique, window: usize) -> Result<DetrendTechnique, Error> {
    use D3flTechnique::*;
    let t = match tech {
        D3FL_TECH_NONE => DetrendTechnique::None,
        D3FL_TECH_DIFFERENCING => DetrendTechnique::Differencing,
        D3FL_TECH_MOVING_AVERAGE => DetrendTechnique::MovingAverage { window },
        D3FL_TECH_SUBTRACT_MEAN => DetrendTechnique::SubtractMean,
        D3FL_TECH_LINEAR_MODEL => DetrendTechnique::LinearModel,
        D3FL_TECH_QUADRATIC_MODEL => DetrendTechnique::QuadraticModel,
    };
    t.validate()?;
    Ok(t)
}

/// Detrends `values[0..len]`. `window` is read only for the moving average.
/// On success `*state_out` owns a new state handle.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `state_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn d3fl_detrend(
    values: *const f64,
    len: usize,
    tech: D3flTechnique,
    window: usize,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
    state_out: *mut *mut D3flDetrendState,
) -> D3flStatus {
    guard(|| {
        let state_out = out_ref(state_out, "state_out")?;
        let values = input(values, len, "values")?;
        let (detrended, state) = detrend::detrend(values, technique(tech, window)?)?;
        write_out(&detrended, out, capacity, out_len)?;
        *state_out = Box::into_raw(Box::new(D3flDetrendState { state }));
        Ok(())
    })
}

/// Inverts a detrending, restoring the original series.
///
/// # Safety
/// `state` must come from [`d3fl_detrend`]; buffers must be valid for their lengths.
#[no_mangle]
pub unsafe extern "C" fn d3fl_retrend(
    state: *const D3flDetrendState,
    values: *const f64,
    len: usize,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> D3flStatus {
    guard(|| {
        let state = state.as_ref().ok_or(Fail::Null("state"))?;
        let values = input(values, len, "values")?;
        let restored = detrend::retrend(values, &state.state)?;
        write_out(&restored, out, capacity, out_len)
    })
}

/// Releases a detrend state. Null is ignored.
///
/// # Safety
/// `state` must come from [`d3fl_detrend`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn d3fl_detrend_state_free(state: *mut D3flDetrendState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Creates a freshly initialized model (uniform ±1/√hidden, forget bias 1)
/// from stream `model-init` of `seed`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn d3fl_model_new(
    hidden: usize,
    input: usize,
    output: usize,
    seed: u64,
    out: *mut *mut D3flModel,
) -> D3flStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let shape = ModelShape::new(hidden, input, output)?;
        let params = ModelParams::init(shape, &mut RngStream::new(seed, "model-init"));
        *out = Box::into_raw(Box::new(D3flModel { params }));
        Ok(())
    })
}

/// Loads a checkpoint written by [`d3fl_model_save`] or the CLI.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn d3fl_model_load(path: *const c_char, out: *mut *mut D3flModel) -> D3flStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let params = model::load_checkpoint(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(D3flModel { params }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn d3fl_model_save(model: *const D3flModel, path: *const c_char) -> D3flStatus {
    guard(|| {
        let model = model.as_ref().ok_or(Fail::Null("model"))?;
        model::save_checkpoint(&model.params, &path_arg(path)?)?;
        Ok(())
    })
}

/// Number of parameters, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d3fl_model_param_count(model: *const D3flModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.len())
}

/// Writes hidden, input and output sizes.
///
/// # Safety
/// `model` must be a live handle; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn d3fl_model_shape(
    model: *const D3flModel,
    hidden: *mut usize,
    input: *mut usize,
    output: *mut usize,
) -> D3flStatus {
    guard(|| {
        let model = model.as_ref().ok_or(Fail::Null("model"))?;
        let s = model.params.shape();
        *out_ref(hidden, "hidden")? = s.hidden;
        *out_ref(input, "input")? = s.input;
        *out_ref(output, "output")? = s.output;
        Ok(())
    })
}

/// Copies the flat parameter vector (W_ih, W_hh, b_ih, b_hh, W_fc, b_fc).
///
/// # Safety
/// `model` must be a live handle; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn d3fl_model_get_params(
    model: *const D3flModel,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> D3flStatus {
    guard(|| {
        let model = model.as_ref().ok_or(Fail::Null("model"))?;
        write_out(model.params.as_slice(), out, capacity, out_len)
    })
}

/// Replaces the parameters; `len` must equal the parameter count.
///
/// # Safety
/// `model` must be a live handle; `values` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn d3fl_model_set_params(model: *mut D3flModel, values: *const f64, len: usize) -> D3flStatus {
    guard(|| {
        let model = model.as_mut().ok_or(Fail::Null("model"))?;
        let values = input(values, len, "values")?;
        model.params = ModelParams::unflatten(model.params.shape(), values.to_vec())?;
        Ok(())
    })
}

/// Forecasts `output` values from one window of `len` values (`steps × input`, time-major).
///
/// # Safety
/// `model` must be a live handle; buffers must be valid for their lengths.
#[no_mangle]
pub unsafe extern "C" fn d3fl_model_predict(
    model: *const D3flModel,
    window: *const f64,
    len: usize,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> D3flStatus {
    guard(|| {
        let model = model.as_ref().ok_or(Fail::Null("model"))?;
        let window = input(window, len, "window")?;
        let (pred, _) = model::forward(&model.params, window)?;
        write_out(&pred, out, capacity, out_len)
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn d3fl_model_free(model: *mut D3flModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Sample-count-weighted average of `n_clients` parameter vectors of length
/// `param_len`, stored back to back in `params`. The result is independent of
/// client order; duplicate ids or zero counts are protocol errors.
///
/// # Safety
/// `params` must hold `n_clients * param_len` doubles, `client_ids` and
/// `sample_counts` `n_clients` entries each, and `out` `param_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn d3fl_fedavg(
    params: *const f64,
    client_ids: *const u32,
    sample_counts: *const usize,
    n_clients: usize,
    param_len: usize,
    out: *mut f64,
) -> D3flStatus {
    guard(|| {
        let total = n_clients
            .checked_mul(param_len)
            .ok_or_else(|| Fail::Lib(Error::Usage("n_clients * param_len overflows".into())))?;
        let params = input(params, total, "params")?;
        if n_clients > 0 && (client_ids.is_null() || sample_counts.is_null()) {
            return Err(Fail::Null("client_ids / sample_counts"));
        }
        let ids = if n_clients == 0 { &[][..] } else { slice::from_raw_parts(client_ids, n_clients) };
        let counts = if n_clients == 0 { &[][..] } else { slice::from_raw_parts(sample_counts, n_clients) };
        let updates: Vec<ClientUpdate> = (0..n_clients)
            .map(|k| ClientUpdate {
                client_id: ids[k],
                params: params[k * param_len..(k + 1) * param_len].to_vec(),
                sample_count: counts[k],
            })
            .collect();
        let avg = fedavg(&updates)?;
        write_out(&avg, out, param_len, std::ptr::null_mut())
    })
}

/// Kolmogorov–Smirnov statistic of ascending `samples` against a GEV.
///
/// # Safety
/// `samples` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn d3fl_ks_gev(
    samples: *const f64,
    len: usize,
    mu: f64,
    sigma: f64,
    xi: f64,
    out: *mut f64,
) -> D3flStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let samples = input(samples, len, "samples")?;
        let p = GevParams::new(mu, sigma, xi)?;
        *out = distributions::ks_statistic(samples, |x| distributions::gev_cdf(x, &p).unwrap_or(f64::NAN))?;
        Ok(())
    })
}
