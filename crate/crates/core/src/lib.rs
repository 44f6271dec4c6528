//! Centralized vs federated LSTM forecasting on non-linear, non-stationary
//! time series, with five detrending transforms.
//!
//! The pipeline, per client: generate or ingest a series ([`synth`],
//! [`ingest`]), detrend it ([`detrend`]), min-max scale and window it, then
//! train the LSTM ([`model`]) either on the pooled data or with FedAvg
//! ([`federation`]). [`eval`] runs the experiment matrix and writes reports.

pub mod config;
pub mod detrend;
pub mod distributions;
pub mod error;
pub mod eval;
pub mod federation;
pub mod ingest;
pub mod model;
pub mod numfmt;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
