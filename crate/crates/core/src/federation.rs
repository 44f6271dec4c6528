//! FedAvg orchestration over simulated clients, and the centralized baseline.
//!
//! Each client owns its windows, its optimizer state, and its random streams,
//! and the server sums updates in ascending client-id order, so a round gives
//! bit-identical results whether clients train sequentially or on a thread pool.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::detrend::{detrend, DetrendState, DetrendTechnique};
use crate::error::{Error, Result};
use crate::eval::Metrics;
use crate::model::{
    evaluate, make_windows, train_count, train_epoch, AdamState, ModelParams, ModelShape, Scaler,
    WindowedDataset,
};
use crate::rng::RngStream;
use crate::synth::TimeSeries;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 128,
            lookback: 24,
            horizon: 2,
            batch_size: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl ModelConfig {
    pub fn shape(&self) -> Result<ModelShape> {
        ModelShape::new(self.hidden, 1, self.horizon)
    }

    pub fn optimizer(&self, param_count: usize) -> AdamState {
        AdamState::with_hyper(param_count, self.lr, self.beta1, self.beta2, self.eps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub train_frac: f64,
    pub model: ModelConfig,
    pub seed: u64,
    /// Worker threads for client training; 1 runs clients inline.
    pub jobs: usize,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            rounds: 100,
            local_epochs: 1,
            train_frac: 0.9,
            model: ModelConfig::default(),
            seed: 0,
            jobs: 1,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(Error::Config("fed.rounds must be at least 1".into()));
        }
        if self.local_epochs < 1 {
            return Err(Error::Config("fed.local_epochs must be at least 1".into()));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::Config("fed.train_frac must lie in (0, 1)".into()));
        }
        if self.model.batch_size == 0 || self.model.lookback == 0 || self.model.horizon == 0 {
            return Err(Error::Config("model.batch_size, lookback and horizon must be positive".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        self.model.shape()?;
        Ok(())
    }
}

/// A client's prepared data and private training state.
#[derive(Debug, Clone)]
pub struct ClientHandle {
    pub client_id: u32,
    pub train: WindowedDataset,
    pub validation: WindowedDataset,
    pub scaler: Scaler,
    pub detrend_state: DetrendState,
    pub optimizer: AdamState,
    /// The untransformed input series, kept for forecasts in data units.
    pub series: TimeSeries,
}

impl ClientHandle {
    /// Detrend, fit the scaler on the training span only, window, and split.
    pub fn prepare(series: &TimeSeries, tech: DetrendTechnique, cfg: &FederationConfig) -> Result<Self> {
        let m = &cfg.model;
        let (detrended, state) = detrend(&series.values, tech)?;
        let span = m.lookback + m.horizon;
        if detrended.len() < span + 1 {
            return Err(Error::Length {
                needed: span + 1 + tech.lost_prefix(),
                got: series.len(),
            });
        }
        let windows = detrended.len() - span + 1;
        let n_train = train_count(windows, cfg.train_frac);
        // Training windows cover detrended[0 .. n_train + span − 1).
        let scaler = Scaler::fit(&detrended[..n_train + span - 1])?;
        let ds = make_windows(&scaler.scale_all(&detrended), m.lookback, m.horizon)?.with_scaler(scaler);
        let shape = m.shape()?;
        Ok(ClientHandle {
            client_id: series.client_id,
            train: ds.rows(0..n_train),
            validation: ds.rows(n_train..windows),
            scaler,
            detrend_state: state,
            optimizer: m.optimizer(shape.param_count()),
            series: series.clone(),
        })
    }

    /// Input-series index of the first target of validation window `k`.
    pub fn validation_target_index(&self, k: usize) -> usize {
        self.train.len() + k + self.train.lookback() + self.detrend_state.offset()
    }
}

pub fn prepare_clients(
    cohort: &[TimeSeries],
    tech: DetrendTechnique,
    cfg: &FederationConfig,
) -> Result<Vec<ClientHandle>> {
    if cohort.is_empty() {
        return Err(Error::Protocol("cohort has no clients".into()));
    }
    let mut ids: Vec<u32> = cohort.iter().map(|s| s.client_id).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Protocol(format!("duplicate client id {}", w[0])));
    }
    cohort
        .iter()
        .map(|s| ClientHandle::prepare(s, tech, cfg).map_err(|e| e.for_client(s.client_id)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: u32,
    pub params: Vec<f64>,
    pub sample_count: usize,
}

/// Sample-count-weighted average of client parameter vectors.
///
/// Weights are normalized first and the sum runs in ascending client-id
/// order, so the result does not depend on the order of `updates` and a
/// single update comes back bit for bit.
pub fn fedavg(updates: &[ClientUpdate]) -> Result<Vec<f64>> {
    let first = updates.first().ok_or_else(|| Error::Protocol("no client updates to aggregate".into()))?;
    let len = first.params.len();
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    for w in sorted.windows(2) {
        if w[0].client_id == w[1].client_id {
            return Err(Error::Protocol(format!("client {} submitted twice", w[0].client_id)));
        }
    }
    for u in &sorted {
        if u.params.len() != len {
            return Err(Error::Shape { expected: len, got: u.params.len() });
        }
        if u.sample_count == 0 {
            return Err(Error::Protocol(format!("client {} reported zero samples", u.client_id)));
        }
    }
    let total: f64 = sorted.iter().map(|u| u.sample_count as f64).sum();
    let mut out = vec![0.0; len];
    for u in &sorted {
        let w = u.sample_count as f64 / total;
        for (o, p) in out.iter_mut().zip(&u.params) {
            *o += w * p;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientMetrics {
    pub client_id: u32,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    /// 1-based round (or centralized epoch) number.
    pub round: usize,
    pub clients: Vec<ClientMetrics>,
    /// Unweighted mean over clients.
    pub cohort: Metrics,
    pub wall_time: Duration,
}

/// Shuffle stream for one local epoch over the union of `client_ids`' data.
///
/// Keyed by which clients' windows are being trained on, so a one-client
/// federation and a centralized run over that same client draw identically.
pub fn shuffle_stream(seed: u64, round: usize, epoch: usize, client_ids: &[u32]) -> RngStream {
    let ids: Vec<String> = client_ids.iter().map(|c| c.to_string()).collect();
    RngStream::new(seed, format!("shuffle-round-{round}-epoch-{epoch}-clients-{}", ids.join("+")))
}

pub fn init_global(cfg: &FederationConfig) -> Result<ModelParams> {
    Ok(ModelParams::init(cfg.model.shape()?, &mut RngStream::new(cfg.seed, "model-init")))
}

fn evaluate_clients(
    params: &ModelParams,
    clients: &[ClientHandle],
    round: usize,
    started: Instant,
) -> Result<RoundReport> {
    let per_client = clients
        .iter()
        .map(|c| {
            evaluate(params, &c.validation)
                .map(|metrics| ClientMetrics { client_id: c.client_id, metrics })
                .map_err(|e| e.for_client(c.client_id))
        })
        .collect::<Result<Vec<_>>>()?;
    let cohort = Metrics::mean(per_client.iter().map(|c| c.metrics))?;
    Ok(RoundReport {
        round,
        clients: per_client,
        cohort,
        wall_time: started.elapsed(),
    })
}

fn local_update(global: &ModelParams, client: &mut ClientHandle, cfg: &FederationConfig, round: usize) -> Result<ClientUpdate> {
    let mut params = global.clone();
    for epoch in 0..cfg.local_epochs {
        let mut rng = shuffle_stream(cfg.seed, round, epoch, &[client.client_id]);
        train_epoch(&mut params, &mut client.optimizer, &client.train, cfg.model.batch_size, &mut rng)
            .map_err(|e| e.for_client(client.client_id))?;
    }
    Ok(ClientUpdate {
        client_id: client.client_id,
        params: params.into_flat(),
        sample_count: client.train.len(),
    })
}

/// One FedAvg round: broadcast, local training, aggregation, then evaluation
/// of the new global model on every client's validation windows.
pub fn run_round(
    global: &ModelParams,
    clients: &mut [ClientHandle],
    cfg: &FederationConfig,
    round: usize,
) -> Result<(ModelParams, RoundReport)> {
    if clients.is_empty() {
        return Err(Error::Protocol("round has no clients".into()));
    }
    let started = Instant::now();
    let updates: Vec<ClientUpdate> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            clients
                .par_iter_mut()
                .map(|c| local_update(global, c, cfg, round))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        clients
            .iter_mut()
            .map(|c| local_update(global, c, cfg, round))
            .collect::<Result<Vec<_>>>()?
    };
    let next = ModelParams::unflatten(global.shape(), fedavg(&updates)?)?;
    if !next.is_finite() {
        return Err(Error::Numeric(format!("global model diverged in round {round}")));
    }
    let report = evaluate_clients(&next, clients, round, started)?;
    Ok((next, report))
}

/// Stepwise FedAvg driver.
#[derive(Debug, Clone)]
pub struct Federation {
    cfg: FederationConfig,
    global: ModelParams,
    clients: Vec<ClientHandle>,
    round: usize,
}

impl Federation {
    pub fn new(cohort: &[TimeSeries], tech: DetrendTechnique, cfg: &FederationConfig) -> Result<Self> {
        cfg.validate()?;
        let clients = prepare_clients(cohort, tech, cfg)?;
        Ok(Federation {
            global: init_global(cfg)?,
            cfg: cfg.clone(),
            clients,
            round: 0,
        })
    }

    pub fn step(&mut self) -> Result<RoundReport> {
        let round = self.round + 1;
        let (next, report) = run_round(&self.global, &mut self.clients, &self.cfg, round)?;
        self.global = next;
        self.round = round;
        Ok(report)
    }

    pub fn global(&self) -> &ModelParams {
        &self.global
    }

    pub fn clients(&self) -> &[ClientHandle] {
        &self.clients
    }

    pub fn rounds_done(&self) -> usize {
        self.round
    }
}

/// Centralized baseline: every client's training windows pooled into one
/// dataset (ascending client id), one epoch per round, evaluated per client.
#[derive(Debug, Clone)]
pub struct CentralizedTrainer {
    cfg: FederationConfig,
    params: ModelParams,
    optimizer: AdamState,
    clients: Vec<ClientHandle>,
    pooled: WindowedDataset,
    client_ids: Vec<u32>,
    epoch: usize,
}

impl CentralizedTrainer {
    pub fn new(cohort: &[TimeSeries], tech: DetrendTechnique, cfg: &FederationConfig) -> Result<Self> {
        cfg.validate()?;
        let mut clients = prepare_clients(cohort, tech, cfg)?;
        clients.sort_by_key(|c| c.client_id);
        let parts: Vec<&WindowedDataset> = clients.iter().map(|c| &c.train).collect();
        let pooled = WindowedDataset::concat(&parts)?;
        let params = init_global(cfg)?;
        Ok(CentralizedTrainer {
            optimizer: cfg.model.optimizer(params.len()),
            client_ids: clients.iter().map(|c| c.client_id).collect(),
            cfg: cfg.clone(),
            params,
            clients,
            pooled,
            epoch: 0,
        })
    }

    pub fn step(&mut self) -> Result<RoundReport> {
        let started = Instant::now();
        let round = self.epoch + 1;
        for epoch in 0..self.cfg.local_epochs {
            let mut rng = shuffle_stream(self.cfg.seed, round, epoch, &self.client_ids);
            train_epoch(&mut self.params, &mut self.optimizer, &self.pooled, self.cfg.model.batch_size, &mut rng)?;
        }
        self.epoch = round;
        evaluate_clients(&self.params, &self.clients, round, started)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn clients(&self) -> &[ClientHandle] {
        &self.clients
    }

    pub fn pooled_len(&self) -> usize {
        self.pooled.len()
    }
}

/// Reports plus the final model and client state of a finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reports: Vec<RoundReport>,
    pub model: ModelParams,
    pub clients: Vec<ClientHandle>,
}

impl RunOutcome {
    pub fn final_cohort(&self) -> Option<Metrics> {
        self.reports.last().map(|r| r.cohort)
    }
}

pub fn run_federation(cohort: &[TimeSeries], tech: DetrendTechnique, cfg: &FederationConfig) -> Result<RunOutcome> {
    let mut fed = Federation::new(cohort, tech, cfg)?;
    let reports = (0..cfg.rounds).map(|_| fed.step()).collect::<Result<Vec<_>>>()?;
    Ok(RunOutcome {
        reports,
        model: fed.global,
        clients: fed.clients,
    })
}

pub fn run_centralized(cohort: &[TimeSeries], tech: DetrendTechnique, cfg: &FederationConfig) -> Result<RunOutcome> {
    let mut trainer = CentralizedTrainer::new(cohort, tech, cfg)?;
    let reports = (0..cfg.rounds).map(|_| trainer.step()).collect::<Result<Vec<_>>>()?;
    Ok(RunOutcome {
        reports,
        model: trainer.params,
        clients: trainer.clients,
    })
}
