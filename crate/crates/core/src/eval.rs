//! Metrics, the 18-experiment matrix, and the suite runner that writes
//! `summary.csv`, per-run `rounds.csv`, forecast dumps and checkpoints.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::ArrayView2;

use crate::detrend::{reconstruct_forecast, DetrendTechnique, DEFAULT_MA_WINDOW};
use crate::error::{Error, Result};
use crate::federation::{run_centralized, run_federation, FederationConfig, RoundReport, RunOutcome};
use crate::model::{predict_dataset, save_checkpoint};
use crate::numfmt::sig9;
use crate::synth::{generate_cohort, iso8601, Regime, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
}

impl Metrics {
    /// Unweighted mean of each metric over `items`.
    pub fn mean<I: IntoIterator<Item = Metrics>>(items: I) -> Result<Metrics> {
        let (mut n, mut mse, mut rmse, mut mae) = (0usize, 0.0, 0.0, 0.0);
        for m in items {
            n += 1;
            mse += m.mse;
            rmse += m.rmse;
            mae += m.mae;
        }
        if n == 0 {
            return Err(Error::Domain("mean of zero metric sets".into()));
        }
        let k = n as f64;
        Ok(Metrics { mse: mse / k, rmse: rmse / k, mae: mae / k })
    }
}

/// MSE and MAE over every element of every prediction row; RMSE = √MSE.
pub fn compute_metrics(preds: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<Metrics> {
    if preds.dim() != targets.dim() {
        return Err(Error::Shape { expected: targets.len(), got: preds.len() });
    }
    if preds.is_empty() {
        return Err(Error::Domain("metrics of an empty prediction set".into()));
    }
    let n = preds.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (p, t) in preds.iter().zip(targets.iter()) {
        let d = p - t;
        se += d * d;
        ae += d.abs();
    }
    let mse = se / n;
    Ok(Metrics { mse, rmse: mse.sqrt(), mae: ae / n })
}

/// Convenience form over lists of per-window output vectors.
pub fn compute_metrics_rows(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Metrics> {
    if preds.len() != targets.len() {
        return Err(Error::Shape { expected: targets.len(), got: preds.len() });
    }
    let width = preds.first().map_or(0, |r| r.len());
    if preds.iter().chain(targets).any(|r| r.len() != width) {
        return Err(Error::Shape { expected: width, got: 0 });
    }
    let flat = |rows: &[Vec<f64>]| rows.iter().flatten().copied().collect::<Vec<_>>();
    let (p, t) = (flat(preds), flat(targets));
    let pv = ArrayView2::from_shape((preds.len(), width), &p).expect("rectangular");
    let tv = ArrayView2::from_shape((targets.len(), width), &t).expect("rectangular");
    compute_metrics(pv, tv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Centralized,
    Federated,
}

impl Mode {
    pub fn tag(self) -> &'static str {
        match self {
            Mode::Centralized => "centralized",
            Mode::Federated => "federated",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centralized" => Ok(Mode::Centralized),
            "federated" => Ok(Mode::Federated),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentSpec {
    pub exp_num: usize,
    pub technique: DetrendTechnique,
    pub regime: Regime,
}

/// Experiments 1–18: six techniques (none, differencing, moving average,
/// mean removal, linear, quadratic) × regimes (gev, lognorm, mixed).
pub fn experiment_matrix_with_window(window: usize) -> Vec<ExperimentSpec> {
    let techniques = [
        DetrendTechnique::None,
        DetrendTechnique::Differencing,
        DetrendTechnique::MovingAverage { window },
        DetrendTechnique::SubtractMean,
        DetrendTechnique::LinearModel,
        DetrendTechnique::QuadraticModel,
    ];
    let regimes = [Regime::Gev, Regime::LogNorm, Regime::Mixed];
    techniques
        .iter()
        .flat_map(|&t| regimes.iter().map(move |&r| (t, r)))
        .enumerate()
        .map(|(k, (technique, regime))| ExperimentSpec { exp_num: k + 1, technique, regime })
        .collect()
}

pub fn experiment_matrix() -> Vec<ExperimentSpec> {
    experiment_matrix_with_window(DEFAULT_MA_WINDOW)
}

/// Everything a suite run needs besides the experiment list.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub synth: SynthConfig,
    pub n_clients: usize,
    pub fed: FederationConfig,
    pub modes: Vec<Mode>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            synth: SynthConfig::default(),
            n_clients: 10,
            fed: FederationConfig::default(),
            modes: vec![Mode::Centralized, Mode::Federated],
        }
    }
}

#[derive(Debug)]
pub struct SummaryRow {
    pub exp: usize,
    pub mode: Mode,
    pub technique: DetrendTechnique,
    pub regime: Regime,
    pub result: Result<Metrics>,
}

#[derive(Debug)]
pub struct SuiteOutcome {
    pub rows: Vec<SummaryRow>,
}

impl SuiteOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.result.is_err()).count()
    }

    pub fn metrics(&self, exp: usize, mode: Mode) -> Option<&Metrics> {
        self.rows
            .iter()
            .find(|r| r.exp == exp && r.mode == mode)
            .and_then(|r| r.result.as_ref().ok())
    }
}

pub const SUMMARY_HEADER: &str = "exp,mode,technique,regime,mse,rmse,mae";
pub const ROUNDS_HEADER: &str = "round,client_id,mse,rmse,mae";

pub fn run_dir_name(exp: usize, mode: Mode) -> String {
    format!("exp_{exp:02}_{mode}")
}

/// Runs every spec in every configured mode, ascending by experiment number
/// with centralized before federated. A failed run is recorded and the suite
/// carries on; the caller decides the exit status from [`SuiteOutcome::failures`].
pub fn run_suite(specs: &[ExperimentSpec], cfg: &SuiteConfig, out_dir: &Path) -> Result<SuiteOutcome> {
    fs::create_dir_all(out_dir)?;
    let mut specs = specs.to_vec();
    specs.sort_by_key(|s| s.exp_num);
    let mut modes = cfg.modes.clone();
    modes.sort();
    modes.dedup();

    let mut rows = Vec::new();
    for spec in &specs {
        let cohort = generate_cohort(spec.regime, cfg.n_clients, &cfg.synth, cfg.fed.seed);
        for &mode in &modes {
            let dir = out_dir.join(run_dir_name(spec.exp_num, mode));
            let result = cohort.as_ref().map_err(clone_error).and_then(|cohort| {
                let outcome = match mode {
                    Mode::Centralized => run_centralized(cohort, spec.technique, &cfg.fed)?,
                    Mode::Federated => run_federation(cohort, spec.technique, &cfg.fed)?,
                };
                write_run(&outcome, &dir)?;
                outcome
                    .final_cohort()
                    .ok_or_else(|| Error::Protocol("run produced no reports".into()))
            });
            if let Err(e) = &result {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("error.txt"), format!("{e}\n"))?;
            }
            rows.push(SummaryRow {
                exp: spec.exp_num,
                mode,
                technique: spec.technique,
                regime: spec.regime,
                result,
            });
        }
    }
    let outcome = SuiteOutcome { rows };
    fs::write(out_dir.join("summary.csv"), summary_csv(&outcome))?;
    Ok(outcome)
}

fn clone_error(e: &Error) -> Error {
    Error::Protocol(format!("cohort generation failed: {e}"))
}

pub fn summary_csv(outcome: &SuiteOutcome) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in &outcome.rows {
        let (mse, rmse, mae) = match &r.result {
            Ok(m) => (sig9(m.mse), sig9(m.rmse), sig9(m.mae)),
            Err(_) => ("NaN".into(), "NaN".into(), "NaN".into()),
        };
        out.push_str(&format!(
            "{},{},{},{},{mse},{rmse},{mae}\n",
            r.exp,
            r.mode,
            r.technique,
            r.regime.tag()
        ));
    }
    out
}

pub fn rounds_csv(reports: &[RoundReport]) -> String {
    let mut out = format!("{ROUNDS_HEADER}\n");
    for r in reports {
        for c in &r.clients {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.round,
                c.client_id,
                sig9(c.metrics.mse),
                sig9(c.metrics.rmse),
                sig9(c.metrics.mae)
            ));
        }
        out.push_str(&format!(
            "{},cohort,{},{},{}\n",
            r.round,
            sig9(r.cohort.mse),
            sig9(r.cohort.rmse),
            sig9(r.cohort.mae)
        ));
    }
    out
}

/// One-step-ahead forecasts over a client's validation region, in data units.
pub fn forecast_csv(outcome: &RunOutcome, client_index: usize) -> Result<String> {
    let client = &outcome.clients[client_index];
    let preds = predict_dataset(&outcome.model, &client.validation)?;
    let values = &client.series.values;
    let mut out = String::from("timestamp,actual,predicted\n");
    for k in 0..client.validation.len() {
        let start = client.validation_target_index(k);
        let detrended: Vec<f64> = preds.row(k).iter().map(|&y| client.scaler.unscale(y)).collect();
        let data_units = reconstruct_forecast(&client.detrend_state, &values[..start], start, &detrended)?;
        out.push_str(&format!(
            "{},{},{}\n",
            iso8601(client.series.timestamp(start)),
            sig9(values[start]),
            sig9(data_units[0])
        ));
    }
    Ok(out)
}

/// Writes `rounds.csv`, `forecast_<client>.csv` per client, and `model.d3fl` into `dir`.
pub fn write_run(outcome: &RunOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let rounds = dir.join("rounds.csv");
    fs::write(&rounds, rounds_csv(&outcome.reports))?;
    written.push(rounds);
    for (i, c) in outcome.clients.iter().enumerate() {
        let path = dir.join(format!("forecast_{}.csv", c.client_id));
        fs::write(&path, forecast_csv(outcome, i)?)?;
        written.push(path);
    }
    let model = dir.join("model.d3fl");
    save_checkpoint(&outcome.model, &model)?;
    written.push(model);
    Ok(written)
}

pub const SEED_SUMMARY_HEADER: &str = "exp,mode,technique,regime,seeds,mse_mean,mse_std,rmse_mean,mae_mean";

/// Mean and sample standard deviation per (exp, mode) across per-seed outcomes.
/// Failed runs are left out of the statistics; `seeds` counts the runs that succeeded.
pub fn seed_summary_csv(outcomes: &[SuiteOutcome]) -> String {
    let mut out = format!("{SEED_SUMMARY_HEADER}\n");
    let Some(first) = outcomes.first() else {
        return out;
    };
    for r in &first.rows {
        let ok: Vec<Metrics> = outcomes
            .iter()
            .filter_map(|o| o.metrics(r.exp, r.mode).copied())
            .collect();
        let n = ok.len();
        let (mean, std, rmse, mae) = if n == 0 {
            ("NaN".to_string(), "NaN".to_string(), "NaN".to_string(), "NaN".to_string())
        } else {
            let m = Metrics::mean(ok.iter().copied()).expect("non-empty");
            let std = if n > 1 {
                let var = ok.iter().map(|x| (x.mse - m.mse).powi(2)).sum::<f64>() / (n - 1) as f64;
                sig9(var.sqrt())
            } else {
                "NaN".to_string()
            };
            (sig9(m.mse), std, sig9(m.rmse), sig9(m.mae))
        };
        out.push_str(&format!(
            "{},{},{},{},{n},{mean},{std},{rmse},{mae}\n",
            r.exp,
            r.mode,
            r.technique,
            r.regime.tag()
        ));
    }
    out
}
