//! Run configuration: a flat set of namespaced keys.
//!
//! File grammar, one entry per line:
//!
//! ```text
//! # comment
//! key = value
//! ```
//!
//! Blank lines and `#` comments are ignored; whitespace around keys and values
//! is trimmed; values are integers, decimals, booleans, or bare strings. A key
//! may appear once per file. Unknown keys are rejected.
//!
//! Resolution order: built-in defaults, then the `scale` preset, then the
//! config file, then command-line overrides. The resolved set is echoed as
//! `config.resolved` in the same grammar, sorted by key, and loading that file
//! reproduces the run.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::detrend::DetrendTechnique;
use crate::error::{Error, Result};
use crate::eval::{Mode, SuiteConfig};
use crate::federation::{FederationConfig, ModelConfig};
use crate::ingest::IngestConfig;
use crate::numfmt::exact;
use crate::synth::{DistLabel, Regime, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Real,
    Str,
    Choice(&'static [&'static str]),
    /// Comma-separated experiment numbers and ranges, e.g. `1-3,7`.
    ExpList,
    ModeList,
}

struct KeyDef {
    key: &'static str,
    kind: Kind,
    default: &'static str,
    help: &'static str,
}

const TECHNIQUES: &[&str] = &[
    "none",
    "differencing",
    "moving_average",
    "subtract_mean",
    "linear_model",
    "quadratic_model",
];

const KEYS: &[KeyDef] = &[
    KeyDef { key: "seed", kind: Kind::Int, default: "0", help: "master seed for data, init and shuffling" },
    KeyDef { key: "scale", kind: Kind::Choice(&["desk", "paper"]), default: "paper", help: "preset: desk = 2000 points, 30 rounds, H=32; paper = 10000, 100, 128" },
    KeyDef { key: "synth.n_points", kind: Kind::Int, default: "10000", help: "points per synthetic client series" },
    KeyDef { key: "synth.n_clients", kind: Kind::Int, default: "10", help: "clients per cohort" },
    KeyDef { key: "synth.regime", kind: Kind::Choice(&["gev", "lognorm", "mixed"]), default: "gev", help: "client distribution regime" },
    KeyDef { key: "synth.base_level", kind: Kind::Real, default: "8", help: "location curve mean level" },
    KeyDef { key: "synth.sine_amplitude", kind: Kind::Real, default: "3", help: "location sine amplitude" },
    KeyDef { key: "synth.sine_period", kind: Kind::Real, default: "168", help: "location sine period in hours" },
    KeyDef { key: "synth.client_phase_gain", kind: Kind::Real, default: "1", help: "sine phase per client id, radians" },
    KeyDef { key: "synth.offset_value", kind: Kind::Real, default: "4", help: "level shift added to the tail of each series" },
    KeyDef { key: "synth.offset_start_frac", kind: Kind::Real, default: "0.6", help: "fraction of the series where the shift starts" },
    KeyDef { key: "synth.clamp_lo", kind: Kind::Real, default: "2", help: "lower clamp of generated values" },
    KeyDef { key: "synth.clamp_hi", kind: Kind::Real, default: "20", help: "upper clamp of generated values" },
    KeyDef { key: "synth.gev_sigma", kind: Kind::Real, default: "1", help: "GEV noise scale" },
    KeyDef { key: "synth.gev_xi", kind: Kind::Real, default: "0.1", help: "GEV noise shape" },
    KeyDef { key: "synth.lognorm_mu", kind: Kind::Real, default: "0", help: "log-normal noise log-mean" },
    KeyDef { key: "synth.lognorm_sigma", kind: Kind::Real, default: "0.25", help: "log-normal noise log-std" },
    KeyDef { key: "detrend.technique", kind: Kind::Choice(TECHNIQUES), default: "none", help: "detrending technique" },
    KeyDef { key: "detrend.window", kind: Kind::Int, default: "24", help: "moving average window length" },
    KeyDef { key: "model.hidden", kind: Kind::Int, default: "128", help: "LSTM hidden units" },
    KeyDef { key: "model.lookback", kind: Kind::Int, default: "24", help: "input window length" },
    KeyDef { key: "model.horizon", kind: Kind::Int, default: "2", help: "forecast steps" },
    KeyDef { key: "model.batch_size", kind: Kind::Int, default: "32", help: "mini-batch size" },
    KeyDef { key: "model.lr", kind: Kind::Real, default: "0.001", help: "Adam learning rate" },
    KeyDef { key: "model.beta1", kind: Kind::Real, default: "0.9", help: "Adam first-moment decay" },
    KeyDef { key: "model.beta2", kind: Kind::Real, default: "0.999", help: "Adam second-moment decay" },
    KeyDef { key: "model.eps", kind: Kind::Real, default: "1e-8", help: "Adam epsilon" },
    KeyDef { key: "fed.rounds", kind: Kind::Int, default: "100", help: "global rounds (centralized: epochs)" },
    KeyDef { key: "fed.local_epochs", kind: Kind::Int, default: "1", help: "local epochs per round" },
    KeyDef { key: "fed.train_frac", kind: Kind::Real, default: "0.9", help: "chronological training fraction of windows" },
    KeyDef { key: "fed.jobs", kind: Kind::Int, default: "1", help: "worker threads for client training" },
    KeyDef { key: "eval.exps", kind: Kind::ExpList, default: "1-18", help: "experiments to run, e.g. 1-3,7" },
    KeyDef { key: "eval.modes", kind: Kind::ModeList, default: "centralized,federated", help: "training modes to run" },
    KeyDef { key: "eval.seeds", kind: Kind::Int, default: "1", help: "number of consecutive seeds to run" },
    KeyDef { key: "ingest.timestamp_col", kind: Kind::Str, default: "timestamp", help: "timestamp column name" },
    KeyDef { key: "ingest.value_col", kind: Kind::Str, default: "value", help: "value column name" },
    KeyDef { key: "ingest.source_step", kind: Kind::Int, default: "900", help: "seconds between source readings" },
    KeyDef { key: "ingest.target_step", kind: Kind::Int, default: "3600", help: "seconds per output step" },
    KeyDef { key: "ingest.max_missing_frac", kind: Kind::Real, default: "0.05", help: "largest tolerated gap fraction" },
    KeyDef { key: "ingest.client", kind: Kind::Int, default: "1", help: "client id of the ingested series" },
    KeyDef { key: "ingest.dist", kind: Kind::Choice(&["gev", "lognorm", "real"]), default: "real", help: "distribution label of the ingested series" },
];

fn preset(scale: &str) -> &'static [(&'static str, &'static str)] {
    match scale {
        "desk" => &[("synth.n_points", "2000"), ("fed.rounds", "30"), ("model.hidden", "32")],
        _ => &[],
    }
}

fn def(key: &str) -> Result<&'static KeyDef> {
    KEYS.iter()
        .find(|d| d.key == key)
        .ok_or_else(|| Error::Usage(format!("unknown config key `{key}`")))
}

/// Checks `raw` against the key's kind and returns its canonical text.
fn normalize(d: &KeyDef, raw: &str) -> Result<String> {
    let raw = raw.trim();
    let bad = |what: &str| Error::Config(format!("`{}` expects {what}, got `{raw}`", d.key));
    match d.kind {
        Kind::Int => raw.parse::<u64>().map(|v| v.to_string()).map_err(|_| bad("a non-negative integer")),
        Kind::Real => raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(exact)
            .ok_or_else(|| bad("a finite decimal")),
        Kind::Str => {
            if raw.is_empty() {
                Err(bad("a non-empty string"))
            } else {
                Ok(raw.to_string())
            }
        }
        Kind::Choice(options) => {
            if options.contains(&raw) {
                Ok(raw.to_string())
            } else {
                Err(bad(&format!("one of {}", options.join("|"))))
            }
        }
        Kind::ExpList => {
            let exps = parse_exp_list(raw).map_err(|_| bad("experiment numbers 1-18 such as `1-3,7`"))?;
            Ok(exps.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(","))
        }
        Kind::ModeList => {
            let mut modes = raw
                .split(',')
                .map(|m| m.trim().parse::<Mode>())
                .collect::<Result<Vec<_>>>()
                .map_err(|_| bad("centralized and/or federated"))?;
            modes.sort();
            modes.dedup();
            Ok(modes.iter().map(|m| m.tag()).collect::<Vec<_>>().join(","))
        }
    }
}

fn parse_exp_list(raw: &str) -> std::result::Result<Vec<usize>, ()> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (a.trim().parse::<usize>().map_err(|_| ())?, b.trim().parse::<usize>().map_err(|_| ())?),
            None => {
                let v = part.parse::<usize>().map_err(|_| ())?;
                (v, v)
            }
        };
        if lo < 1 || hi > 18 || lo > hi {
            return Err(());
        }
        out.extend(lo..=hi);
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(());
    }
    Ok(out)
}

/// Parses config text into raw `key → value` pairs, rejecting unknown or repeated keys.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("config line {}: expected `key = value`, got `{line}`", i + 1)))?;
        let k = k.trim();
        def(k)?;
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(Error::Usage(format!("config line {}: key `{k}` repeated", i + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::resolve(&[]).expect("built-in defaults are valid")
    }
}

impl RunConfig {
    /// Applies `overrides` (in order; later wins) over defaults and the scale preset.
    pub fn resolve(overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut normalized = Vec::with_capacity(overrides.len());
        for (k, v) in overrides {
            let d = def(k)?;
            normalized.push((d.key, normalize(d, v)?));
        }
        let scale = normalized
            .iter()
            .rev()
            .find(|(k, _)| *k == "scale")
            .map(|(_, v)| v.clone())
            .unwrap_or_else(|| def("scale").expect("scale key").default.to_string());

        let mut values: BTreeMap<String, String> = KEYS
            .iter()
            .map(|d| (d.key.to_string(), normalize(d, d.default).expect("valid default")))
            .collect();
        for (k, v) in preset(&scale) {
            values.insert(k.to_string(), v.to_string());
        }
        for (k, v) in normalized {
            values.insert(k.to_string(), v);
        }
        let cfg = RunConfig { values };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, extra: &[(String, String)]) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut all = parse_config_text(&text)?;
        all.extend_from_slice(extra);
        RunConfig::resolve(&all)
    }

    /// Builds every typed section once so bad combinations fail before any work starts.
    fn validate(&self) -> Result<()> {
        self.synth()?.validate()?;
        self.federation()?.validate()?;
        self.ingest()?.validate()?;
        self.technique()?;
        if self.usize("synth.n_clients")? == 0 {
            return Err(Error::Config("synth.n_clients must be at least 1".into()));
        }
        if self.usize("eval.seeds")? == 0 {
            return Err(Error::Config("eval.seeds must be at least 1".into()));
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Usage(format!("unknown config key `{key}`")))
    }

    fn usize(&self, key: &str) -> Result<usize> {
        self.get(key)?.parse().map_err(|_| Error::Config(format!("`{key}` is not an integer")))
    }

    fn u64(&self, key: &str) -> Result<u64> {
        self.get(key)?.parse().map_err(|_| Error::Config(format!("`{key}` is not an integer")))
    }

    fn i64(&self, key: &str) -> Result<i64> {
        self.get(key)?.parse().map_err(|_| Error::Config(format!("`{key}` is out of range")))
    }

    fn f64(&self, key: &str) -> Result<f64> {
        self.get(key)?.parse().map_err(|_| Error::Config(format!("`{key}` is not a decimal")))
    }

    pub fn seed(&self) -> Result<u64> {
        self.u64("seed")
    }

    pub fn synth(&self) -> Result<SynthConfig> {
        Ok(SynthConfig {
            n_points: self.usize("synth.n_points")?,
            base_level: self.f64("synth.base_level")?,
            sine_amplitude: self.f64("synth.sine_amplitude")?,
            sine_period: self.f64("synth.sine_period")?,
            client_phase_gain: self.f64("synth.client_phase_gain")?,
            offset_value: self.f64("synth.offset_value")?,
            offset_start_frac: self.f64("synth.offset_start_frac")?,
            clamp_lo: self.f64("synth.clamp_lo")?,
            clamp_hi: self.f64("synth.clamp_hi")?,
            gev_sigma: self.f64("synth.gev_sigma")?,
            gev_xi: self.f64("synth.gev_xi")?,
            lognorm_mu: self.f64("synth.lognorm_mu")?,
            lognorm_sigma: self.f64("synth.lognorm_sigma")?,
        })
    }

    pub fn n_clients(&self) -> Result<usize> {
        self.usize("synth.n_clients")
    }

    pub fn regime(&self) -> Result<Regime> {
        self.get("synth.regime")?.parse()
    }

    pub fn technique(&self) -> Result<DetrendTechnique> {
        DetrendTechnique::from_tag(self.get("detrend.technique")?, self.usize("detrend.window")?)
    }

    pub fn ma_window(&self) -> Result<usize> {
        self.usize("detrend.window")
    }

    pub fn federation(&self) -> Result<FederationConfig> {
        Ok(FederationConfig {
            rounds: self.usize("fed.rounds")?,
            local_epochs: self.usize("fed.local_epochs")?,
            train_frac: self.f64("fed.train_frac")?,
            model: ModelConfig {
                hidden: self.usize("model.hidden")?,
                lookback: self.usize("model.lookback")?,
                horizon: self.usize("model.horizon")?,
                batch_size: self.usize("model.batch_size")?,
                lr: self.f64("model.lr")?,
                beta1: self.f64("model.beta1")?,
                beta2: self.f64("model.beta2")?,
                eps: self.f64("model.eps")?,
            },
            seed: self.seed()?,
            jobs: self.usize("fed.jobs")?,
        })
    }

    pub fn suite(&self) -> Result<SuiteConfig> {
        Ok(SuiteConfig {
            synth: self.synth()?,
            n_clients: self.n_clients()?,
            fed: self.federation()?,
            modes: self.modes()?,
        })
    }

    pub fn exps(&self) -> Result<Vec<usize>> {
        parse_exp_list(self.get("eval.exps")?).map_err(|_| Error::Config("bad eval.exps".into()))
    }

    pub fn modes(&self) -> Result<Vec<Mode>> {
        self.get("eval.modes")?.split(',').map(|m| m.parse()).collect()
    }

    pub fn seeds(&self) -> Result<usize> {
        self.usize("eval.seeds")
    }

    pub fn ingest(&self) -> Result<IngestConfig> {
        Ok(IngestConfig {
            timestamp_col: self.get("ingest.timestamp_col")?.to_string(),
            value_col: self.get("ingest.value_col")?.to_string(),
            source_step: self.i64("ingest.source_step")?,
            target_step: self.i64("ingest.target_step")?,
            max_missing_frac: self.f64("ingest.max_missing_frac")?,
        })
    }

    pub fn ingest_client(&self) -> Result<u32> {
        self.get("ingest.client")?
            .parse()
            .map_err(|_| Error::Config("ingest.client is out of range".into()))
    }

    pub fn ingest_dist(&self) -> Result<DistLabel> {
        self.get("ingest.dist")?.parse()
    }

    /// `key = value` lines, sorted by key.
    pub fn to_resolved_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.resolved"), self.to_resolved_text())?;
        Ok(())
    }
}

/// Help text listing every accepted key with its default.
pub fn keys_help() -> String {
    let mut out = String::from("Config keys (`--config <file>` or `--set key=value`):\n");
    for d in KEYS {
        out.push_str(&format!("  {:<24} {} [default: {}]\n", d.key, d.help, d.default));
    }
    out
}

pub fn all_keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().map(|d| d.key)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_are_paper_scale() {
        let c = RunConfig::default();
        assert_eq!(c.synth().unwrap(), SynthConfig::default());
        let f = c.federation().unwrap();
        assert_eq!((f.rounds, f.local_epochs, f.model.hidden), (100, 1, 128));
        assert_eq!(c.exps().unwrap(), (1..=18).collect::<Vec<_>>());
    }

    #[test]
    fn desk_preset_and_override_order() {
        let c = RunConfig::resolve(&kv(&[("scale", "desk")])).unwrap();
        assert_eq!(c.synth().unwrap().n_points, 2000);
        assert_eq!(c.federation().unwrap().rounds, 30);
        assert_eq!(c.federation().unwrap().model.hidden, 32);
        let c = RunConfig::resolve(&kv(&[("fed.rounds", "5"), ("scale", "desk")])).unwrap();
        assert_eq!(c.federation().unwrap().rounds, 5);
        let c = RunConfig::resolve(&kv(&[("seed", "1"), ("seed", "7")])).unwrap();
        assert_eq!(c.seed().unwrap(), 7);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let err = RunConfig::resolve(&kv(&[("model.hiden", "3")])).unwrap_err();
        assert!(matches!(err, Error::Usage(ref m) if m.contains("model.hiden")));
        assert!(RunConfig::resolve(&kv(&[("model.lr", "fast")])).is_err());
        assert!(RunConfig::resolve(&kv(&[("synth.regime", "uniform")])).is_err());
        assert!(RunConfig::resolve(&kv(&[("eval.exps", "0-3")])).is_err());
        assert!(RunConfig::resolve(&kv(&[("synth.clamp_lo", "30")])).is_err());
        assert!(parse_config_text("seed 3").is_err());
        assert!(parse_config_text("seed = 1\nseed = 2").is_err());
    }

    #[test]
    fn file_grammar() {
        let text = "# run\n\n  seed = 7  \nscale=desk\nmodel.lr = 0.0010\neval.exps = 3, 1-2\n";
        let pairs = parse_config_text(text).unwrap();
        let c = RunConfig::resolve(&pairs).unwrap();
        assert_eq!(c.get("model.lr").unwrap(), "0.001");
        assert_eq!(c.get("eval.exps").unwrap(), "1,2,3");
        assert_eq!(c.seed().unwrap(), 7);
    }

    #[test]
    fn resolved_text_reproduces_config() {
        let c = RunConfig::resolve(&kv(&[("scale", "desk"), ("seed", "11"), ("detrend.technique", "moving_average")])).unwrap();
        let text = c.to_resolved_text();
        let back = RunConfig::resolve(&parse_config_text(&text).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_resolved_text(), text);
        assert_eq!(text.lines().count(), KEYS.len());
    }

    #[test]
    fn help_lists_every_key() {
        let help = keys_help();
        for k in all_keys() {
            assert!(help.contains(k), "{k}");
        }
    }
}
