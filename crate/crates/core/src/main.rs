use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use d3fl::config::{keys_help, parse_config_text, RunConfig};
use d3fl::detrend::{detrend, retrend, DetrendState};
use d3fl::eval::{experiment_matrix_with_window, run_suite, seed_summary_csv, write_run, Mode, SuiteOutcome};
use d3fl::federation::{run_centralized, run_federation};
use d3fl::ingest::ingest_file;
use d3fl::synth::{generate_cohort, read_cohort, write_cohort, DistLabel, TimeSeries};
use d3fl::{Error, Result};

/// Centralized and federated LSTM forecasting on detrended time series.
#[derive(Parser, Debug)]
#[command(name = "d3fl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed (key `seed`).
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Preset: desk or paper (key `scale`).
    #[arg(long, global = true)]
    scale: Option<String>,
    /// Worker threads for client training (key `fed.jobs`).
    #[arg(long, global = true)]
    jobs: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic client cohort as CSV files.
    Generate {
        #[arg(long)]
        regime: Option<String>,
        #[arg(long)]
        clients: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Load a real-world CSV, resample to hourly and fill gaps.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        client: Option<String>,
        #[arg(long)]
        dist: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Detrend a series CSV, writing the detrended CSV and a `.state` sidecar.
    Detrend {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        technique: Option<String>,
        #[arg(long)]
        window: Option<String>,
        /// Invert instead: restore the original series from a detrended CSV.
        #[arg(long)]
        retrend: bool,
        /// Sidecar for --retrend; defaults to the input path with a `.state` extension.
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train one model on the pooled cohort.
    Train(RunArgs),
    /// Train with federated averaging.
    Federate(RunArgs),
    /// Run the experiment matrix in both modes and write summary.csv.
    Experiment {
        /// Experiment numbers, e.g. `1-3,7` (key `eval.exps`).
        #[arg(long)]
        exps: Option<String>,
        /// Number of consecutive seeds (key `eval.seeds`).
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print a summary.csv or rounds.csv as a table.
    Report {
        /// Run or suite directory, or a CSV file.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Directory of client_<k>_<dist>.csv files; synthetic data is generated when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    technique: Option<String>,
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

fn main() -> ExitCode {
    let help = keys_help();
    let mut cmd = Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for name in names {
        let h = help.clone();
        cmd = cmd.mut_subcommand(name, move |s| s.after_help(h));
    }
    let cmd = cmd.after_help(help);
    let matches = cmd.get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

/// Collects overrides in precedence order: config file, then `--set`, then dedicated flags.
fn resolve(common: &Common, flags: &[(&str, &Option<String>)]) -> Result<RunConfig> {
    let mut pairs = Vec::new();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        pairs.extend(parse_config_text(&text)?);
    }
    for s in &common.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    let globals = [("seed", &common.seed), ("scale", &common.scale), ("fed.jobs", &common.jobs)];
    for (k, v) in globals.iter().chain(flags.iter()) {
        if let Some(v) = v {
            pairs.push((k.to_string(), v.clone()));
        }
    }
    RunConfig::resolve(&pairs)
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate { regime, clients, out, common } => {
            let cfg = resolve(&common, &[("synth.regime", &regime), ("synth.n_clients", &clients)])?;
            let cohort = generate_cohort(cfg.regime()?, cfg.n_clients()?, &cfg.synth()?, cfg.seed()?)?;
            let files = write_cohort(&cohort, &out)?;
            cfg.write_resolved(&out)?;
            println!("wrote {} series to {}", files.len(), out.display());
        }
        Command::Ingest { input, client, dist, out, common } => {
            let cfg = resolve(&common, &[("ingest.client", &client), ("ingest.dist", &dist)])?;
            let series = ingest_file(&input, &cfg.ingest()?, cfg.ingest_client()?, cfg.ingest_dist()?)?;
            fs::create_dir_all(&out)?;
            let path = out.join(series.file_name());
            series.write_csv(&path)?;
            cfg.write_resolved(&out)?;
            println!("wrote {} hourly points to {}", series.len(), path.display());
        }
        Command::Detrend { input, technique, window, retrend: invert, state, out, common } => {
            let cfg = resolve(&common, &[("detrend.technique", &technique), ("detrend.window", &window)])?;
            let (id, label) = identity_from_name(&input);
            let series = TimeSeries::read_csv(&input, id, label)?;
            let name = input
                .file_name()
                .ok_or_else(|| Error::Usage(format!("bad input path {}", input.display())))?;
            fs::create_dir_all(&out)?;
            let target = out.join(name);
            if invert {
                let state_path = state.unwrap_or_else(|| input.with_extension("state"));
                let st = DetrendState::from_sidecar(&fs::read_to_string(&state_path)?)?;
                let restored = retrend(&series.values, &st)?;
                let start = series.start_epoch - series.step * st.offset() as i64;
                TimeSeries::new(start, series.step, restored, id, label)?.write_csv(&target)?;
            } else {
                let (values, st) = detrend(&series.values, cfg.technique()?)?;
                let start = series.timestamp(st.offset());
                TimeSeries::new(start, series.step, values, id, label)?.write_csv(&target)?;
                fs::write(target.with_extension("state"), st.to_sidecar())?;
            }
            cfg.write_resolved(&out)?;
            println!("wrote {}", target.display());
        }
        Command::Train(args) => return train(args, Mode::Centralized),
        Command::Federate(args) => return train(args, Mode::Federated),
        Command::Experiment { exps, seeds, out, common } => {
            let cfg = resolve(&common, &[("eval.exps", &exps), ("eval.seeds", &seeds)])?;
            return experiment(&cfg, &out);
        }
        Command::Report { input, common } => {
            resolve(&common, &[])?;
            report(&input)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// `client_<k>_<dist>.csv` names carry the id and label; anything else is client 1, real.
fn identity_from_name(path: &Path) -> (u32, DistLabel) {
    path.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_prefix("client_"))
        .and_then(|s| s.split_once('_'))
        .and_then(|(id, label)| Some((id.parse().ok()?, label.parse().ok()?)))
        .unwrap_or((1, DistLabel::Real))
}

fn train(args: RunArgs, mode: Mode) -> Result<ExitCode> {
    let cfg = resolve(
        &args.common,
        &[
            ("synth.regime", &args.regime),
            ("detrend.technique", &args.technique),
            ("detrend.window", &args.window),
        ],
    )?;
    let cohort = match &args.data {
        Some(dir) => read_cohort(dir)?,
        None => generate_cohort(cfg.regime()?, cfg.n_clients()?, &cfg.synth()?, cfg.seed()?)?,
    };
    let fed = cfg.federation()?;
    let tech = cfg.technique()?;
    let outcome = match mode {
        Mode::Centralized => run_centralized(&cohort, tech, &fed)?,
        Mode::Federated => run_federation(&cohort, tech, &fed)?,
    };
    write_run(&outcome, &args.out)?;
    cfg.write_resolved(&args.out)?;
    if let Some(m) = outcome.final_cohort() {
        println!("{mode} {tech}: cohort mse {:.6} rmse {:.6} mae {:.6}", m.mse, m.rmse, m.mae);
    }
    Ok(ExitCode::SUCCESS)
}

fn experiment(cfg: &RunConfig, out: &Path) -> Result<ExitCode> {
    let wanted = cfg.exps()?;
    let specs: Vec<_> = experiment_matrix_with_window(cfg.ma_window()?)
        .into_iter()
        .filter(|s| wanted.contains(&s.exp_num))
        .collect();
    let base = cfg.suite()?;
    let seeds = cfg.seeds()?;
    fs::create_dir_all(out)?;
    cfg.write_resolved(out)?;

    let mut outcomes: Vec<SuiteOutcome> = Vec::with_capacity(seeds);
    for k in 0..seeds {
        let mut suite = base.clone();
        suite.fed.seed = base.fed.seed.wrapping_add(k as u64);
        let dir = if seeds == 1 { out.to_path_buf() } else { out.join(format!("seed_{}", suite.fed.seed)) };
        let outcome = run_suite(&specs, &suite, &dir)?;
        for row in &outcome.rows {
            match &row.result {
                Ok(m) => println!("seed {} exp {:>2} {:<11} mse {:.6}", suite.fed.seed, row.exp, row.mode.tag(), m.mse),
                Err(e) => eprintln!("seed {} exp {:>2} {:<11} failed: {e}", suite.fed.seed, row.exp, row.mode.tag()),
            }
        }
        outcomes.push(outcome);
    }
    if seeds > 1 {
        fs::write(out.join("summary_seeds.csv"), seed_summary_csv(&outcomes))?;
    }
    let failures: usize = outcomes.iter().map(SuiteOutcome::failures).sum();
    if failures > 0 {
        eprintln!("{failures} run(s) failed; see error.txt in their directories");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn report(input: &Path) -> Result<()> {
    let path = if input.is_dir() {
        ["summary_seeds.csv", "summary.csv", "rounds.csv"]
            .iter()
            .map(|f| input.join(f))
            .find(|p| p.exists())
            .ok_or_else(|| Error::Usage(format!("no summary.csv or rounds.csv in {}", input.display())))?
    } else {
        input.to_path_buf()
    };
    let mut reader = csv::Reader::from_path(&path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let rows: Vec<Vec<String>> = reader
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| rows.iter().map(|r| r.get(c).map_or(0, String::len)).chain([headers[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    println!("{}", line(&headers));
    for r in &rows {
        println!("{}", line(r));
    }
    Ok(())
}
