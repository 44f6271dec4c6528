use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use d3fl::config::all_keys;

fn d3fl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_d3fl")).args(args).output().expect("spawn d3fl")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &[&str] = &[
    "--set", "synth.n_points=150",
    "--set", "model.hidden=4",
    "--set", "fed.rounds=2",
];

#[test]
fn generate_mixed_cohort() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    ok(&d3fl(&["generate", "--regime", "mixed", "--out", s(&out), "--set", "synth.n_points=100"]));
    let names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    assert_eq!(names.len(), 10);
    assert_eq!(names.iter().filter(|n| n.ends_with("_gev.csv")).count(), 5);
    assert_eq!(names.iter().filter(|n| n.ends_with("_lognorm.csv")).count(), 5);
    for k in 1..=5 {
        assert!(out.join(format!("client_{k}_gev.csv")).exists());
    }
    let csv = fs::read_to_string(out.join("client_7_lognorm.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);
    assert!(csv.starts_with("timestamp,value\n2023-05-11T09:00:00Z,"));
    assert!(out.join("config.resolved").exists());
}

#[test]
fn detrend_differencing_shortens_by_one_and_inverts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&d3fl(&["generate", "--out", s(&data), "--set", "synth.n_points=200", "--set", "synth.n_clients=1"]));
    let input = data.join("client_1_gev.csv");
    let det = dir.path().join("det");
    ok(&d3fl(&["detrend", "--input", s(&input), "--technique", "differencing", "--out", s(&det)]));
    let out = fs::read_to_string(det.join("client_1_gev.csv")).unwrap();
    assert_eq!(out.lines().count() - 1, 199);
    // First detrended value sits at the second timestamp.
    assert!(out.lines().nth(1).unwrap().starts_with("2023-05-11T10:00:00Z,"));
    let state = fs::read_to_string(det.join("client_1_gev.state")).unwrap();
    assert!(state.starts_with("technique = differencing\n"));

    let back = dir.path().join("back");
    ok(&d3fl(&["detrend", "--retrend", "--input", s(&det.join("client_1_gev.csv")), "--out", s(&back)]));
    assert_eq!(fs::read(back.join("client_1_gev.csv")).unwrap(), fs::read(&input).unwrap());
}

#[test]
fn usage_errors_exit_two_and_name_the_token() {
    let dir = tempfile::tempdir().unwrap();
    let out = d3fl(&["generate", "--out", s(dir.path()), "--set", "model.hiden=3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.hiden"));

    let out = d3fl(&["generate", "--out", s(dir.path()), "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--frobnicate"));

    let out = d3fl(&["train", "--out", s(dir.path()), "--technique", "wavelet"]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "seed = 1\nnot a pair\n").unwrap();
    let out = d3fl(&["generate", "--out", s(dir.path()), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn help_lists_every_key_for_every_subcommand() {
    for sub in ["generate", "ingest", "detrend", "train", "federate", "experiment", "report"] {
        let out = d3fl(&[sub, "--help"]);
        ok(&out);
        let text = String::from_utf8_lossy(&out.stdout);
        for key in all_keys() {
            assert!(text.contains(key), "`{sub} --help` lacks {key}");
        }
    }
}

#[test]
fn federate_writes_outputs_and_resolved_config_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let mut args = vec!["federate", "--seed", "5", "--technique", "linear_model", "--out", s(&a)];
    args.extend_from_slice(SMALL);
    ok(&d3fl(&args));
    for f in ["rounds.csv", "model.d3fl", "config.resolved", "forecast_1.csv", "forecast_10.csv"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let resolved = fs::read_to_string(a.join("config.resolved")).unwrap();
    assert!(resolved.contains("detrend.technique = linear_model\n"));
    assert!(resolved.contains("seed = 5\n"));

    // Replaying the echoed config alone reproduces the run byte for byte.
    let b = dir.path().join("b");
    ok(&d3fl(&["federate", "--config", s(&a.join("config.resolved")), "--out", s(&b)]));
    for f in ["rounds.csv", "model.d3fl", "forecast_3.csv", "config.resolved"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn train_reads_a_data_directory() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&d3fl(&["generate", "--regime", "lognorm", "--out", s(&data), "--set", "synth.n_points=150", "--set", "synth.n_clients=3"]));
    let run = dir.path().join("run");
    let mut args = vec!["train", "--data", s(&data), "--out", s(&run)];
    args.extend_from_slice(SMALL);
    ok(&d3fl(&args));
    let rounds = fs::read_to_string(run.join("rounds.csv")).unwrap();
    assert_eq!(rounds.lines().next().unwrap(), "round,client_id,mse,rmse,mae");
    // Two rounds of three clients plus a cohort row each.
    assert_eq!(rounds.lines().count(), 1 + 2 * 4);
    assert!(run.join("forecast_3.csv").exists());
    assert!(!run.join("forecast_4.csv").exists());
}

#[test]
fn ingest_resamples_quarter_hours() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("meter.csv");
    let mut text = String::from("when,kwh\n");
    for q in 0..(4 * 30) {
        text.push_str(&format!("{},{}\n", 1_700_000_000 / 3600 * 3600 + q * 900, 1 + q % 4));
    }
    fs::write(&raw, text).unwrap();
    let out = dir.path().join("o");
    ok(&d3fl(&[
        "ingest", "--input", s(&raw), "--client", "4", "--out", s(&out),
        "--set", "ingest.timestamp_col=when", "--set", "ingest.value_col=kwh",
    ]));
    let csv = fs::read_to_string(out.join("client_4_real.csv")).unwrap();
    assert_eq!(csv.lines().count(), 31);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",2.5")));
}

#[test]
fn experiment_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e");
    let mut args = vec!["experiment", "--exps", "1,4", "--seeds", "2", "--out", s(&out)];
    args.extend_from_slice(SMALL);
    ok(&d3fl(&args));
    for f in ["config.resolved", "summary_seeds.csv", "seed_0/summary.csv", "seed_1/exp_04_federated/rounds.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary = fs::read_to_string(out.join("seed_0/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);

    let rep = d3fl(&["report", "--input", s(&out.join("seed_0"))]);
    ok(&rep);
    let text = String::from_utf8_lossy(&rep.stdout);
    assert!(text.starts_with("exp"));
    assert!(text.contains("differencing"));
    assert_eq!(text.lines().count(), 5);
}
