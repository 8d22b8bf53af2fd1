//! End-to-end runs of the `simjoin` binary.

use std::path::Path;
use std::process::{Command, Output};

fn simjoin(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simjoin"))
        .arg("--output-dir")
        .arg(out)
        .args(["--log-level", "warn"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = simjoin(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn error_line(o: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&o.stderr);
    let last = stderr.lines().last().expect("an error line");
    serde_json::from_str(last).unwrap_or_else(|e| panic!("not JSON ({e}): {last}"))
}

#[test]
fn synth_then_groundtruth_writes_dataset_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["synth", "--n", "2000", "--d", "16", "--k", "4", "--seed", "7"]);
    ok(out, &["groundtruth", "--eps-grid", "0.4:0.9:100"]);
    for f in ["dataset.fvecs", "dataset.json", "split.json", "table.bin", "table.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let table = simjoin::formats::table::load_table(&out.join("table.bin")).unwrap();
    assert_eq!((table.len(), table.m()), (1600, 100));
}

#[test]
fn full_pipeline_and_deterministic_joins() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["synth", "--n", "1200", "--d", "16", "--k", "3", "--background", "0.5", "--seed", "3"]);
    ok(out, &["groundtruth", "--eps-grid", "0.1:0.6:40", "--point-fraction", "0.5"]);
    ok(out, &["prepare", "--s", "6"]);
    ok(out, &["train", "--epochs", "3", "--hidden", "32,16", "--batch-size", "128"]);
    ok(out, &["build-filter", "--engine", "xjoin", "--eps", "0.2", "--tau", "0"]);
    ok(out, &["build-filter", "--engine", "lsh-filtered", "--eps", "0.2"]);
    ok(out, &["build-filter", "--engine", "naive-lsbf", "--k", "6", "--l", "4", "--w", "1.0"]);
    for engine in ["naive", "xjoin", "xjoin-oracle", "naive-lsbf", "lsh", "lsh-filtered"] {
        ok(out, &["join", "--engine", engine, "--eps", "0.2", "--k", "6", "--l", "4", "--w", "1.0", "--n-p", "4"]);
        let csv = out.join(format!("join_{engine}_eps0.2.csv"));
        assert!(csv.is_file(), "{engine}");
        let res = simjoin::formats::results::load_join(&csv).unwrap();
        assert!(res.len() as u64 <= res.nbrs());
    }
    ok(out, &["join", "--engine", "naive", "--eps", "0.45"]);
    let a = std::fs::read(out.join("join_naive_eps0.45.csv")).unwrap();
    ok(out, &["join", "--engine", "naive", "--eps", "0.45"]);
    let b = std::fs::read(out.join("join_naive_eps0.45.csv")).unwrap();
    assert_eq!(a, b);
    assert!(a.starts_with(b"r_index,s_index\n"));
}

#[test]
fn bench_with_missing_model_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let missing = out.join("nowhere").join("model.bin");
    let config = serde_json::json!({
        "dataset": {"synthetic": {"n": 400, "d": 8, "k": 2}},
        "eps": [0.3],
        "training": {"model": missing, "point_fraction": 0.5},
        "engines": [{"engine": "naive"}, {"engine": "xjoin"}],
    });
    let path = out.join("exp.json");
    std::fs::write(&path, config.to_string()).unwrap();
    let o = simjoin(out, &["bench", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = error_line(&o);
    assert!(err["error"]["message"].as_str().unwrap().contains(missing.to_str().unwrap()), "{err}");
    assert_ne!(err["error"]["code"], 0);
}

#[test]
fn bench_sweep_and_generalize_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let config = serde_json::json!({
        "dataset": {"synthetic": {"n": 800, "d": 16, "k": 3, "background": 0.5}},
        "eps": [0.2],
        "grid": {"c_min": 0.1, "c_max": 0.6, "m": 30},
        "training": {"point_fraction": 0.5, "train": {"epochs": 2, "hidden": [16]}},
        "engines": [{"engine": "naive"}, {"engine": "xjoin", "tau": 0}, {"engine": "xjoin-oracle"}],
        "sweep": {"lsh_n_p": [2]},
        "generalization": {"second_sample_seed": 9},
    });
    let path = out.join("exp.json");
    std::fs::write(&path, config.to_string()).unwrap();
    let cfg = path.to_str().unwrap();
    ok(out, &["bench", "--config", cfg]);
    ok(out, &["sweep", "--config", cfg]);
    ok(out, &["generalize", "--config", cfg]);
    let report = simjoin::bench::load_report(&out.join("report.json")).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.bookkeeping_holds());
    let end2end = std::fs::read_to_string(out.join("end2end.csv")).unwrap();
    assert_eq!(end2end.lines().count(), 4);
    assert!(out.join("confusion.csv").is_file());
    let tradeoff = simjoin::bench::read_tradeoff(&out.join("tradeoff.csv")).unwrap();
    assert_eq!(tradeoff.len(), 1);
    let gen = std::fs::read_to_string(out.join("generalization.csv")).unwrap();
    assert_eq!(gen.lines().count(), 3);
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = simjoin(dir.path(), &["synth", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = simjoin(dir.path(), &["bench"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_line(&o)["error"]["kind"], "usage");
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = simjoin(dir.path(), &["groundtruth"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["error"]["kind"], "io");
}

#[test]
fn help_shows_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = simjoin(dir.path(), &["prepare", "--help"]);
    assert!(o.status.success());
    let help = String::from_utf8_lossy(&o.stdout);
    assert!(help.contains("[default: 6]") && help.contains("--strategy"), "{help}");
    let o = simjoin(dir.path(), &["join", "--help"]);
    let help = String::from_utf8_lossy(&o.stdout);
    for flag in ["--engine", "--eps", "--n-p", "--seed", "--threads", "--output-dir", "--log-level", "--config"] {
        assert!(help.contains(flag), "{flag} missing from join --help");
    }
}

#[test]
fn ingest_converts_and_normalizes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let input = out.join("raw.csv");
    std::fs::write(&input, "3,4\n0,2\n1,1\n").unwrap();
    let o = simjoin(out, &["ingest", "--input", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "non-unit rows are rejected for cosine");
    ok(out, &["ingest", "--input", input.to_str().unwrap(), "--normalize"]);
    let ds = simjoin::formats::vectors::read_vectors(&out.join("dataset.fvecs"), None, simjoin::core::Metric::Cosine).unwrap();
    assert_eq!(ds.len(), 3);
    assert!((ds.get(0)[0] - 0.6).abs() < 1e-6);
}
