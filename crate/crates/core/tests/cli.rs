use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn malady(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_malady")).args(args).output().unwrap()
}

fn small_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{
            "dataset": {{"kind": "blobs", "points_per_cluster": 40, "seed": 2}},
            "kernel": {{"kind": "gaussian", "k_neighbors": 8}},
            "bounds": {{"mode": "exact"}},
            "schedule": {{"epsilon0": 0.001, "epsilon_min": 1e-6, "alpha": 4}},
            "steps": 30,
            "init": "propagated",
            "budget": {{"initial_per_class": 2, "total": 10}},
            "acquisition": "malady",
            "seeds": [0, 1],
            {extra}
            "output": "results"
        }}"#
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn blobs_then_graph() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("blobs.csv");
    let out = malady(&["blobs", "--seed", "3", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 2400);
    assert!(text.lines().all(|l| l.split(',').count() == 3));

    let edges = dir.path().join("edges.csv");
    let out = malady(&[
        "graph", "--input", csv.to_str().unwrap(), "--k", "10", "--kernel", "gaussian",
        "--label-column", "last", "--out", edges.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = fs::read_to_string(&edges).unwrap();
    let first: Vec<&str> = lines.lines().next().unwrap().split(',').collect();
    assert_eq!(first.len(), 3);
    let w: f64 = first[2].parse().unwrap();
    assert!(w > 0.0 && w <= 1.0);
}

#[test]
fn run_is_reproducible_and_writes_the_layout() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "");
    let collect = || {
        let out = malady(&["run", "--config", config.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let results = dir.path().join("results");
        let hash_dir = fs::read_dir(&results).unwrap().next().unwrap().unwrap().path();
        let mut names: Vec<String> = fs::read_dir(&hash_dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        let csvs: Vec<Vec<u8>> = names
            .iter()
            .filter(|n| n.ends_with(".csv"))
            .map(|n| fs::read(hash_dir.join(n)).unwrap())
            .collect();
        (names, csvs)
    };
    let (names, first) = collect();
    assert_eq!(
        names,
        ["aggregate.json", "config.json", "curve.csv", "seed-0.csv", "seed-0.json", "seed-1.csv", "seed-1.json"]
    );
    let (_, second) = collect();
    assert_eq!(first, second);
    let curve = String::from_utf8(first[0].clone()).unwrap();
    assert!(curve.starts_with("acquisition,seed,num_labeled,accuracy\n"));
    assert_eq!(curve.lines().count(), 1 + 2 * 7);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), r#""colour": "blue","#);
    let out = malady(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
    let out = malady(&["graph", "--input", "x.csv", "--k", "3", "--label-column", "second", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn io_errors_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(malady(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(4));
    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "0,0,1\n1,0\n").unwrap();
    let out = malady(&["graph", "--input", ragged.to_str().unwrap(), "--k", "1", "--out", "e.csv"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ragged.csv:2:"));
}

#[test]
fn verify_passes() {
    let out = malady(&["verify", "--seed", "7"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 6);
}
