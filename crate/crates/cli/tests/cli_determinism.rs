//! Every command repeated with the same seed must produce byte-identical
//! output files.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_censalign")
}

fn run(args: &[&str]) {
    let status = Command::new(bin())
        .args(args)
        .status()
        .expect("spawn censalign");
    assert!(status.success(), "command failed: {args:?}");
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn pass(dir: &Path) -> Vec<(String, Vec<u8>)> {
    std::fs::create_dir_all(dir).unwrap();
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();

    run(&[
        "generate", "--family", "quad6", "--n", "24", "--m", "4", "--noise-var", "0.0",
        "--tmax", "10", "--seed", "7", "--missing-rate", "0.1", "--out", &p("data.jsonl"),
    ]);
    let config = r#"{"latent_dim":2,"rnn_hidden":4,"mlp_hidden":4,"learning_rate":0.01,
        "epochs":3,"kl_weight":0.1,"reg_type":"none","reg_strength":0.0,
        "grid":{"delta_max":10.0,"step":0.5},"k_clusters":2,"seed":3}"#;
    std::fs::write(dir.join("cfg.json"), config).unwrap();
    run(&[
        "train", "--data", &p("data.jsonl"), "--config", &p("cfg.json"),
        "--out", &p("model.json"),
    ]);
    run(&[
        "infer", "--model", &p("model.json"), "--data", &p("data.jsonl"),
        "--k", "2", "--out", &p("fit.json"),
    ]);
    run(&[
        "evaluate", "--fit", &p("fit.json"), "--data", &p("data.jsonl"),
        "--out", &p("scores.json"),
    ]);
    run(&[
        "baseline", "kmeans-loss", "--data", &p("data.jsonl"), "--k", "2",
        "--seed", "5", "--out", &p("base.json"),
    ]);
    // Identification needs every series fully observed; use a clean copy.
    run(&[
        "generate", "--family", "quad6", "--n", "24", "--m", "4", "--noise-var", "0.0",
        "--tmax", "10", "--seed", "7", "--out", &p("clean.jsonl"),
    ]);
    run(&[
        "identify", "--data", &p("clean.jsonl"), "--link", "identity", "--degree", "2",
        "--k", "2", "--out", &p("ident.json"),
    ]);
    let exp = r#"{
        "generator": {"family": {"kind": "quadratic", "arg": 6}, "n_patients": 24,
            "n_visits": 4, "noise_var": 0.0625, "t_max": 10.0, "subtype_prob": 0.5, "seed": 2},
        "missing_rate": 0.0,
        "methods": ["kmeans-loss", "identify"],
        "n_trials": 2,
        "split": [0.6, 0.2, 0.2],
        "hyper": {"latent_dim": [2], "rnn_hidden": [4], "mlp_hidden": [4],
            "learning_rate": [0.01], "epochs": [2], "kl_weight": [0.1],
            "reg_type": ["none"], "reg_strength": [0.0]},
        "k_clusters": 2,
        "grid": {"delta_max": 10.0, "step": 0.5},
        "seed": 11
    }"#;
    std::fs::write(dir.join("exp.json"), exp).unwrap();
    run(&[
        "experiment", "--config", &p("exp.json"), "--out-dir", &p("results"),
    ]);

    let mut files: Vec<PathBuf> = vec![
        dir.join("data.jsonl"),
        dir.join("clean.jsonl"),
        dir.join("model.json"),
        dir.join("fit.json"),
        dir.join("scores.json"),
        dir.join("base.json"),
        dir.join("ident.json"),
        dir.join("results/report.csv"),
        dir.join("results/report.txt"),
    ];
    for trial in 0..2 {
        files.push(dir.join(format!("results/folds/trial-{trial}.json")));
        for method in ["kmeans-loss", "identify"] {
            files.push(dir.join(format!("results/raw/trial-{trial}-{method}.json")));
        }
    }
    files
        .into_iter()
        .map(|f| {
            let rel = f.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            let bytes = read(&f);
            (rel, bytes)
        })
        .collect()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let root = tempfile::tempdir().unwrap();
    let a = pass(&root.path().join("a"));
    let b = pass(&root.path().join("b"));
    assert_eq!(a.len(), b.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(&b) {
        assert_eq!(name_a, name_b);
        assert_eq!(
            bytes_a, bytes_b,
            "output file {name_a} differs between identical runs"
        );
    }
}
