use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use limnet::data::synth::{gen_synthetic, SyntheticConfig};
use limnet::heads::{Dense, Head, Task};
use limnet::math::{Matrix, ScorerParams};
use limnet::model::Model;
use limnet::{EncoderParams, Variant};
use serde_json::Value;
use tempfile::TempDir;

fn limnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_limnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Small default-shaped corpus in `dir/data`.
fn small_corpus(dir: &Path, extra: &[&str]) -> PathBuf {
    let data = dir.join("data");
    let mut args = vec!["synth", "--out", s(&data), "--num-docs", "60"];
    args.extend_from_slice(extra);
    let out = limnet(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    data
}

const FAST: [&str; 6] = ["--scorer-hidden", "4", "--lr", "1e-2", "--dropout", "0"];

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--data", s(data), "--out", s(out)];
    args.extend_from_slice(&FAST);
    args.extend_from_slice(extra);
    limnet(&args)
}

#[test]
fn synth_writes_splits_labels_and_manifest() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("a");
    let out = limnet(&["synth", "--out", s(&data)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["train.limd", "val.limd", "test.limd", "labels.jsonl", "manifest.json"] {
        assert!(data.join(f).is_file(), "{f}");
    }
    let m = read_json(&data.join("manifest.json"));
    assert_eq!(m["train"]["docs"], 200);
    assert_eq!(m["val"]["docs"], 50);
    assert_eq!(m["test"]["docs"], 50);
    assert_eq!(m["num_classes"], 2);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("train: 200 documents"));

    let again = dir.path().join("b");
    assert_eq!(code(&limnet(&["synth", "--out", s(&again)])), 0);
    for f in ["train.limd", "val.limd", "test.limd", "labels.jsonl", "manifest.json"] {
        assert_eq!(
            std::fs::read(data.join(f)).unwrap(),
            std::fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn synth_rejects_bad_fractions() {
    let dir = TempDir::new().unwrap();
    let out = limnet(&["synth", "--out", s(dir.path()), "--fractions", "0.5,0.3,0.3"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("`split`"), "{}", stderr(&out));

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"split": {"fractions": [1.0, 0.0, 0.0]}}"#).unwrap();
    let out = limnet(&["synth", "--out", s(dir.path()), "--config", s(&cfg)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("`split`"));
}

#[test]
fn config_file_unknown_keys_and_precedence() {
    let dir = TempDir::new().unwrap();
    let data = small_corpus(dir.path(), &[]);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"train": {"epochs": 2, "learning_rate": 0.5}, "bogus": 1}"#).unwrap();
    let log = dir.path().join("log.json");
    let out = train(&data, &log, &["--config", s(&cfg)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bogus"));

    std::fs::write(&cfg, r#"{"train": {"epochs": 2, "seed": 9}}"#).unwrap();
    let out = limnet(&[
        "train", "--data", s(&data), "--out", s(&log), "--config", s(&cfg), "--epochs", "3",
        "--scorer-hidden", "4",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = read_json(&log);
    assert_eq!(v["epochs"].as_array().unwrap().len(), 3);
    assert_eq!(v["config"]["seed"], 9);
    assert_eq!(v["schema_version"], 1);
}

#[test]
fn train_log_schema_and_determinism() {
    let dir = TempDir::new().unwrap();
    let data = small_corpus(dir.path(), &[]);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        let out = train(&data, p, &["--epochs", "3", "--dropout", "0.3", "--seed", "4"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let v = read_json(&a);
    for key in ["config", "epochs", "best_val_epoch", "test", "param_count", "schema_version"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    let e = &v["epochs"][0];
    for key in ["epoch", "train_loss", "val_loss", "val_macro_f1", "val_micro_f1"] {
        assert!(e.get(key).is_some(), "{key}");
    }
    for key in ["macro_p", "macro_r", "macro_f1", "micro_f1"] {
        assert!(v["test"].get(key).is_some(), "{key}");
    }
}

#[test]
fn zero_step_run_matches_untrained_model() {
    let dir = TempDir::new().unwrap();
    let data = small_corpus(dir.path(), &[]);
    let log = dir.path().join("log.json");
    let model = dir.path().join("m.limp");
    let out = train(&data, &log, &["--epochs", "1", "--lr", "0", "--save-model", s(&model)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    // the saved snapshot is the initialization itself
    let saved = Model::load(&model).unwrap();
    let cfg = limnet::training::TrainConfig {
        scorer_hidden: 4,
        ..limnet::training::TrainConfig::for_task(Task::Sentence)
    };
    assert_eq!(saved, limnet::training::init_model(&cfg, 16, 2));

    let metrics = dir.path().join("metrics.json");
    let out = limnet(&[
        "eval", "--data", s(&data), "--params", s(&model), "--out", s(&metrics),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (v, m) = (read_json(&log), read_json(&metrics));
    for key in ["macro_p", "macro_r", "macro_f1", "micro_f1"] {
        assert_eq!(v["test"][key], m[key], "{key}");
    }
}

#[test]
fn no_either_has_fewer_parameters() {
    let dir = TempDir::new().unwrap();
    let data = small_corpus(dir.path(), &[]);
    let count = |variant: &str| {
        let log = dir.path().join(format!("{variant}.json"));
        let out = train(&data, &log, &["--epochs", "1", "--variant", variant]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        read_json(&log)["param_count"].as_u64().unwrap()
    };
    let full = count("full");
    let either = count("no-either");
    assert!(either < full);
    // 2 (4 * 16 + 4 + 4 + 1) + 2 * 16 + 2
    assert_eq!(full, 2 * (4 * 16 + 4 + 4 + 1) + 2 * 16 + 2);
    assert_eq!(either, 2 * 16 + 2);
}

#[test]
fn multi_seed_study_reports_mean_and_std() {
    let dir = TempDir::new().unwrap();
    let data = small_corpus(dir.path(), &[]);
    let log = dir.path().join("study.json");
    let model = dir.path().join("m.limp");
    let out = train(
        &data,
        &log,
        &["--epochs", "2", "--seeds", "3", "--seed", "5", "--save-model", s(&model)],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("over 3 seeds"));
    let v = read_json(&log);
    assert_eq!(v["runs"].as_array().unwrap().len(), 3);
    assert_eq!(v["summary"]["seeds"], serde_json::json!([5, 6, 7]));
    let f1: Vec<f64> = v["runs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["test"]["macro_f1"].as_f64().unwrap())
        .collect();
    let mean = f1.iter().sum::<f64>() / 3.0;
    assert!((v["summary"]["macro_f1"]["mean"].as_f64().unwrap() - mean).abs() < 1e-12);
    for seed in 5..8 {
        assert!(dir.path().join(format!("m.seed{seed}.limp")).is_file());
    }
}

#[test]
fn train_input_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let data = small_corpus(dir.path(), &[]);
    let log = dir.path().join("log.json");
    let out = train(&data, &log, &["--task", "pair"]);
    assert_eq!(code(&out), 2);

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"synth": {"dim": 8}}"#).unwrap();
    let out = train(&data, &log, &["--config", s(&cfg), "--epochs", "1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("dimension mismatch"), "{}", stderr(&out));

    let out = train(&dir.path().join("missing"), &log, &[]);
    assert_eq!(code(&out), 2);
    let out = train(&data, &log, &["--epochs", "0"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("`epochs`"));
    let out = limnet(&["train", "--bogus"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn pair_task_trains() {
    let dir = TempDir::new().unwrap();
    let data = small_corpus(dir.path(), &["--task", "pair"]);
    let log = dir.path().join("log.json");
    let out = train(&data, &log, &["--epochs", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = read_json(&log);
    assert_eq!(v["config"]["task"], "pair");
    // head reads the concatenation of two mixed embeddings
    assert_eq!(v["param_count"], 2 * (4 * 16 + 4 + 4 + 1) + 2 * 32 + 2);
}

#[test]
fn eval_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let data = small_corpus(dir.path(), &[]);
    let out = limnet(&["eval", "--data", s(&data), "--params", "/nonexistent/m.limp"]);
    assert_eq!(code(&out), 2);

    let model = dir.path().join("m.limp");
    let log = dir.path().join("log.json");
    assert_eq!(code(&train(&data, &log, &["--epochs", "1", "--save-model", s(&model)])), 0);
    let narrow = dir.path().join("narrow");
    assert_eq!(code(&limnet(&["synth", "--out", s(&narrow), "--dim", "8", "--num-docs", "30"])), 0);
    let out = limnet(&["eval", "--data", s(&narrow), "--params", s(&model)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("dimension mismatch"));

    let corrupt = dir.path().join("bad.limd");
    std::fs::write(&corrupt, b"XXXX0000").unwrap();
    let out = limnet(&[
        "eval", "--data", s(&corrupt), "--params", s(&model), "--labels",
        s(&data.join("labels.jsonl")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad magic at offset 0"));
}

/// Hand-built full model that reads the topic off the indicator sentence
/// and solves `(c + z) mod 2` with two tanh units.
fn perfect_model(mu: &[Vec<f64>], nu: &[Vec<f64>], dim: usize) -> Model {
    let add = |a: &[f64], b: &[f64], k: f64| a.iter().zip(b).map(|(x, y)| k * (x + y)).collect();
    let global = ScorerParams {
        w1: Matrix::from_rows(&[add(&nu[0], &nu[1], 10.0)]).unwrap(),
        b1: vec![0.0],
        w2: vec![50.0],
        b2: 0.0,
    };
    let probe: Vec<f64> = add(&mu[0], &nu[0], 10.0);
    let hidden = Dense {
        weight: Matrix::from_rows(&[probe.clone(), probe]).unwrap(),
        bias: vec![-15.0, -5.0],
    };
    let out = Dense {
        weight: Matrix::from_rows(&[vec![0.0, 0.0], vec![-1.0, 1.0]]).unwrap(),
        bias: vec![0.0, -1.0],
    };
    Model {
        variant: Variant::Full,
        encoder: EncoderParams {
            local_scorer: ScorerParams::zeros(dim, 1),
            global_scorer: global,
        },
        head: Head {
            task: Task::Sentence,
            layers: vec![hidden, out],
        },
    }
}

#[test]
fn perfect_predictor_on_noiseless_corpus() {
    let dir = TempDir::new().unwrap();
    let data = small_corpus(dir.path(), &["--noise-sigma", "0"]);
    let synth = gen_synthetic(&SyntheticConfig {
        num_docs: 60,
        noise_sigma: 0.0,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let model = perfect_model(&synth.cluster_centroids, &synth.topic_centroids, 16);
    let path = dir.path().join("perfect.limp");
    model.save(&path).unwrap();
    for split in ["train", "val", "test"] {
        let out = limnet(&["eval", "--data", s(&data), "--split", split, "--params", s(&path)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["macro_f1"], 1.0, "{split}");
        assert_eq!(v["micro_f1"], 1.0, "{split}");
    }
}

#[test]
fn trained_model_scores_at_least_as_well_on_train() {
    let dir = TempDir::new().unwrap();
    let data = small_corpus(dir.path(), &["--num-docs", "120"]);
    let log = dir.path().join("log.json");
    let model = dir.path().join("m.limp");
    let out = limnet(&[
        "train", "--data", s(&data), "--out", s(&log), "--save-model", s(&model),
        "--epochs", "30", "--lr", "1e-2", "--scorer-hidden", "16", "--dropout", "0", "--seed", "1",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = read_json(&log);
    let best = v["best_val_epoch"].as_u64().unwrap() as usize;
    let val_micro = v["epochs"][best - 1]["val_micro_f1"].as_f64().unwrap();
    let out = limnet(&["eval", "--data", s(&data), "--split", "train", "--params", s(&model)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(m["micro_f1"].as_f64().unwrap() >= val_micro, "{m} vs {val_micro}");
}

#[test]
fn gradcheck_exit_codes() {
    let out = limnet(&["gradcheck", "--trials", "16"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], true);

    let out = limnet(&["gradcheck", "--trials", "8", "--grad-scale", "1.01"]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("relative error"), "{err}");

    let out = limnet(&["gradcheck", "--trials", "0"]);
    assert_eq!(code(&out), 2);
}
