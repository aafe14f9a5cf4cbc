//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use limnet::data::format::{read_embeddings, write_embeddings, Corpus};
use limnet::data::synth::{gen_synthetic, SyntheticConfig};
use limnet::encoder::DocumentEmbeddings;
use limnet::heads::Task;
use limnet::math::Matrix;
use limnet::metrics::{confusion, macro_prf, micro_f1};
use limnet::model::{closed_form_param_count, Model, ModelShape};
use limnet::testing::{random_document, random_encoder, span_residual};
use limnet::training::{train, RunLog, Splits, TrainConfig};
use limnet::{encode, Params, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn run(name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match &outcome {
        Ok(detail) => println!("PASS  {name} ({secs:.1}s): {detail}"),
        Err(detail) => println!("FAIL  {name} ({secs:.1}s): {detail}"),
    }
    outcome.is_ok()
}

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_limnet"))
        .args(["gradcheck", "--trials", "100", "--eps", "1e-6", "--tol", "1e-5"])
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).map_err(|e| format!("report: {e}"))?;
    ensure(
        out.status.code() == Some(0),
        format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)),
    )?;
    ensure(report["passed"] == true, "report not passed")?;
    ensure(
        elapsed <= Duration::from_secs(60),
        format!("took {:.1}s > 60s", elapsed.as_secs_f64()),
    )?;
    Ok(format!(
        "100 instances over 4 variants x 2 tasks, {} coordinates, max rel err {:.2e} <= 1e-5, {:.1}s <= 60s",
        report["coordinates"],
        report["max_rel_error"].as_f64().unwrap_or(f64::NAN),
        elapsed.as_secs_f64()
    ))
}

struct Draws {
    max_residual: f64,
    max_sum_error: f64,
    min_weight: f64,
    embeddings: usize,
    rows: usize,
}

/// 200 random documents and parameter draws, every variant on each.
fn encoder_draws() -> Draws {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut d = Draws {
        max_residual: 0.0,
        max_sum_error: 0.0,
        min_weight: f64::INFINITY,
        embeddings: 0,
        rows: 0,
    };
    for _ in 0..200 {
        // at most 12 tokens in 16 dimensions, so the span is a proper subspace
        let dim = 16;
        let n = rng.random_range(1..=3);
        let doc = random_document(&mut rng, n, 4, dim);
        let hidden = rng.random_range(1..=8);
        let mut enc = random_encoder(&mut rng, dim, hidden);
        let scale = rng.random_range(0.5..4.0);
        enc.scale(scale);
        let tokens: Vec<&[f64]> = doc.tokens().collect();
        for v in Variant::ALL {
            let out = encode(&doc, &enc, v).expect("valid draw");
            for m in &out.mixed {
                d.max_residual = d.max_residual.max(span_residual(&tokens, m));
                d.embeddings += 1;
            }
            for row in out.alpha_local.iter().chain(&out.alpha_global) {
                let sum: f64 = row.iter().sum();
                d.max_sum_error = d.max_sum_error.max((sum - 1.0).abs());
                d.min_weight = row.iter().copied().fold(d.min_weight, f64::min);
                d.rows += 1;
            }
        }
    }
    d
}

fn linear_combination(d: &Draws) -> Check {
    ensure(
        d.max_residual <= 1e-8,
        format!("max relative residual {:.2e} > 1e-8", d.max_residual),
    )?;
    Ok(format!(
        "{} mixed embeddings from 200 draws x 4 variants, max relative residual {:.2e} <= 1e-8",
        d.embeddings, d.max_residual
    ))
}

fn attention_normalization(d: &Draws) -> Check {
    ensure(
        d.max_sum_error <= 1e-12,
        format!("max |sum - 1| {:.2e} > 1e-12", d.max_sum_error),
    )?;
    ensure(d.min_weight >= 0.0, format!("negative weight {:e}", d.min_weight))?;
    Ok(format!(
        "{} attention rows, max |sum - 1| {:.2e} <= 1e-12, min weight {:.2e} >= 0",
        d.rows, d.max_sum_error, d.min_weight
    ))
}

fn planted_splits(cfg: &SyntheticConfig, fractions: [f64; 3]) -> Splits {
    let synth = gen_synthetic(cfg).expect("valid synthetic config");
    Splits::partition(&synth.corpus, &synth.labels, fractions, cfg.seed).expect("split")
}

fn planted_config(seed: u64, variant: Variant) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        epochs: 100,
        dropout_rate: 0.0,
        scorer_hidden: 16,
        seed,
        variant,
        ..TrainConfig::for_task(Task::Sentence)
    }
}

fn planted_separation() -> Check {
    let start = Instant::now();
    let splits = planted_splits(&SyntheticConfig::default(), [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0]);
    ensure(
        (splits.train.len(), splits.val.len(), splits.test.len()) == (200, 50, 50),
        "default corpus is not 200/50/50",
    )?;
    let accuracy = |variant| -> Result<Vec<f64>, String> {
        (0..5)
            .map(|seed| {
                train(&splits, &planted_config(seed, variant))
                    .map(|o| o.log.test.micro_f1)
                    .map_err(|e| e.to_string())
            })
            .collect()
    };
    let full = accuracy(Variant::Full)?;
    let local = accuracy(Variant::NoGlobal)?;
    let elapsed = start.elapsed();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let fmt = |v: &[f64]| v.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(" ");
    let detail = format!(
        "content test accuracy over 5 seeds: full {:.3} [{}] (>= 0.85), no-global {:.3} [{}] (<= 0.60), {:.0}s <= 300s",
        mean(&full),
        fmt(&full),
        mean(&local),
        fmt(&local),
        elapsed.as_secs_f64()
    );
    ensure(mean(&full) >= 0.85, detail.clone())?;
    ensure(mean(&local) <= 0.60, detail.clone())?;
    ensure(elapsed <= Duration::from_secs(300), detail.clone())?;
    Ok(detail)
}

fn final_gap(log: &RunLog) -> f64 {
    let last = log.epochs.last().expect("at least one epoch");
    last.val_loss - last.train_loss
}

fn overfitting_gap() -> Check {
    let splits = planted_splits(
        &SyntheticConfig {
            num_docs: 60,
            noise_sigma: 0.5,
            ..SyntheticConfig::default()
        },
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    );
    ensure(splits.train.len() == 20, "expected 20 training documents")?;
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..5 {
        let base = planted_config(seed, Variant::Full);
        let deep = TrainConfig {
            head_hidden: vec![512, 512],
            ..base.clone()
        };
        let a = final_gap(&train(&splits, &base).map_err(|e| e.to_string())?.log);
        let b = final_gap(&train(&splits, &deep).map_err(|e| e.to_string())?.log);
        if a < b {
            wins += 1;
        }
        pairs.push(format!("{a:.2}<{b:.2}"));
    }
    let detail = format!(
        "final val-train loss gap, linear head vs [512, 512] head on 20 training docs: {} ; smaller in {wins}/5 seeds (need >= 4)",
        pairs.join(" ")
    );
    ensure(wins >= 4, detail.clone())?;
    Ok(detail)
}

fn determinism() -> Check {
    let splits = planted_splits(
        &SyntheticConfig {
            num_docs: 60,
            ..SyntheticConfig::default()
        },
        [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    );
    let cfg = TrainConfig {
        epochs: 5,
        dropout_rate: 0.3,
        scorer_hidden: 8,
        learning_rate: 1e-2,
        seed: 11,
        ..TrainConfig::for_task(Task::Sentence)
    };
    let json = || -> Result<Vec<u8>, String> {
        let log = train(&splits, &cfg).map_err(|e| e.to_string())?.log;
        serde_json::to_vec(&log).map_err(|e| e.to_string())
    };
    let (a, b) = (json()?, json()?);
    ensure(a == b, "run logs differ")?;
    Ok(format!("two runs with dropout 0.3, seed 11: {} identical bytes of run log JSON", a.len()))
}

fn metric_oracles() -> Check {
    // (gold, predicted, classes, macro P, macro R, macro F1, micro F1), all by hand
    let cases: [(&[i64], &[usize], usize, f64, f64, f64, f64); 4] = [
        (&[0, 1, 2], &[0, 1, 2], 3, 1.0, 1.0, 1.0, 1.0),
        (&[0, 0, 1, 1], &[0, 0, 0, 0], 2, 1.0 / 4.0, 1.0 / 2.0, 1.0 / 3.0, 1.0 / 2.0),
        (&[0, 0, 1, 1], &[0, 1, 1, 1], 2, 5.0 / 6.0, 3.0 / 4.0, 11.0 / 15.0, 3.0 / 4.0),
        (&[0, 1, 2, 2, 1, 0], &[0, 2, 2, 1, 1, 0], 3, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0),
    ];
    let mut worst = 0.0f64;
    for (i, (gold, pred, c, p, r, f, micro)) in cases.iter().enumerate() {
        let cm = confusion(gold, pred, *c).map_err(|e| e.to_string())?;
        let (gp, gr, gf) = macro_prf(&cm);
        let gm = micro_f1(&cm).map_err(|e| e.to_string())?;
        for (got, want) in [(gp, p), (gr, r), (gf, f), (gm, micro)] {
            let err = (got - want).abs();
            worst = worst.max(err);
            ensure(
                err <= f64::EPSILON,
                format!("case {i}: got {got} want {want}"),
            )?;
        }
    }
    Ok(format!(
        "4 worked confusion matrices, macro P/R/F1 and micro F1 within {worst:.1e} of the hand values"
    ))
}

fn parameter_count() -> Check {
    let shape = ModelShape {
        variant: Variant::Full,
        task: Task::Sentence,
        dim: 1024,
        scorer_hidden: 256,
        classes: 8,
        head_hidden: Vec::new(),
    };
    let (d, h, c) = (1024, 256, 8);
    let formula = 2 * (h * d + h + h + 1) + (c * d + c);
    let counted = Model::zeros(&shape).param_count();
    ensure(counted == formula, format!("counted {counted} != formula {formula}"))?;
    ensure(closed_form_param_count(&shape) == formula, "closed form helper disagrees")?;
    Ok(format!(
        "d=1024 h=256 C=8: {counted} learnable parameters ({:.2}M) = 2(hd + 2h + 1) + (Cd + C)",
        counted as f64 / 1e6
    ))
}

fn random_corpus(rng: &mut ChaCha8Rng) -> Corpus {
    let dim = rng.random_range(1..=8);
    let docs = (0..rng.random_range(0..=4))
        .map(|i| {
            let id: String = (0..rng.random_range(0..=12))
                .map(|_| rng.random_range('a'..='z'))
                .chain(format!("-{i}-é").chars())
                .collect();
            let sentences = (0..rng.random_range(1..=4))
                .map(|_| {
                    let rows = rng.random_range(1..=5);
                    let data = (0..rows * dim)
                        .map(|_| loop {
                            // any finite f32 bit pattern, subnormals and -0 included
                            let v = f32::from_bits(rng.random());
                            if v.is_finite() {
                                break v as f64;
                            }
                        })
                        .collect();
                    Matrix {
                        rows,
                        cols: dim,
                        data,
                    }
                })
                .collect();
            DocumentEmbeddings {
                doc_id: id,
                dim,
                sentences,
            }
        })
        .collect();
    Corpus { dim, docs }
}

fn fixture() -> Vec<u8> {
    let doc = |id: &str, rows: &[usize]| DocumentEmbeddings {
        doc_id: id.into(),
        dim: 2,
        sentences: rows
            .iter()
            .map(|&r| Matrix {
                rows: r,
                cols: 2,
                data: (0..r * 2).map(|k| k as f64 * 0.5).collect(),
            })
            .collect(),
    };
    write_embeddings(&Corpus {
        dim: 2,
        docs: vec![doc("a", &[1, 2]), doc("bb", &[1])],
    })
    .expect("valid fixture")
}

fn format_contract() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..1000 {
        let corpus = random_corpus(&mut rng);
        let bytes = write_embeddings(&corpus).map_err(|e| format!("round trip {i}: {e}"))?;
        let back = read_embeddings(&bytes).map_err(|e| format!("round trip {i}: {e}"))?;
        ensure(back == corpus, format!("round trip {i}: corpus differs"))?;
        let again = write_embeddings(&back).map_err(|e| e.to_string())?;
        ensure(again == bytes, format!("round trip {i}: bytes differ"))?;
    }

    // layout of the fixture, by hand:
    // 0 magic, 4 version, 8 dim=2, 12 docs=2,
    // 16 id_len=1, 20 "a", 21 sents=2, 25 toks=1, 29 f32x2, 37 toks=2, 41 f32x4,
    // 57 id_len=2, 61 "bb", 63 sents=1, 67 toks=1, 71 f32x2, 79 end
    let good = fixture();
    ensure(good.len() == 79, format!("fixture is {} bytes", good.len()))?;
    let put = |at: usize, v: u32| {
        let mut b = good.clone();
        b[at..at + 4].copy_from_slice(&v.to_le_bytes());
        b
    };
    let cut = |n: usize| good[..n].to_vec();
    let mut nan = good.clone();
    nan[45..49].copy_from_slice(&f32::NAN.to_le_bytes());
    let mut not_utf8 = good.clone();
    not_utf8[20] = 0xff;
    let mut trailing = good.clone();
    trailing.push(0);
    let mut xxxx = good.clone();
    xxxx[..4].copy_from_slice(b"XXXX");
    let mut limp = good.clone();
    limp[..4].copy_from_slice(b"LIMP");

    let cases: Vec<(&str, Vec<u8>, &str)> = vec![
        ("magic XXXX", xxxx, "bad magic at offset 0"),
        ("model magic", limp, "bad magic at offset 0"),
        ("empty file", Vec::new(), "truncated magic: need 4 bytes, 0 remain at offset 0"),
        ("3 bytes", cut(3), "truncated magic: need 4 bytes, 3 remain at offset 0"),
        ("version 2", put(4, 2), "unsupported version 2 at offset 4"),
        ("cut in version", cut(6), "truncated version: need 4 bytes, 2 remain at offset 4"),
        ("zero dim", put(8, 0), "zero dimension at offset 8"),
        ("cut in dim", cut(10), "truncated dim: need 4 bytes, 2 remain at offset 8"),
        ("cut in doc count", cut(14), "truncated doc count: need 4 bytes, 2 remain at offset 12"),
        (
            "declares 3 docs, has 2",
            put(12, 3),
            "truncated document id length: need 4 bytes, 0 remain at offset 79",
        ),
        (
            "declares 2 docs, has 1",
            cut(57),
            "truncated document id length: need 4 bytes, 0 remain at offset 57",
        ),
        ("cut in id", cut(20), "truncated document id: need 1 bytes, 0 remain at offset 20"),
        ("cut in sentence count", cut(23), "truncated sentence count: need 4 bytes, 2 remain at offset 21"),
        ("zero sentence count", put(21, 0), "zero sentence count at offset 21"),
        ("zero token count", put(25, 0), "zero token count at offset 25"),
        ("zero token count, second doc", put(67, 0), "zero token count at offset 67"),
        ("cut in first block", cut(33), "truncated token block: need 8 bytes, 4 remain at offset 29"),
        ("last byte missing", cut(78), "truncated token block: need 8 bytes, 7 remain at offset 71"),
        ("trailing byte", trailing, "1 trailing bytes at offset 79"),
        ("NaN value", nan, "non-finite embedding value at offset 45"),
    ];
    let mut failures = Vec::new();
    for (name, bytes, want) in &cases {
        match read_embeddings(bytes) {
            Ok(_) => failures.push(format!("{name}: accepted")),
            Err(e) if e.to_string() == *want => {}
            Err(e) => failures.push(format!("{name}: `{e}` != `{want}`")),
        }
    }
    ensure(not_utf8.len() == 79, "fixture")?;
    ensure(failures.is_empty(), failures.join("; "))?;
    Ok(format!(
        "1000 random round trips bit-identical; {} corruption cases give the expected error",
        cases.len()
    ))
}

fn main() {
    println!("acceptance criteria");
    let draws = encoder_draws();
    let results = [
        run("gradient correctness", gradient_correctness),
        run("linear combination", || linear_combination(&draws)),
        run("attention normalization", || attention_normalization(&draws)),
        run("planted-task separation", planted_separation),
        run("overfitting-gap ordering", overfitting_gap),
        run("determinism", determinism),
        run("metric oracles", metric_oracles),
        run("parameter count", parameter_count),
        run("embedding file format", format_contract),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
