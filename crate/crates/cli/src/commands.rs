use std::path::{Path, PathBuf};

use limnet::data::format::{read_embeddings_file, write_embeddings_file};
use limnet::data::{gen_synthetic, split, Corpus, LabelSet};
use limnet::gradcheck::{run_gradcheck, GradcheckConfig};
use limnet::metrics::ConfusionMatrix;
use limnet::model::Model;
use limnet::training::{
    evaluate, study, LabeledSplit, RunLog, Splits, StudySummary, SCHEMA_VERSION,
};
use serde::Serialize;

use crate::config::{CliConfig, SplitConfig, TrainOverrides};
use crate::{CliError, EvalArgs, GradcheckArgs, SynthArgs, TrainArgs};

pub const SPLITS: [&str; 3] = ["train", "val", "test"];
pub const LABELS_FILE: &str = "labels.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

fn split_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.limd"))
}

fn required(path: Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    path.ok_or_else(|| CliError::Input(format!("missing --{flag} (flag or config key `{flag}`)")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct SplitEntry {
    file: String,
    docs: usize,
    doc_ids: Vec<String>,
}

#[derive(Serialize)]
struct Manifest {
    synth: limnet::data::SyntheticConfig,
    split: SplitConfig,
    labels: String,
    num_classes: usize,
    train: SplitEntry,
    val: SplitEntry,
    test: SplitEntry,
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    let file = CliConfig::load(args.config.as_deref())?;
    let mut cfg = file.synth.unwrap_or_default();
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.num_docs {
        cfg.num_docs = v;
    }
    if let Some(v) = args.dim {
        cfg.dim = v;
    }
    if let Some(v) = args.noise_sigma {
        cfg.noise_sigma = v;
    }
    if let Some(v) = args.task {
        cfg.task = v;
    }
    let mut split_cfg = file.split;
    if let Some(f) = args.fractions {
        split_cfg.fractions = f.try_into().map_err(|_| {
            CliError::Lib(limnet::Error::config("split", "expected three fractions"))
        })?;
    }
    if let Some(s) = args.split_seed {
        split_cfg.seed = s;
    }
    let out = required(args.out.or(file.out), "out")?;

    let generated = gen_synthetic(&cfg)?;
    let (train, val, test) = split(&generated.corpus.docs, split_cfg.fractions, split_cfg.seed)?;
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
    let mut entries = Vec::new();
    for (name, docs) in SPLITS.iter().zip([train, val, test]) {
        let path = split_file(&out, name);
        let doc_ids = docs.iter().map(|d| d.doc_id.clone()).collect();
        let count = docs.len();
        write_embeddings_file(&path, &Corpus::new(cfg.dim, docs)?)?;
        entries.push(SplitEntry {
            file: format!("{name}.limd"),
            docs: count,
            doc_ids,
        });
        println!("{name}: {count} documents -> {}", path.display());
    }
    let labels_path = out.join(LABELS_FILE);
    std::fs::write(&labels_path, generated.labels.to_jsonl())
        .map_err(|e| CliError::Input(format!("{}: {e}", labels_path.display())))?;
    let [train, val, test]: [SplitEntry; 3] = entries.try_into().ok().expect("three splits");
    let manifest = Manifest {
        num_classes: cfg.num_classes(),
        synth: cfg,
        split: split_cfg,
        labels: LABELS_FILE.into(),
        train,
        val,
        test,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    println!("labels: {} classes -> {}", manifest.num_classes, labels_path.display());
    Ok(())
}

fn load_split(dir: &Path, name: &str, labels: &LabelSet) -> Result<LabeledSplit, CliError> {
    let corpus = read_embeddings_file(&split_file(dir, name))?;
    Ok(LabeledSplit::from_labels(corpus, labels)?)
}

#[derive(Serialize)]
struct StudyLog {
    schema_version: u32,
    summary: StudySummary,
    runs: Vec<RunLog>,
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let file = CliConfig::load(args.config.as_deref())?;
    let data = required(args.data.or(file.data), "data")?;
    let labels_path = args
        .labels
        .or(file.labels)
        .unwrap_or_else(|| data.join(LABELS_FILE));
    let out = args.out.or(file.out).unwrap_or_else(|| PathBuf::from("runlog.json"));
    let flags = TrainOverrides {
        learning_rate: args.lr,
        epochs: args.epochs,
        dropout_rate: args.dropout,
        seed: args.seed,
        variant: args.variant,
        task: args.task,
        scorer_hidden: args.scorer_hidden,
        head_hidden: args.head_hidden,
        grad_accumulation: args.grad_accumulation,
        seeds: args.seeds,
        ..Default::default()
    };
    let overrides = flags.over(file.train);

    let labels = LabelSet::read_file(&labels_path)?;
    let task = overrides.task.unwrap_or(labels.task());
    if task != labels.task() {
        return Err(CliError::Input(format!(
            "--task {task} does not match the {} label file",
            labels.task()
        )));
    }
    let cfg = overrides.resolve(task);
    cfg.validate()?;
    let splits = Splits {
        train: load_split(&data, "train", &labels)?,
        val: load_split(&data, "val", &labels)?,
        test: load_split(&data, "test", &labels)?,
        num_classes: labels.num_classes(),
    };
    if let (Some(synth), Some(dim)) = (&file.synth, splits.train.dim()) {
        if synth.dim != dim {
            return Err(limnet::Error::DimMismatch {
                expected: synth.dim,
                actual: dim,
            }
            .into());
        }
    }

    let runs = overrides.seeds.unwrap_or(1);
    let (outcomes, summary) = study(&splits, &cfg, runs)?;
    for o in &outcomes {
        let t = &o.log.test;
        println!(
            "seed {}: best epoch {}, test macro F1 {:.4}, micro F1 {:.4}, {} parameters",
            o.log.config.seed, o.log.best_val_epoch, t.macro_f1, t.micro_f1, o.log.param_count
        );
    }
    if let Some(path) = args.save_model.or(file.params) {
        for o in &outcomes {
            let target = if runs == 1 {
                path.clone()
            } else {
                seeded_path(&path, o.log.config.seed)
            };
            o.best.save(&target)?;
        }
    }
    if runs == 1 {
        write_json(&out, &outcomes[0].log)?;
    } else {
        println!(
            "test macro F1 {:.4} ± {:.4}, micro F1 {:.4} ± {:.4} over {runs} seeds",
            summary.macro_f1.mean, summary.macro_f1.std, summary.micro_f1.mean, summary.micro_f1.std
        );
        write_json(
            &out,
            &StudyLog {
                schema_version: SCHEMA_VERSION,
                summary,
                runs: outcomes.into_iter().map(|o| o.log).collect(),
            },
        )?;
    }
    Ok(())
}

/// `model.limp` -> `model.seed3.limp`
fn seeded_path(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().map_or("model".into(), |s| s.to_string_lossy());
    let name = match path.extension() {
        Some(ext) => format!("{stem}.seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.seed{seed}"),
    };
    path.with_file_name(name)
}

#[derive(Serialize)]
struct EvalReport {
    schema_version: u32,
    docs: usize,
    items: u64,
    loss: f64,
    macro_p: f64,
    macro_r: f64,
    macro_f1: f64,
    micro_f1: f64,
    confusion: ConfusionMatrix,
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let file = CliConfig::load(args.config.as_deref())?;
    let data = required(args.data.or(file.data), "data")?;
    let params = required(args.params.or(file.params), "params")?;
    let (embeddings, dir) = if data.is_dir() {
        (split_file(&data, &args.split), data.clone())
    } else {
        let dir = data.parent().map_or_else(PathBuf::new, Path::to_path_buf);
        (data.clone(), dir)
    };
    let labels_path = args
        .labels
        .or(file.labels)
        .unwrap_or_else(|| dir.join(LABELS_FILE));

    let model = Model::load(&params)?;
    let labels = LabelSet::read_file(&labels_path)?;
    let corpus = read_embeddings_file(&embeddings)?;
    if model.dim() != corpus.dim {
        return Err(limnet::Error::DimMismatch {
            expected: model.dim(),
            actual: corpus.dim,
        }
        .into());
    }
    if model.head.task != labels.task() || model.head.num_classes() != labels.num_classes() {
        return Err(CliError::Input(format!(
            "model is a {}-class {} head but labels are {}-class {}",
            model.head.num_classes(),
            model.head.task,
            labels.num_classes(),
            labels.task()
        )));
    }
    let split = LabeledSplit::from_labels(corpus, &labels)?;
    let ev = evaluate(&model, &split, labels.num_classes())?;
    let report = EvalReport {
        schema_version: SCHEMA_VERSION,
        docs: split.len(),
        items: ev.confusion.total(),
        loss: ev.loss,
        macro_p: ev.scores.macro_p,
        macro_r: ev.scores.macro_r,
        macro_f1: ev.scores.macro_f1,
        micro_f1: ev.scores.micro_f1,
        confusion: ev.confusion,
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    if let Some(out) = args.out.or(file.out) {
        write_json(&out, &report)?;
    }
    Ok(())
}

pub fn gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(CliError::Input("--trials must be at least 1".into()));
    }
    let report = run_gradcheck(&GradcheckConfig {
        trials: args.trials,
        eps: args.eps,
        tol: args.tol,
        seed: args.seed,
        grad_scale: args.grad_scale,
        ..GradcheckConfig::default()
    })?;
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    if report.passed {
        return Ok(());
    }
    let w = report.worst.as_ref().expect("failed report has a worst coordinate");
    Err(CliError::Check(format!(
        "gradcheck failed: {} {} trial {} {}[{}] analytic {:e} numeric {:e} relative error {:e} > {:e}",
        w.variant, w.task, w.trial, w.tensor, w.index, w.analytic, w.numeric, w.rel_error, report.tol
    )))
}
