//! Adam, inverted dropout, the per-document training loop and run logs.
//!
//! Every random draw comes from ChaCha8 seeded with the run seed, one stream
//! per purpose, so `(config, seed, data)` fixes the whole run.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Targets};
use crate::encoder::{DocumentEmbeddings, Variant};
use crate::error::{Error, Result};
use crate::heads::Task;
use crate::metrics::{confusion, ConfusionMatrix, Scores};
use crate::model::{Model, ModelShape};
use crate::math::Params;

pub const SCHEMA_VERSION: u32 = 1;

pub const INIT_STREAM: u64 = 0;
pub const SHUFFLE_STREAM: u64 = 1;
pub const DROPOUT_STREAM: u64 = 2;

pub const RNG_DESCRIPTION: &str =
    "ChaCha8 seeded from `seed`; streams: init=0, shuffle=1, dropout=2";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    pub variant: Variant,
    pub task: Task,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Hidden width of each attention scorer.
    pub scorer_hidden: usize,
    /// Extra tanh layers in the head; empty is the single affine map.
    pub head_hidden: Vec<usize>,
    /// Documents per optimizer step.
    pub grad_accumulation: usize,
}

impl TrainConfig {
    pub fn for_task(task: Task) -> Self {
        TrainConfig {
            learning_rate: match task {
                Task::Sentence => 5e-5,
                Task::Pair => 5e-4,
            },
            epochs: 100,
            dropout_rate: 0.5,
            seed: 0,
            variant: Variant::Full,
            task,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            scorer_hidden: 256,
            head_hidden: Vec::new(),
            grad_accumulation: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be finite and >= 0"));
        }
        if self.epochs < 1 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("dropout_rate", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return Err(Error::config("adam_beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::config("adam_beta2", "must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::config("adam_eps", "must be positive"));
        }
        if self.scorer_hidden == 0 {
            return Err(Error::config("scorer_hidden", "must be at least 1"));
        }
        if self.head_hidden.iter().any(|&w| w == 0) {
            return Err(Error::config("head_hidden", "widths must be at least 1"));
        }
        if self.grad_accumulation == 0 {
            return Err(Error::config("grad_accumulation", "must be at least 1"));
        }
        Ok(())
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: Params>(params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        AdamState {
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<P: Params>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let grads = grads.tensors();
    let mut params = params.tensors_mut();
    let shapes_match = params.len() == grads.len()
        && params.len() == state.m.len()
        && params
            .iter()
            .zip(&grads)
            .zip(&state.m)
            .all(|((p, g), m)| p.len() == g.len() && p.len() == m.len());
    if !shapes_match {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }
    state.t += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powf(state.t as f64);
    let c2 = 1.0 - b2.powf(state.t as f64);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(&grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

/// Inverted-dropout multipliers: 0 with probability `rate`, else `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    if rate == 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

pub fn dropout_apply<R: Rng + ?Sized>(v: &[f64], rate: f64, rng: &mut R, training: bool) -> Vec<f64> {
    if !training || rate == 0.0 {
        return v.to_vec();
    }
    v.iter()
        .zip(dropout_mask(v.len(), rate, rng))
        .map(|(x, m)| x * m)
        .collect()
}

/// Documents paired with their resolved targets.
#[derive(Debug, Clone)]
pub struct LabeledSplit {
    pub docs: Vec<DocumentEmbeddings>,
    pub targets: Vec<Targets>,
}

impl LabeledSplit {
    pub fn new(corpus: Corpus, targets: Vec<Targets>) -> Result<Self> {
        if corpus.docs.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} documents but {} target lists",
                corpus.docs.len(),
                targets.len()
            )));
        }
        Ok(LabeledSplit {
            docs: corpus.docs,
            targets,
        })
    }

    pub fn from_labels(corpus: Corpus, labels: &crate::data::LabelSet) -> Result<Self> {
        let targets = labels.align(&corpus)?;
        Self::new(corpus, targets)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.docs.first().map(|d| d.dim)
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: LabeledSplit,
    pub val: LabeledSplit,
    pub test: LabeledSplit,
    pub num_classes: usize,
}

impl Splits {
    /// Seeded document-level partition of one labeled corpus.
    pub fn partition(
        corpus: &Corpus,
        labels: &crate::data::LabelSet,
        fractions: [f64; 3],
        seed: u64,
    ) -> Result<Self> {
        let targets = labels.align(corpus)?;
        let pairs: Vec<(DocumentEmbeddings, Targets)> =
            corpus.docs.iter().cloned().zip(targets).collect();
        let (train, val, test) = crate::data::split(&pairs, fractions, seed)?;
        let build = |part: Vec<(DocumentEmbeddings, Targets)>| {
            let (docs, targets) = part.into_iter().unzip();
            LabeledSplit { docs, targets }
        };
        Ok(Splits {
            train: build(train),
            val: build(val),
            test: build(test),
            num_classes: labels.num_classes(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_macro_f1: f64,
    pub val_micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub schema_version: u32,
    pub config: TrainConfig,
    pub rng: String,
    pub num_classes: usize,
    pub param_count: usize,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch with the highest validation macro F1 (earliest on ties).
    pub best_val_epoch: usize,
    /// Test scores of the best-validation snapshot.
    pub test: Scores,
    /// Test scores after the last epoch.
    pub test_final: Scores,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Model,
    pub last: Model,
    pub log: RunLog,
}

/// Loss and scores of a model over a split, eval mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Mean over documents with at least one labeled item.
    pub loss: f64,
    pub confusion: ConfusionMatrix,
    pub scores: Scores,
}

pub fn evaluate(model: &Model, split: &LabeledSplit, num_classes: usize) -> Result<Evaluation> {
    let per_doc = split
        .docs
        .par_iter()
        .zip(&split.targets)
        .map(|(doc, t)| {
            let loss = model.loss(doc, t)?;
            let preds = model.predict(doc, t)?;
            Ok((loss, preds))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut loss_sum, mut counted) = (0.0, 0usize);
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for (loss, preds) in per_doc {
        if let Some(l) = loss {
            loss_sum += l;
            counted += 1;
        }
        for p in preds {
            gold.push(p.gold);
            pred.push(p.predicted);
        }
    }
    let cm = confusion(&gold, &pred, num_classes)?;
    Ok(Evaluation {
        loss: if counted == 0 { 0.0 } else { loss_sum / counted as f64 },
        scores: Scores::from_confusion(&cm),
        confusion: cm,
    })
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn init_model(cfg: &TrainConfig, dim: usize, num_classes: usize) -> Model {
    let shape = ModelShape {
        variant: cfg.variant,
        task: cfg.task,
        dim,
        scorer_hidden: cfg.scorer_hidden,
        classes: num_classes,
        head_hidden: cfg.head_hidden.clone(),
    };
    Model::init(&shape, &mut stream(cfg.seed, INIT_STREAM))
}

fn check_splits(data: &Splits) -> Result<usize> {
    for (name, s) in [("train", &data.train), ("val", &data.val), ("test", &data.test)] {
        if s.is_empty() {
            return Err(Error::config(name, "split is empty"));
        }
        if s.docs.len() != s.targets.len() {
            return Err(Error::Shape(format!("{name}: documents and targets differ in length")));
        }
    }
    let dim = data.train.dim().expect("non-empty");
    for s in [&data.train, &data.val, &data.test] {
        for d in &s.docs {
            if d.dim != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: d.dim,
                });
            }
        }
    }
    Ok(dim)
}

pub fn train(data: &Splits, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let model = init_model(cfg, check_splits(data)?, data.num_classes);
    train_from(data, cfg, model)
}

/// Trains starting from the given parameters.
pub fn train_from(data: &Splits, cfg: &TrainConfig, mut model: Model) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dim = check_splits(data)?;
    if model.dim() != dim {
        return Err(Error::DimMismatch {
            expected: model.dim(),
            actual: dim,
        });
    }
    let mut shuffle_rng = stream(cfg.seed, SHUFFLE_STREAM);
    let mut dropout_rng = stream(cfg.seed, DROPOUT_STREAM);
    let mut adam = AdamState::new(&model);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best = (model.clone(), f64::NEG_INFINITY, 0usize);
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut loss_sum, mut counted) = (0.0, 0usize);
        let mut pending: Option<Model> = None;
        let mut pending_docs = 0usize;
        for &i in &order {
            let doc = &data.train.docs[i];
            let masks: Vec<Vec<f64>> = (0..doc.num_sentences())
                .map(|_| dropout_mask(dim, cfg.dropout_rate, &mut dropout_rng))
                .collect();
            let Some((loss, grad)) =
                model.loss_and_grad(doc, &data.train.targets[i], Some(&masks))?
            else {
                continue;
            };
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::NanLoss {
                    epoch,
                    doc_id: doc.doc_id.clone(),
                });
            }
            loss_sum += loss;
            counted += 1;
            match pending.as_mut() {
                Some(acc) => acc.accumulate(&grad),
                None => pending = Some(grad),
            }
            pending_docs += 1;
            if pending_docs == cfg.grad_accumulation {
                let mut g = pending.take().expect("pending gradient");
                g.scale(1.0 / pending_docs as f64);
                adam_step(&mut model, &g, &mut adam, cfg)?;
                pending_docs = 0;
            }
        }
        if let Some(mut g) = pending.take() {
            g.scale(1.0 / pending_docs as f64);
            adam_step(&mut model, &g, &mut adam, cfg)?;
        }

        let val = evaluate(&model, &data.val, data.num_classes)?;
        if !val.loss.is_finite() {
            return Err(Error::NanLoss {
                epoch,
                doc_id: "<validation>".into(),
            });
        }
        records.push(EpochRecord {
            epoch,
            train_loss: if counted == 0 { 0.0 } else { loss_sum / counted as f64 },
            val_loss: val.loss,
            val_macro_f1: val.scores.macro_f1,
            val_micro_f1: val.scores.micro_f1,
        });
        if val.scores.macro_f1 > best.1 {
            best = (model.clone(), val.scores.macro_f1, epoch);
        }
    }

    let test_best = evaluate(&best.0, &data.test, data.num_classes)?;
    let test_final = evaluate(&model, &data.test, data.num_classes)?;
    let log = RunLog {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        rng: RNG_DESCRIPTION.into(),
        num_classes: data.num_classes,
        param_count: model.param_count(),
        epochs: records,
        best_val_epoch: best.2,
        test: test_best.scores,
        test_final: test_final.scores,
    };
    Ok(TrainOutcome {
        best: best.0,
        last: model,
        log,
    })
}

/// Per-epoch `val_loss - train_loss`.
pub fn overfit_gap(log: &RunLog) -> Vec<(usize, f64)> {
    log.epochs
        .iter()
        .map(|r| (r.epoch, r.val_loss - r.train_loss))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub seeds: Vec<u64>,
    pub macro_p: MeanStd,
    pub macro_r: MeanStd,
    pub macro_f1: MeanStd,
    pub micro_f1: MeanStd,
}

impl StudySummary {
    pub fn from_logs(logs: &[RunLog]) -> Self {
        let pick = |f: fn(&Scores) -> f64| {
            MeanStd::of(&logs.iter().map(|l| f(&l.test)).collect::<Vec<_>>())
        };
        StudySummary {
            seeds: logs.iter().map(|l| l.config.seed).collect(),
            macro_p: pick(|s| s.macro_p),
            macro_r: pick(|s| s.macro_r),
            macro_f1: pick(|s| s.macro_f1),
            micro_f1: pick(|s| s.micro_f1),
        }
    }
}

/// Sequential multi-seed runs: `cfg.seed, cfg.seed + 1, ...`.
pub fn study(data: &Splits, cfg: &TrainConfig, runs: usize) -> Result<(Vec<TrainOutcome>, StudySummary)> {
    if runs == 0 {
        return Err(Error::config("seeds", "must be at least 1"));
    }
    let outcomes = (0..runs as u64)
        .map(|k| {
            let cfg = TrainConfig {
                seed: cfg.seed.wrapping_add(k),
                ..cfg.clone()
            };
            train(data, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let logs: Vec<RunLog> = outcomes.iter().map(|o| o.log.clone()).collect();
    let summary = StudySummary::from_logs(&logs);
    Ok((outcomes, summary))
}
