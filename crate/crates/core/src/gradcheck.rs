//! Randomized analytic-vs-finite-difference check of the full model
//! (encoder and head) for every variant and both tasks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::Targets;
use crate::encoder::Variant;
use crate::error::{Error, Result};
use crate::extended::DoubleDouble;
use crate::heads::Task;
use crate::math::{finite_difference, relative_error, Params};
use crate::model::{Model, ModelShape};
use crate::reference;
use crate::testing::{random_document, randomize};

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub trials: usize,
    pub eps: f64,
    pub tol: f64,
    pub seed: u64,
    pub max_sentences: usize,
    pub max_tokens: usize,
    pub max_dim: usize,
    pub max_hidden: usize,
    /// Multiplies the analytic gradient before comparison. Anything but 1.0
    /// should make the check fail; used to test the checker itself.
    pub grad_scale: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            trials: 100,
            eps: 1e-6,
            tol: 1e-5,
            seed: 0,
            max_sentences: 3,
            max_tokens: 4,
            max_dim: 8,
            max_hidden: 4,
            grad_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Worst {
    pub trial: usize,
    pub variant: Variant,
    pub task: Task,
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub trials: usize,
    pub coordinates: usize,
    pub tol: f64,
    pub max_rel_error: f64,
    pub worst: Option<Worst>,
    pub passed: bool,
}

/// The `trial`-th random instance: variants and tasks cycle so every
/// combination is covered once per eight trials.
pub fn instance<R: Rng>(
    rng: &mut R,
    trial: usize,
    cfg: &GradcheckConfig,
) -> (Model, crate::encoder::DocumentEmbeddings, Targets) {
    let variant = Variant::ALL[trial % 4];
    let task = if (trial / 4) % 2 == 0 {
        Task::Sentence
    } else {
        Task::Pair
    };
    let n = rng.random_range(1..=cfg.max_sentences);
    let dim = rng.random_range(2..=cfg.max_dim);
    let classes = rng.random_range(2..=4);
    let shape = ModelShape {
        variant,
        task,
        dim,
        scorer_hidden: rng.random_range(1..=cfg.max_hidden),
        classes,
        head_hidden: Vec::new(),
    };
    let mut model = Model::zeros(&shape);
    randomize(&mut model, rng);
    let doc = random_document(rng, n, cfg.max_tokens, dim);
    let label = |rng: &mut R| rng.random_range(0..classes) as i64;
    let targets = match task {
        Task::Sentence => {
            let mut l: Vec<i64> = (0..n)
                .map(|_| if rng.random_bool(0.2) { -1 } else { label(rng) })
                .collect();
            if l.iter().all(|&x| x == -1) {
                l[0] = label(rng);
            }
            Targets::Sentence(l)
        }
        Task::Pair => {
            let count = rng.random_range(1..=3);
            Targets::Pair(
                (0..count)
                    .map(|_| (rng.random_range(0..n), rng.random_range(0..n), label(rng)))
                    .collect(),
            )
        }
    };
    (model, doc, targets)
}

pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if cfg.trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::config("tol", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst: Option<Worst> = None;
    let mut coordinates = 0;
    for trial in 0..cfg.trials {
        let (model, doc, targets) = instance(&mut rng, trial, cfg);
        let (_, grad) = model
            .loss_and_grad(&doc, &targets, None)?
            .expect("instance has a labeled item");
        let objective = |m: &Model| {
            reference::loss::<DoubleDouble>(m, &doc, &targets, None)
                .unwrap_or(DoubleDouble::new(f64::NAN))
        };
        let numeric = finite_difference(objective, &model, cfg.eps)?;
        let names = model.tensor_names();
        for ((name, a), n) in names.iter().zip(grad.tensors()).zip(numeric.tensors()) {
            for (index, (&av, &nv)) in a.iter().zip(n).enumerate() {
                coordinates += 1;
                let av = av * cfg.grad_scale;
                let err = relative_error(av, nv);
                if worst.as_ref().is_none_or(|w| err > w.rel_error) {
                    worst = Some(Worst {
                        trial,
                        variant: model.variant,
                        task: model.head.task,
                        tensor: name.clone(),
                        index,
                        analytic: av,
                        numeric: nv,
                        rel_error: err,
                    });
                }
            }
        }
    }
    let max_rel_error = worst.as_ref().map_or(0.0, |w| w.rel_error);
    Ok(GradcheckReport {
        trials: cfg.trials,
        coordinates,
        tol: cfg.tol,
        max_rel_error,
        worst,
        passed: max_rel_error <= cfg.tol,
    })
}
