//! JSON run configuration. Every key is optional; command-line flags win
//! over file values, and file values win over built-in defaults.

use std::path::{Path, PathBuf};

use limnet::data::SyntheticConfig;
use limnet::heads::Task;
use limnet::training::TrainConfig;
use limnet::Variant;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_FRACTIONS: [f64; 3] = [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0];

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub synth: Option<SyntheticConfig>,
    pub split: SplitConfig,
    pub train: TrainOverrides,
    pub data: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub params: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            fractions: DEFAULT_FRACTIONS,
            seed: 0,
        }
    }
}

/// Partial [`TrainConfig`]; unset fields fall back to the task defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOverrides {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub dropout_rate: Option<f64>,
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub task: Option<Task>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub scorer_hidden: Option<usize>,
    pub head_hidden: Option<Vec<usize>>,
    pub grad_accumulation: Option<usize>,
    pub seeds: Option<usize>,
}

impl TrainOverrides {
    /// `self` on top of `base`, field by field.
    pub fn over(self, base: TrainOverrides) -> TrainOverrides {
        TrainOverrides {
            learning_rate: self.learning_rate.or(base.learning_rate),
            epochs: self.epochs.or(base.epochs),
            dropout_rate: self.dropout_rate.or(base.dropout_rate),
            seed: self.seed.or(base.seed),
            variant: self.variant.or(base.variant),
            task: self.task.or(base.task),
            adam_beta1: self.adam_beta1.or(base.adam_beta1),
            adam_beta2: self.adam_beta2.or(base.adam_beta2),
            adam_eps: self.adam_eps.or(base.adam_eps),
            scorer_hidden: self.scorer_hidden.or(base.scorer_hidden),
            head_hidden: self.head_hidden.or(base.head_hidden),
            grad_accumulation: self.grad_accumulation.or(base.grad_accumulation),
            seeds: self.seeds.or(base.seeds),
        }
    }

    pub fn resolve(&self, task: Task) -> TrainConfig {
        let d = TrainConfig::for_task(task);
        TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            epochs: self.epochs.unwrap_or(d.epochs),
            dropout_rate: self.dropout_rate.unwrap_or(d.dropout_rate),
            seed: self.seed.unwrap_or(d.seed),
            variant: self.variant.unwrap_or(d.variant),
            task,
            adam_beta1: self.adam_beta1.unwrap_or(d.adam_beta1),
            adam_beta2: self.adam_beta2.unwrap_or(d.adam_beta2),
            adam_eps: self.adam_eps.unwrap_or(d.adam_eps),
            scorer_hidden: self.scorer_hidden.unwrap_or(d.scorer_hidden),
            head_hidden: self.head_hidden.clone().unwrap_or(d.head_hidden),
            grad_accumulation: self.grad_accumulation.unwrap_or(d.grad_accumulation),
        }
    }
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(CliConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
    }
}
