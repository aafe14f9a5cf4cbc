//! Confusion matrices and macro/micro precision, recall and F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gold label marking an unscored position.
pub const UNLABELED: i64 = -1;

/// `counts[gold][pred]`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn add(&mut self, gold: usize, pred: usize) -> Result<()> {
        for l in [gold, pred] {
            if l >= self.classes {
                return Err(Error::LabelOutOfRange {
                    label: l as i64,
                    classes: self.classes,
                });
            }
        }
        self.counts[gold][pred] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.counts[c][c]).sum()
    }

    /// Per-class `(precision, recall, f1)` with 0/0 taken as 0.
    pub fn per_class(&self) -> Vec<(f64, f64, f64)> {
        (0..self.classes)
            .map(|c| {
                let tp = self.counts[c][c] as f64;
                let predicted: u64 = (0..self.classes).map(|g| self.counts[g][c]).sum();
                let gold: u64 = self.counts[c].iter().sum();
                let p = ratio(tp, predicted as f64);
                let r = ratio(tp, gold as f64);
                let f = ratio(2.0 * p * r, p + r);
                (p, r, f)
            })
            .collect()
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Tallies `(gold, pred)` pairs; gold `-1` entries are skipped.
pub fn confusion(gold: &[i64], pred: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if gold.len() != pred.len() {
        return Err(Error::Shape(format!(
            "{} gold labels vs {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (&g, &p) in gold.iter().zip(pred) {
        if g == UNLABELED {
            continue;
        }
        if g < 0 || g as usize >= classes {
            return Err(Error::LabelOutOfRange { label: g, classes });
        }
        cm.add(g as usize, p)?;
    }
    Ok(cm)
}

/// Unweighted mean over all configured classes, including ones absent from gold.
pub fn macro_prf(cm: &ConfusionMatrix) -> (f64, f64, f64) {
    if cm.classes == 0 {
        return (0.0, 0.0, 0.0);
    }
    let per = cm.per_class();
    let n = cm.classes as f64;
    let (p, r, f) = per
        .iter()
        .fold((0.0, 0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1, acc.2 + x.2));
    (p / n, r / n, f / n)
}

/// Micro F1, which for single-label data is accuracy.
pub fn micro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::NoScoredItems);
    }
    Ok(cm.trace() as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub macro_p: f64,
    pub macro_r: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
}

impl Scores {
    /// All four scores; an empty matrix scores zero everywhere.
    pub fn from_confusion(cm: &ConfusionMatrix) -> Self {
        let (macro_p, macro_r, macro_f1) = macro_prf(cm);
        Scores {
            macro_p,
            macro_r,
            macro_f1,
            micro_f1: micro_f1(cm).unwrap_or(0.0),
        }
    }
}
