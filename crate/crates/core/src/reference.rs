//! Straightforward forward pass generic over the scalar type.
//!
//! Written from the definitions with plain loops and no caching, sharing no
//! code with the optimized `f64` path. Instantiated with
//! [`DoubleDouble`](crate::extended::DoubleDouble) it is the objective for
//! finite-difference checks.

use crate::data::Targets;
use crate::encoder::{DocumentEmbeddings, EncoderParams, Variant};
use crate::extended::Real;
use crate::heads::{Head, Task};
use crate::math::{Matrix, ScorerParams};
use crate::metrics::UNLABELED;
use crate::model::Model;

fn lift<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::from_f64(x)).collect()
}

fn affine<T: Real>(w: &Matrix, b: &[f64], x: &[T]) -> Vec<T> {
    (0..w.rows)
        .map(|r| {
            let mut acc = T::from_f64(b[r]);
            for (c, &xc) in x.iter().enumerate() {
                acc = acc + T::from_f64(w.row(r)[c]) * xc;
            }
            acc
        })
        .collect()
}

pub fn scorer<T: Real>(p: &ScorerParams, x: &[T]) -> T {
    let hidden = affine(&p.w1, &p.b1, x);
    let mut s = T::from_f64(p.b2);
    for (h, &w) in hidden.into_iter().zip(&p.w2) {
        s = s + T::from_f64(w) * h.tanh();
    }
    s
}

pub fn softmax<T: Real>(scores: &[T]) -> Vec<T> {
    let m = scores.iter().copied().fold(scores[0], T::max);
    let e: Vec<T> = scores.iter().map(|&s| (s - m).exp()).collect();
    let z = e.iter().copied().fold(T::zero(), |a, b| a + b);
    e.into_iter().map(|v| v / z).collect()
}

/// Attention-weighted sum of `values`, scored on `keys`.
fn attend<T: Real>(p: &ScorerParams, keys: &[Vec<T>], values: &[Vec<T>]) -> Vec<T> {
    let scores: Vec<T> = keys.iter().map(|k| scorer(p, k)).collect();
    let alpha = softmax(&scores);
    let mut out = vec![T::zero(); values[0].len()];
    for (a, v) in alpha.into_iter().zip(values) {
        for (o, &x) in out.iter_mut().zip(v) {
            *o = *o + a * x;
        }
    }
    out
}

fn mean<T: Real>(rows: &[Vec<T>]) -> Vec<T> {
    let n = T::from_f64(rows.len() as f64);
    let mut out = vec![T::zero(); rows[0].len()];
    for r in rows {
        for (o, &x) in out.iter_mut().zip(r) {
            *o = *o + x;
        }
    }
    out.into_iter().map(|v| v / n).collect()
}

/// Mixed sentence embeddings `local + shift` for every sentence.
pub fn encode<T: Real>(
    doc: &DocumentEmbeddings,
    params: &EncoderParams,
    variant: Variant,
) -> Vec<Vec<T>> {
    let sentences: Vec<Vec<Vec<T>>> = doc
        .sentences
        .iter()
        .map(|s| s.iter_rows().map(lift).collect())
        .collect();
    let all: Vec<Vec<T>> = sentences.iter().flatten().cloned().collect();
    sentences
        .iter()
        .map(|tokens| {
            let local = if variant.uses_local_attention() {
                attend(&params.local_scorer, tokens, tokens)
            } else {
                mean(tokens)
            };
            if !variant.uses_global_shift() {
                return local;
            }
            let keys: Vec<Vec<T>> = all
                .iter()
                .map(|w| w.iter().zip(&local).map(|(&a, &b)| a - b).collect())
                .collect();
            let shift = attend(&params.global_scorer, &keys, &all);
            local.into_iter().zip(shift).map(|(a, b)| a + b).collect()
        })
        .collect()
}

pub fn head<T: Real>(head: &Head, input: &[T]) -> Vec<T> {
    let mut x = input.to_vec();
    let last = head.layers.len() - 1;
    for (i, layer) in head.layers.iter().enumerate() {
        x = affine(&layer.weight, &layer.bias, &x);
        if i < last {
            x = x.into_iter().map(T::tanh).collect();
        }
    }
    x
}

pub fn cross_entropy<T: Real>(logits: &[T], label: usize) -> T {
    let m = logits.iter().copied().fold(logits[0], T::max);
    let z = logits
        .iter()
        .fold(T::zero(), |acc, &l| acc + (l - m).exp());
    z.ln() + m - logits[label]
}

/// Mean cross-entropy over labeled items, with optional per-sentence
/// multiplicative masks on the mixed embeddings. `None` when nothing is
/// labeled.
pub fn loss<T: Real>(
    model: &Model,
    doc: &DocumentEmbeddings,
    targets: &Targets,
    masks: Option<&[Vec<f64>]>,
) -> Option<T> {
    let mut mixed = encode::<T>(doc, &model.encoder, model.variant);
    if let Some(masks) = masks {
        for (m, mask) in mixed.iter_mut().zip(masks) {
            for (v, &k) in m.iter_mut().zip(mask) {
                *v = *v * T::from_f64(k);
            }
        }
    }
    let items: Vec<(Vec<T>, i64)> = match (model.head.task, targets) {
        (Task::Sentence, Targets::Sentence(labels)) => labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != UNLABELED)
            .map(|(k, &l)| (mixed[k].clone(), l))
            .collect(),
        (Task::Pair, Targets::Pair(pairs)) => pairs
            .iter()
            .filter(|p| p.2 != UNLABELED)
            .map(|&(a, b, l)| {
                let mut x = mixed[a].clone();
                x.extend_from_slice(&mixed[b]);
                (x, l)
            })
            .collect(),
        _ => return None,
    };
    if items.is_empty() {
        return None;
    }
    let n = T::from_f64(items.len() as f64);
    let total = items.iter().fold(T::zero(), |acc, (x, l)| {
        acc + cross_entropy(&head(&model.head, x), *l as usize)
    });
    Some(total / n)
}
