//! Local sentence embeddings, global sentence shifts and their sum.
//!
//! For sentence `i` with tokens `W[i][j]`:
//!
//! ```text
//! a_local[i][j]    = softmax_j  score_L(W[i][j])
//! L[i]             = sum_j a_local[i][j] W[i][j]
//! a_global[k][i,j] = softmax_ij score_G(W[i][j] - L[k])
//! G[k]             = sum_ij a_global[k][i,j] W[i][j]
//! M[k]             = L[k] + G[k]
//! ```
//!
//! `G[k]` weights the original token vectors, not the differences, and the
//! global softmax runs over every token of the document including sentence
//! `k`'s own. Both `L` and `G` are convex combinations of token vectors, so
//! `M` always lies in their span.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{
    axpy, check_dim, Params, scorer_backward_into, scorer_forward, softmax, softmax_backward, Matrix,
    ScorerParams,
};

/// Frozen token embeddings of one document, one matrix (tokens × dim) per sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentEmbeddings {
    pub doc_id: String,
    pub dim: usize,
    pub sentences: Vec<Matrix>,
}

impl DocumentEmbeddings {
    pub fn new(doc_id: impl Into<String>, dim: usize, sentences: Vec<Matrix>) -> Result<Self> {
        let doc = DocumentEmbeddings {
            doc_id: doc_id.into(),
            dim,
            sentences,
        };
        doc.validate()?;
        Ok(doc)
    }

    /// Builds a document from nested token lists.
    pub fn from_tokens(doc_id: impl Into<String>, sentences: &[Vec<Vec<f64>>]) -> Result<Self> {
        let dim = sentences
            .first()
            .and_then(|s| s.first())
            .map_or(0, Vec::len);
        let mats = sentences
            .iter()
            .map(|s| Matrix::from_rows(s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(doc_id, dim, mats)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sentences.is_empty() {
            return Err(Error::InvalidDocument(format!(
                "document `{}` has no sentences",
                self.doc_id
            )));
        }
        if self.dim == 0 {
            return Err(Error::InvalidDocument("embedding dimension is zero".into()));
        }
        for (i, s) in self.sentences.iter().enumerate() {
            if s.rows == 0 {
                return Err(Error::InvalidDocument(format!(
                    "sentence {i} of `{}` has no tokens",
                    self.doc_id
                )));
            }
            check_dim(self.dim, s.cols)?;
            if s.data.len() != s.rows * s.cols {
                return Err(Error::Shape(format!("sentence {i} storage")));
            }
            if !crate::math::all_finite(&s.data) {
                return Err(Error::NonFinite(format!(
                    "token embedding in sentence {i} of `{}`",
                    self.doc_id
                )));
            }
        }
        Ok(())
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(|s| s.rows).sum()
    }

    /// All tokens of the document in sentence-major order.
    pub fn tokens(&self) -> impl Iterator<Item = &[f64]> {
        self.sentences.iter().flat_map(|s| s.iter_rows())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    NoGlobal,
    NoLocal,
    NoEither,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoGlobal,
        Variant::NoLocal,
        Variant::NoEither,
    ];

    pub fn uses_local_attention(self) -> bool {
        matches!(self, Variant::Full | Variant::NoGlobal)
    }

    pub fn uses_global_shift(self) -> bool {
        matches!(self, Variant::Full | Variant::NoLocal)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoGlobal => "no-global",
            Variant::NoLocal => "no-local",
            Variant::NoEither => "no-either",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::config("variant", format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub local_scorer: ScorerParams,
    pub global_scorer: ScorerParams,
}

pub type EncoderGrad = EncoderParams;

impl EncoderParams {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        EncoderParams {
            local_scorer: ScorerParams::zeros(dim, hidden),
            global_scorer: ScorerParams::zeros(dim, hidden),
        }
    }

    pub fn init<R: rand::Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        EncoderParams {
            local_scorer: ScorerParams::init(dim, hidden, rng),
            global_scorer: ScorerParams::init(dim, hidden, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.local_scorer.input_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.local_scorer.validate()?;
        self.global_scorer.validate()?;
        check_dim(self.local_scorer.input_dim(), self.global_scorer.input_dim())
    }

}

impl Params for EncoderParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.local_scorer.tensors();
        t.extend(self.global_scorer.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.local_scorer.tensors_mut();
        t.extend(self.global_scorer.tensors_mut());
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub local: Vec<Vec<f64>>,
    pub shifts: Vec<Vec<f64>>,
    pub mixed: Vec<Vec<f64>>,
    /// One row per sentence, one weight per token of that sentence.
    pub alpha_local: Vec<Vec<f64>>,
    /// One row per target sentence, one weight per document token in
    /// sentence-major order. Empty when the variant has no global shift.
    pub alpha_global: Vec<Vec<f64>>,
}

fn weighted_sum<'a>(weights: &[f64], vectors: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (w, v) in weights.iter().zip(vectors) {
        axpy(&mut out, *w, v);
    }
    out
}

fn local_sentence(sentence: &Matrix, scorer: &ScorerParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let scores = sentence
        .iter_rows()
        .map(|w| scorer_forward(scorer, w))
        .collect::<Result<Vec<_>>>()?;
    let alpha = softmax(&scores)?;
    let l = weighted_sum(&alpha, sentence.iter_rows(), sentence.cols);
    Ok((l, alpha))
}

fn average_pool(sentence: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let mut sum = vec![0.0; sentence.cols];
    for w in sentence.iter_rows() {
        axpy(&mut sum, 1.0, w);
    }
    let n = sentence.rows as f64;
    sum.iter_mut().for_each(|v| *v /= n);
    (sum, vec![1.0 / n; sentence.rows])
}

fn global_target(
    doc: &DocumentEmbeddings,
    local_k: &[f64],
    scorer: &ScorerParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut diff = vec![0.0; doc.dim];
    let scores = doc
        .tokens()
        .map(|w| {
            for ((d, a), b) in diff.iter_mut().zip(w).zip(local_k) {
                *d = a - b;
            }
            scorer_forward(scorer, &diff)
        })
        .collect::<Result<Vec<_>>>()?;
    let alpha = softmax(&scores)?;
    let g = weighted_sum(&alpha, doc.tokens(), doc.dim);
    Ok((g, alpha))
}

/// Attention-pooled sentence embeddings `L` and their weights.
pub fn local_embed(
    doc: &DocumentEmbeddings,
    e_l: &ScorerParams,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    check_dim(e_l.input_dim(), doc.dim)?;
    let pairs = doc
        .sentences
        .iter()
        .map(|s| local_sentence(s, e_l))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairs.into_iter().unzip())
}

/// Global shifts `G` for every target sentence, given that document's `L`.
pub fn global_shift(
    doc: &DocumentEmbeddings,
    local: &[Vec<f64>],
    e_g: &ScorerParams,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    check_dim(e_g.input_dim(), doc.dim)?;
    if local.len() != doc.num_sentences() {
        return Err(Error::Shape(format!(
            "{} local embeddings for {} sentences",
            local.len(),
            doc.num_sentences()
        )));
    }
    let pairs = local
        .iter()
        .map(|l| {
            check_dim(doc.dim, l.len())?;
            global_target(doc, l, e_g)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairs.into_iter().unzip())
}

fn assemble(
    local: Vec<Vec<f64>>,
    alpha_local: Vec<Vec<f64>>,
    global: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
    dim: usize,
) -> EncoderOutput {
    let (shifts, alpha_global) =
        global.unwrap_or_else(|| (vec![vec![0.0; dim]; local.len()], Vec::new()));
    let mixed = local
        .iter()
        .zip(&shifts)
        .map(|(l, g)| l.iter().zip(g).map(|(a, b)| a + b).collect())
        .collect();
    EncoderOutput {
        local,
        shifts,
        mixed,
        alpha_local,
        alpha_global,
    }
}

fn check_inputs(doc: &DocumentEmbeddings, params: &EncoderParams) -> Result<()> {
    doc.validate()?;
    params.validate()?;
    check_dim(params.dim(), doc.dim)
}

pub fn encode(
    doc: &DocumentEmbeddings,
    params: &EncoderParams,
    variant: Variant,
) -> Result<EncoderOutput> {
    check_inputs(doc, params)?;
    let (local, alpha_local) = if variant.uses_local_attention() {
        local_embed(doc, &params.local_scorer)?
    } else {
        doc.sentences.iter().map(average_pool).unzip()
    };
    let global = if variant.uses_global_shift() {
        Some(global_shift(doc, &local, &params.global_scorer)?)
    } else {
        None
    };
    Ok(assemble(local, alpha_local, global, doc.dim))
}

/// Same result as [`encode`], bit for bit, with sentences processed on the
/// rayon pool. Every output vector is produced by one task with the same
/// summation order as the sequential path.
pub fn encode_parallel(
    doc: &DocumentEmbeddings,
    params: &EncoderParams,
    variant: Variant,
) -> Result<EncoderOutput> {
    check_inputs(doc, params)?;
    let (local, alpha_local): (Vec<_>, Vec<_>) = if variant.uses_local_attention() {
        doc.sentences
            .par_iter()
            .map(|s| local_sentence(s, &params.local_scorer))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip()
    } else {
        doc.sentences.par_iter().map(average_pool).unzip()
    };
    let global = if variant.uses_global_shift() {
        let pairs = local
            .par_iter()
            .map(|l| global_target(doc, l, &params.global_scorer))
            .collect::<Result<Vec<_>>>()?;
        Some(pairs.into_iter().unzip())
    } else {
        None
    };
    Ok(assemble(local, alpha_local, global, doc.dim))
}

/// Scorer gradients of `sum_k <upstream[k], M[k]>`.
pub fn encode_backward(
    doc: &DocumentEmbeddings,
    params: &EncoderParams,
    variant: Variant,
    upstream: &[Vec<f64>],
) -> Result<EncoderGrad> {
    let out = encode(doc, params, variant)?;
    encode_backward_from(doc, params, variant, &out, upstream)
}

/// Backward pass reusing a forward result from [`encode`].
///
/// `E^L` receives gradient along two routes: directly through `L[k]` in
/// `M[k]`, and through `L[k]` inside every global score argument
/// `W[i][j] - L[k]`. Token embeddings are frozen and get no gradient.
pub fn encode_backward_from(
    doc: &DocumentEmbeddings,
    params: &EncoderParams,
    variant: Variant,
    out: &EncoderOutput,
    upstream: &[Vec<f64>],
) -> Result<EncoderGrad> {
    let n = doc.num_sentences();
    let d = doc.dim;
    if upstream.len() != n {
        return Err(Error::Shape(format!(
            "{} upstream gradients for {n} sentences",
            upstream.len()
        )));
    }
    for g in upstream {
        check_dim(d, g.len())?;
    }
    let h = params.local_scorer.hidden();
    let mut grad = EncoderParams {
        local_scorer: ScorerParams::zeros(d, h),
        global_scorer: ScorerParams::zeros(d, params.global_scorer.hidden()),
    };
    if variant == Variant::NoEither {
        return Ok(grad);
    }

    // dM/dL is the identity
    let mut grad_local: Vec<Vec<f64>> = upstream.to_vec();

    if variant.uses_global_shift() {
        let mut diff = vec![0.0; d];
        for k in 0..n {
            let alpha = &out.alpha_global[k];
            let grad_alpha: Vec<f64> = doc
                .tokens()
                .map(|w| crate::math::dot(&upstream[k], w))
                .collect();
            let grad_scores = softmax_backward(alpha, &grad_alpha);
            for (w, &gs) in doc.tokens().zip(&grad_scores) {
                for ((dv, a), b) in diff.iter_mut().zip(w).zip(&out.local[k]) {
                    *dv = a - b;
                }
                let grad_diff =
                    scorer_backward_into(&params.global_scorer, &diff, gs, &mut grad.global_scorer)?;
                // diff = W - L[k]
                axpy(&mut grad_local[k], -1.0, &grad_diff);
            }
        }
    }

    if variant.uses_local_attention() {
        for (i, sentence) in doc.sentences.iter().enumerate() {
            let alpha = &out.alpha_local[i];
            let grad_alpha: Vec<f64> = sentence
                .iter_rows()
                .map(|w| crate::math::dot(&grad_local[i], w))
                .collect();
            let grad_scores = softmax_backward(alpha, &grad_alpha);
            for (w, &gs) in sentence.iter_rows().zip(&grad_scores) {
                scorer_backward_into(&params.local_scorer, w, gs, &mut grad.local_scorer)?;
            }
        }
    }
    Ok(grad)
}
