//! Task predictors over mixed sentence embeddings, and the cross-entropy loss.
//!
//! A head is a stack of affine layers with `tanh` between them. The default
//! is a single affine map; extra hidden layers exist for the overfitting
//! comparison only.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{axpy, check_dim, softmax, Matrix, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// One label per sentence.
    Sentence,
    /// One label per ordered sentence pair; input is `concat(M_a, M_b)`.
    Pair,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Sentence => "sentence",
            Task::Pair => "pair",
        }
    }

    /// Head input width for embedding dimension `dim`.
    pub fn input_dim(self, dim: usize) -> usize {
        match self {
            Task::Sentence => dim,
            Task::Pair => 2 * dim,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentence" => Ok(Task::Sentence),
            "pair" => Ok(Task::Pair),
            _ => Err(Error::config("task", format!("unknown task `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out × in`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Dense {
            weight: Matrix::glorot(output, input, rng),
            bias: vec![0.0; output],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.weight.matvec(x)?;
        y.iter_mut().zip(&self.bias).for_each(|(a, b)| *a += b);
        Ok(y)
    }
}

/// Classifier head. `layers.last()` maps to the `C` class logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub task: Task,
    pub layers: Vec<Dense>,
}

/// Single affine map `C × d`.
pub type SentenceHeadParams = Head;
/// Single affine map `C × 2d`.
pub type PairHeadParams = Head;
pub type HeadGrad = Head;

impl Head {
    /// `hidden` lists the widths of extra tanh layers; empty gives the linear head.
    pub fn init<R: Rng + ?Sized>(
        task: Task,
        dim: usize,
        classes: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut input = task.input_dim(dim);
        for &w in hidden {
            layers.push(Dense::init(input, w, rng));
            input = w;
        }
        layers.push(Dense::init(input, classes, rng));
        Head { task, layers }
    }

    pub fn zeros(task: Task, dim: usize, classes: usize, hidden: &[usize]) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut input = task.input_dim(dim);
        for &w in hidden {
            layers.push(Dense::zeros(input, w));
            input = w;
        }
        layers.push(Dense::zeros(input, classes));
        Head { task, layers }
    }

    pub fn linear(task: Task, weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        let head = Head {
            task,
            layers: vec![Dense { weight, bias }],
        };
        head.validate()?;
        Ok(head)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols
    }

    /// Embedding dimension the head expects.
    pub fn embedding_dim(&self) -> usize {
        match self.task {
            Task::Sentence => self.input_dim(),
            Task::Pair => self.input_dim() / 2,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.rows)
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.weight.rows)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("head has no layers".into()));
        }
        if self.num_classes() < 2 {
            return Err(Error::Shape(format!(
                "head needs at least 2 classes, has {}",
                self.num_classes()
            )));
        }
        if self.task == Task::Pair && self.input_dim() % 2 != 0 {
            return Err(Error::Shape("pair head input width must be even".into()));
        }
        for pair in self.layers.windows(2) {
            check_dim(pair[0].weight.rows, pair[1].weight.cols)?;
        }
        for l in &self.layers {
            check_dim(l.weight.rows, l.bias.len())?;
            check_dim(l.weight.rows * l.weight.cols, l.weight.data.len())?;
        }
        Ok(())
    }

    /// Logits plus the per-layer inputs needed by [`Head::backward`].
    pub fn forward_cached(&self, input: &[f64]) -> Result<(Logits, Vec<Vec<f64>>)> {
        check_dim(self.input_dim(), input.len())?;
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&x)?;
            if i < last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(x);
            x = y;
        }
        Ok((Logits(x), acts))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Logits> {
        Ok(self.forward_cached(input)?.0)
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the head input.
    pub fn backward(
        &self,
        acts: &[Vec<f64>],
        grad_logits: &[f64],
        grad: &mut HeadGrad,
    ) -> Result<Vec<f64>> {
        check_dim(self.num_classes(), grad_logits.len())?;
        let mut upstream = grad_logits.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &acts[i];
            let g = &mut grad.layers[i];
            for (r, &u) in upstream.iter().enumerate() {
                g.bias[r] += u;
                axpy(g.weight.row_mut(r), u, x);
            }
            let mut down = vec![0.0; layer.weight.cols];
            for (r, &u) in upstream.iter().enumerate() {
                axpy(&mut down, u, layer.weight.row(r));
            }
            if i > 0 {
                // x = tanh(previous pre-activation)
                down.iter_mut().zip(x).for_each(|(d, t)| *d *= 1.0 - t * t);
            }
            upstream = down;
        }
        Ok(upstream)
    }
}

impl Params for Head {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Logits(pub Vec<f64>);

impl Logits {
    /// Index of the largest logit; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }
}

pub fn classify_sentence(m: &[f64], head: &SentenceHeadParams) -> Result<Logits> {
    if head.task != Task::Sentence {
        return Err(Error::Shape("expected a sentence head".into()));
    }
    head.forward(m)
}

pub fn pair_input(m_a: &[f64], m_b: &[f64]) -> Result<Vec<f64>> {
    check_dim(m_a.len(), m_b.len())?;
    let mut x = Vec::with_capacity(m_a.len() * 2);
    x.extend_from_slice(m_a);
    x.extend_from_slice(m_b);
    Ok(x)
}

pub fn classify_pair(m_a: &[f64], m_b: &[f64], head: &PairHeadParams) -> Result<Logits> {
    if head.task != Task::Pair {
        return Err(Error::Shape("expected a pair head".into()));
    }
    check_dim(head.embedding_dim(), m_a.len())?;
    head.forward(&pair_input(m_a, m_b)?)
}

/// `-log softmax(logits)[label]` and its gradient `softmax(logits) - onehot(label)`.
pub fn cross_entropy(logits: &Logits, label: usize) -> Result<(f64, Vec<f64>)> {
    let c = logits.0.len();
    if label >= c {
        return Err(Error::LabelOutOfRange {
            label: label as i64,
            classes: c,
        });
    }
    let max = logits.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.0.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let loss = log_z - logits.0[label];
    let mut grad = softmax(&logits.0)?;
    grad[label] -= 1.0;
    Ok((loss, grad))
}
