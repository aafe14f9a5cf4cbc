//! Encoder plus head, per-document loss and gradients, and the binary
//! parameter file.
//!
//! Parameter file layout (little-endian):
//!
//! ```text
//! "LIMP" version:u32 variant:u32 task:u32 dim:u32 scorer_hidden:u32 classes:u32
//! head_hidden_count:u32 head_hidden_width:u32[head_hidden_count]
//! f64 tensors: local scorer (w1 b1 w2 b2), global scorer (same), head layers (weight bias)...
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Targets;
use crate::encoder::{encode, encode_backward_from, DocumentEmbeddings, EncoderParams, Variant};
use crate::error::{Error, Result};
use crate::heads::{cross_entropy, pair_input, Head, Task};
use crate::math::{check_dim, Params};
use crate::metrics::UNLABELED;

pub const MAGIC: &[u8; 4] = b"LIMP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub variant: Variant,
    pub encoder: EncoderParams,
    pub head: Head,
}

pub type ModelGrad = Model;

/// Shape of a model, independent of its values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub variant: Variant,
    pub task: Task,
    pub dim: usize,
    pub scorer_hidden: usize,
    pub classes: usize,
    pub head_hidden: Vec<usize>,
}

/// One scored item of a document: its gold label and the predicted class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub gold: i64,
    pub predicted: usize,
}

impl Model {
    pub fn init<R: Rng + ?Sized>(shape: &ModelShape, rng: &mut R) -> Self {
        let encoder = EncoderParams::init(shape.dim, shape.scorer_hidden, rng);
        let head = Head::init(shape.task, shape.dim, shape.classes, &shape.head_hidden, rng);
        Model {
            variant: shape.variant,
            encoder,
            head,
        }
    }

    pub fn zeros(shape: &ModelShape) -> Self {
        Model {
            variant: shape.variant,
            encoder: EncoderParams::zeros(shape.dim, shape.scorer_hidden),
            head: Head::zeros(shape.task, shape.dim, shape.classes, &shape.head_hidden),
        }
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            variant: self.variant,
            task: self.head.task,
            dim: self.encoder.dim(),
            scorer_hidden: self.encoder.local_scorer.hidden(),
            classes: self.head.num_classes(),
            head_hidden: self.head.hidden_widths(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Model::zeros(&self.shape())
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.head.validate()?;
        check_dim(self.encoder.dim(), self.head.embedding_dim())
    }

    /// Names of the learnable tensors, in [`Params::tensors`] order.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let scorer = ["w1", "b1", "w2", "b2"];
        if self.variant.uses_local_attention() {
            names.extend(scorer.iter().map(|t| format!("local.{t}")));
        }
        if self.variant.uses_global_shift() {
            names.extend(scorer.iter().map(|t| format!("global.{t}")));
        }
        for i in 0..self.head.layers.len() {
            names.push(format!("head.{i}.weight"));
            names.push(format!("head.{i}.bias"));
        }
        names
    }

    fn head_inputs(
        &self,
        mixed: &[Vec<f64>],
        targets: &Targets,
    ) -> Result<Vec<(Vec<f64>, i64, usize, Option<usize>)>> {
        match (self.head.task, targets) {
            (Task::Sentence, Targets::Sentence(labels)) => {
                check_dim(mixed.len(), labels.len())?;
                Ok(labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| l != UNLABELED)
                    .map(|(k, &l)| (mixed[k].clone(), l, k, None))
                    .collect())
            }
            (Task::Pair, Targets::Pair(pairs)) => pairs
                .iter()
                .filter(|p| p.2 != UNLABELED)
                .map(|&(a, b, l)| {
                    if a >= mixed.len() || b >= mixed.len() {
                        return Err(Error::Labels(format!(
                            "pair ({a}, {b}) outside {} sentences",
                            mixed.len()
                        )));
                    }
                    Ok((pair_input(&mixed[a], &mixed[b])?, l, a, Some(b)))
                })
                .collect(),
            _ => Err(Error::Labels(format!(
                "targets do not match a {} head",
                self.head.task
            ))),
        }
    }

    /// Predictions for every labeled item, eval mode.
    pub fn predict(&self, doc: &DocumentEmbeddings, targets: &Targets) -> Result<Vec<Prediction>> {
        let out = encode(doc, &self.encoder, self.variant)?;
        self.head_inputs(&out.mixed, targets)?
            .into_iter()
            .map(|(x, gold, _, _)| {
                Ok(Prediction {
                    gold,
                    predicted: self.head.forward(&x)?.argmax(),
                })
            })
            .collect()
    }

    /// Mean cross-entropy over labeled items, eval mode. `None` when the
    /// document has no labeled items.
    pub fn loss(&self, doc: &DocumentEmbeddings, targets: &Targets) -> Result<Option<f64>> {
        Ok(self.loss_and_grad(doc, targets, None)?.map(|(l, _)| l))
    }

    /// Mean cross-entropy over labeled items and its gradient.
    ///
    /// `masks`, when given, holds one multiplicative dropout mask per
    /// sentence, applied to `M[k]` before the head.
    pub fn loss_and_grad(
        &self,
        doc: &DocumentEmbeddings,
        targets: &Targets,
        masks: Option<&[Vec<f64>]>,
    ) -> Result<Option<(f64, ModelGrad)>> {
        let out = encode(doc, &self.encoder, self.variant)?;
        let mixed: Vec<Vec<f64>> = match masks {
            Some(m) => {
                check_dim(out.mixed.len(), m.len())?;
                out.mixed
                    .iter()
                    .zip(m)
                    .map(|(v, mask)| v.iter().zip(mask).map(|(a, b)| a * b).collect())
                    .collect()
            }
            None => out.mixed.clone(),
        };
        let items = self.head_inputs(&mixed, targets)?;
        if items.is_empty() {
            return Ok(None);
        }
        let scale = 1.0 / items.len() as f64;
        let d = self.dim();
        let mut grad = self.zeros_like();
        let mut grad_mixed = vec![vec![0.0; d]; mixed.len()];
        let mut total = 0.0;
        for (x, label, a, b) in items {
            let label = usize::try_from(label).map_err(|_| Error::LabelOutOfRange {
                label,
                classes: self.head.num_classes(),
            })?;
            let (logits, acts) = self.head.forward_cached(&x)?;
            let (loss, mut gl) = cross_entropy(&logits, label)?;
            total += loss;
            gl.iter_mut().for_each(|g| *g *= scale);
            let gx = self.head.backward(&acts, &gl, &mut grad.head)?;
            let (first, second) = gx.split_at(d);
            grad_mixed[a]
                .iter_mut()
                .zip(first)
                .for_each(|(g, v)| *g += v);
            if let Some(b) = b {
                grad_mixed[b]
                    .iter_mut()
                    .zip(second)
                    .for_each(|(g, v)| *g += v);
            }
        }
        if let Some(m) = masks {
            for (g, mask) in grad_mixed.iter_mut().zip(m) {
                g.iter_mut().zip(mask).for_each(|(a, b)| *a *= b);
            }
        }
        grad.encoder = encode_backward_from(doc, &self.encoder, self.variant, &out, &grad_mixed)?;
        Ok(Some((total * scale, grad)))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let shape = self.shape();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let variant = Variant::ALL.iter().position(|&v| v == self.variant).unwrap();
        let task = match shape.task {
            Task::Sentence => 0,
            Task::Pair => 1,
        };
        let mut header = vec![
            VERSION as usize,
            variant,
            task,
            shape.dim,
            shape.scorer_hidden,
            shape.classes,
            shape.head_hidden.len(),
        ];
        header.extend(&shape.head_hidden);
        for v in header {
            let v = u32::try_from(v).map_err(|_| Error::Shape(format!("{v} exceeds u32")))?;
            out.extend_from_slice(&v.to_le_bytes());
        }
        for t in self.all_tensors() {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize, what: &str| -> Result<&[u8]> {
            if bytes.len() - pos < n {
                return Err(Error::format(format!("truncated {what}"), pos));
            }
            pos += n;
            Ok(&bytes[pos - n..pos])
        };
        if take(4, "magic")? != MAGIC {
            return Err(Error::format("bad magic", 0));
        }
        let mut read_u32 = |what: &str| -> Result<usize> {
            Ok(u32::from_le_bytes(take(4, what)?.try_into().unwrap()) as usize)
        };
        let version = read_u32("version")?;
        if version != VERSION as usize {
            return Err(Error::format(format!("unsupported version {version}"), 4));
        }
        let variant = *Variant::ALL
            .get(read_u32("variant")?)
            .ok_or_else(|| Error::format("unknown variant", 8))?;
        let task = match read_u32("task")? {
            0 => Task::Sentence,
            1 => Task::Pair,
            _ => return Err(Error::format("unknown task", 12)),
        };
        let dim = read_u32("dim")?;
        let scorer_hidden = read_u32("scorer hidden size")?;
        let classes = read_u32("class count")?;
        let layers = read_u32("head layer count")?;
        if layers > 64 {
            return Err(Error::format("implausible head layer count", 28));
        }
        let head_hidden = (0..layers)
            .map(|_| read_u32("head width"))
            .collect::<Result<Vec<_>>>()?;
        let shape = ModelShape {
            variant,
            task,
            dim,
            scorer_hidden,
            classes,
            head_hidden,
        };
        let mut model = Model::zeros(&shape);
        let header_len = 32 + 4 * layers;
        let expected = header_len + 8 * model.all_tensors().iter().map(|t| t.len()).sum::<usize>();
        if bytes.len() != expected {
            return Err(Error::format(
                format!("parameter file is {} bytes, shape implies {expected}", bytes.len()),
                header_len,
            ));
        }
        let mut values = bytes[header_len..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for t in model.all_tensors_mut() {
            for v in t.iter_mut() {
                *v = values.next().expect("length checked");
            }
        }
        model.validate()?;
        Ok(model)
    }

    fn all_tensors(&self) -> Vec<&[f64]> {
        let mut t = self.encoder.tensors();
        t.extend(self.head.tensors());
        t
    }

    fn all_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.encoder.tensors_mut();
        t.extend(self.head.tensors_mut());
        t
    }
}

/// Learnable tensors only: a scorer the variant does not use is frozen.
impl Params for Model {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = Vec::new();
        if self.variant.uses_local_attention() {
            t.extend(self.encoder.local_scorer.tensors());
        }
        if self.variant.uses_global_shift() {
            t.extend(self.encoder.global_scorer.tensors());
        }
        t.extend(self.head.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = Vec::new();
        if self.variant.uses_local_attention() {
            t.extend(self.encoder.local_scorer.tensors_mut());
        }
        if self.variant.uses_global_shift() {
            t.extend(self.encoder.global_scorer.tensors_mut());
        }
        t.extend(self.head.tensors_mut());
        t
    }
}

impl Model {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes =
            std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

/// Learnable parameter count in closed form.
pub fn closed_form_param_count(shape: &ModelShape) -> usize {
    let (d, h, c) = (shape.dim, shape.scorer_hidden, shape.classes);
    let scorer = h * d + h + h + 1;
    let scorers = usize::from(shape.variant.uses_local_attention())
        + usize::from(shape.variant.uses_global_shift());
    let mut input = shape.task.input_dim(d);
    let mut head = 0;
    for &w in &shape.head_hidden {
        head += w * input + w;
        input = w;
    }
    head += c * input + c;
    scorers * scorer + head
}
