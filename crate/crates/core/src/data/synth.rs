//! Planted synthetic corpus where content labels need document context.
//!
//! Each document draws a topic `z`. Its first sentence is an indicator whose
//! tokens scatter around the topic centroid `nu[z]`; every other sentence
//! draws a cluster `c` and its tokens scatter around `mu[c]`. A content
//! sentence is labeled `(c + z) mod K`, indicators are unlabeled. Because
//! `z` is invisible from a content sentence's own tokens, any sentence-local
//! predictor is capped at accuracy `1/T`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::format::Corpus;
use super::labels::{DocLabels, LabelHeader, LabelSet};
use crate::encoder::DocumentEmbeddings;
use crate::error::{Error, Result};
use crate::heads::Task;
use crate::math::{dot, Matrix};
use crate::metrics::UNLABELED;

const CENTROID_STREAM: u64 = 0;
const DOCUMENT_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub num_docs: usize,
    /// Inclusive sentence-count range, indicator included.
    pub sentences: [usize; 2],
    /// Inclusive token-count range per sentence.
    pub tokens: [usize; 2],
    pub noise_sigma: f64,
    pub clusters: usize,
    pub topics: usize,
    pub task: Task,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            dim: 16,
            num_docs: 300,
            sentences: [3, 6],
            tokens: [3, 8],
            noise_sigma: 0.1,
            clusters: 2,
            topics: 2,
            task: Task::Sentence,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::config("dim", "must be at least 2"));
        }
        if self.num_docs == 0 {
            return Err(Error::config("num_docs", "must be at least 1"));
        }
        if self.sentences[0] < 2 || self.sentences[0] > self.sentences[1] {
            return Err(Error::config(
                "sentences",
                "range must satisfy 2 <= min <= max (one indicator plus content)",
            ));
        }
        if self.task == Task::Pair && self.sentences[0] < 3 {
            return Err(Error::config(
                "sentences",
                "pair task needs at least two content sentences per document",
            ));
        }
        if self.tokens[0] < 1 || self.tokens[0] > self.tokens[1] {
            return Err(Error::config("tokens", "range must satisfy 1 <= min <= max"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma", "must be finite and >= 0"));
        }
        if self.clusters < 2 {
            return Err(Error::config("clusters", "must be at least 2"));
        }
        if self.topics < 1 {
            return Err(Error::config("topics", "must be at least 1"));
        }
        if self.clusters + self.topics > self.dim {
            return Err(Error::config(
                "dim",
                format!(
                    "{} cannot host {} orthogonal centroids",
                    self.dim,
                    self.clusters + self.topics
                ),
            ));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.clusters
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub labels: LabelSet,
    /// Topic centroids `nu`.
    pub topic_centroids: Vec<Vec<f64>>,
    /// Cluster centroids `mu`.
    pub cluster_centroids: Vec<Vec<f64>>,
    /// Per document topic.
    pub topics: Vec<usize>,
    /// Per document, per sentence cluster (`None` for the indicator).
    pub clusters: Vec<Vec<Option<usize>>>,
}

/// Content label rule.
pub fn content_label(cluster: usize, topic: usize, classes: usize) -> usize {
    (cluster + topic) % classes
}

/// Pair label rule for two content sentences of one document.
pub fn pair_label(first: usize, second: usize, topic: usize, classes: usize) -> usize {
    (first + second + topic) % classes
}

fn to_f32_precision(v: f64) -> f64 {
    v as f32 as f64
}

/// `count` orthonormal vectors from Gram-Schmidt over Gaussian draws,
/// rounded to `f32` precision.
fn orthonormal<R: Rng>(rng: &mut R, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
        .into_iter()
        .map(|b| b.into_iter().map(to_f32_precision).collect())
        .collect()
}

pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let mut centroid_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    centroid_rng.set_stream(CENTROID_STREAM);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(DOCUMENT_STREAM);

    let all = orthonormal(&mut centroid_rng, cfg.topics + cfg.clusters, cfg.dim);
    let topic_centroids = all[..cfg.topics].to_vec();
    let cluster_centroids = all[cfg.topics..].to_vec();
    let noise = Normal::new(0.0, cfg.noise_sigma)
        .map_err(|e| Error::config("noise_sigma", e.to_string()))?;
    let classes = cfg.num_classes();
    let width = cfg.num_docs.to_string().len();

    let mut docs = Vec::with_capacity(cfg.num_docs);
    let mut doc_labels = Vec::with_capacity(cfg.num_docs);
    let mut topics = Vec::with_capacity(cfg.num_docs);
    let mut clusters = Vec::with_capacity(cfg.num_docs);
    for d in 0..cfg.num_docs {
        let topic = rng.random_range(0..cfg.topics);
        let n = rng.random_range(cfg.sentences[0]..=cfg.sentences[1]);
        let mut sentences = Vec::with_capacity(n);
        let mut sent_clusters = Vec::with_capacity(n);
        for i in 0..n {
            let (centre, cluster) = if i == 0 {
                (&topic_centroids[topic], None)
            } else {
                let c = rng.random_range(0..cfg.clusters);
                (&cluster_centroids[c], Some(c))
            };
            let l = rng.random_range(cfg.tokens[0]..=cfg.tokens[1]);
            let mut data = Vec::with_capacity(l * cfg.dim);
            for _ in 0..l {
                for &m in centre {
                    let v = if cfg.noise_sigma > 0.0 {
                        m + noise.sample(&mut rng)
                    } else {
                        m
                    };
                    data.push(to_f32_precision(v));
                }
            }
            sentences.push(Matrix {
                rows: l,
                cols: cfg.dim,
                data,
            });
            sent_clusters.push(cluster);
        }
        let doc_id = format!("synth-{d:0width$}");
        let entry = match cfg.task {
            Task::Sentence => DocLabels {
                doc_id: doc_id.clone(),
                labels: Some(
                    sent_clusters
                        .iter()
                        .map(|c| c.map_or(UNLABELED, |c| content_label(c, topic, classes) as i64))
                        .collect(),
                ),
                pairs: None,
            },
            Task::Pair => DocLabels {
                doc_id: doc_id.clone(),
                labels: None,
                pairs: Some(
                    (1..n - 1)
                        .map(|k| {
                            let (a, b) = (sent_clusters[k].unwrap(), sent_clusters[k + 1].unwrap());
                            [k as i64, k as i64 + 1, pair_label(a, b, topic, classes) as i64]
                        })
                        .collect(),
                ),
            },
        };
        docs.push(DocumentEmbeddings {
            doc_id,
            dim: cfg.dim,
            sentences,
        });
        doc_labels.push(entry);
        topics.push(topic);
        clusters.push(sent_clusters);
    }

    Ok(SyntheticCorpus {
        corpus: Corpus::new(cfg.dim, docs)?,
        labels: LabelSet {
            header: LabelHeader {
                task: cfg.task,
                num_classes: classes,
            },
            docs: doc_labels,
        },
        topic_centroids,
        cluster_centroids,
        topics,
        clusters,
    })
}
