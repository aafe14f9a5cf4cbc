//! JSON-lines label files.
//!
//! The first line is a header `{"task": "sentence"|"pair", "num_classes": C}`.
//! Each following line labels one document:
//!
//! ```text
//! {"doc_id": "...", "labels": [l_0, l_1, ...]}           sentence task
//! {"doc_id": "...", "pairs": [[i, j, label], ...]}        pair task, explicit pairs
//! {"doc_id": "...", "labels": [l_01, l_12, ...]}          pair task, adjacent pairs
//! ```
//!
//! `-1` marks an unlabeled position.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::format::Corpus;
use crate::encoder::DocumentEmbeddings;
use crate::error::{Error, Result};
use crate::heads::Task;
use crate::metrics::UNLABELED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelHeader {
    pub task: Task,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocLabels {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<[i64; 3]>>,
}

/// Labels resolved against a concrete document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Targets {
    /// One entry per sentence.
    Sentence(Vec<i64>),
    /// `(first, second, label)` sentence-index triples.
    Pair(Vec<(usize, usize, i64)>),
}

impl Targets {
    pub fn gold(&self) -> Vec<i64> {
        match self {
            Targets::Sentence(l) => l.clone(),
            Targets::Pair(p) => p.iter().map(|t| t.2).collect(),
        }
    }

    pub fn labeled_count(&self) -> usize {
        self.gold().iter().filter(|&&l| l != UNLABELED).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub header: LabelHeader,
    pub docs: Vec<DocLabels>,
}

impl LabelSet {
    pub fn task(&self) -> Task {
        self.header.task
    }

    pub fn num_classes(&self) -> usize {
        self.header.num_classes
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::Labels("missing header line".into()))?;
        let header: LabelHeader = serde_json::from_str(first)
            .map_err(|e| Error::Labels(format!("line 1: {e}")))?;
        if header.num_classes < 2 {
            return Err(Error::Labels(format!(
                "num_classes must be at least 2, got {}",
                header.num_classes
            )));
        }
        let mut docs = Vec::new();
        for (i, line) in lines {
            let d: DocLabels = serde_json::from_str(line)
                .map_err(|e| Error::Labels(format!("line {}: {e}", i + 1)))?;
            docs.push(d);
        }
        let set = LabelSet { header, docs };
        set.check_ranges()?;
        Ok(set)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for d in &self.docs {
            out.push_str(&serde_json::to_string(d).expect("labels serialize"));
            out.push('\n');
        }
        out
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn check_label(&self, doc_id: &str, l: i64) -> Result<()> {
        if l < UNLABELED || l >= self.header.num_classes as i64 {
            return Err(Error::Labels(format!(
                "document `{doc_id}`: label {l} outside [-1, {})",
                self.header.num_classes
            )));
        }
        Ok(())
    }

    fn check_ranges(&self) -> Result<()> {
        for d in &self.docs {
            match (self.header.task, &d.labels, &d.pairs) {
                (_, Some(_), Some(_)) => {
                    return Err(Error::Labels(format!(
                        "document `{}` has both `labels` and `pairs`",
                        d.doc_id
                    )))
                }
                (_, None, None) => {
                    return Err(Error::Labels(format!(
                        "document `{}` has no labels",
                        d.doc_id
                    )))
                }
                (Task::Sentence, None, Some(_)) => {
                    return Err(Error::Labels(format!(
                        "document `{}`: `pairs` given for a sentence task",
                        d.doc_id
                    )))
                }
                (_, Some(l), None) => {
                    for &x in l {
                        self.check_label(&d.doc_id, x)?;
                    }
                }
                (Task::Pair, None, Some(p)) => {
                    for t in p {
                        self.check_label(&d.doc_id, t[2])?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Targets for one document, checked against its sentence count.
    pub fn targets_for(&self, doc: &DocumentEmbeddings) -> Result<Targets> {
        let entry = self
            .docs
            .iter()
            .find(|d| d.doc_id == doc.doc_id)
            .ok_or_else(|| Error::Labels(format!("no labels for document `{}`", doc.doc_id)))?;
        resolve(self.header.task, entry, doc.num_sentences())
    }

    /// Targets for every document of `corpus`, in corpus order.
    pub fn align(&self, corpus: &Corpus) -> Result<Vec<Targets>> {
        let index: HashMap<&str, &DocLabels> =
            self.docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
        corpus
            .docs
            .iter()
            .map(|doc| {
                let entry = index.get(doc.doc_id.as_str()).ok_or_else(|| {
                    Error::Labels(format!("no labels for document `{}`", doc.doc_id))
                })?;
                resolve(self.header.task, entry, doc.num_sentences())
            })
            .collect()
    }
}

fn resolve(task: Task, entry: &DocLabels, n: usize) -> Result<Targets> {
    let id = &entry.doc_id;
    match task {
        Task::Sentence => {
            let l = entry.labels.as_ref().expect("checked at parse time");
            if l.len() != n {
                return Err(Error::Labels(format!(
                    "document `{id}` has {n} sentences but {} labels",
                    l.len()
                )));
            }
            Ok(Targets::Sentence(l.clone()))
        }
        Task::Pair => {
            if let Some(l) = &entry.labels {
                if l.len() + 1 != n {
                    return Err(Error::Labels(format!(
                        "document `{id}` has {n} sentences but {} adjacent-pair labels",
                        l.len()
                    )));
                }
                return Ok(Targets::Pair(
                    l.iter().enumerate().map(|(k, &y)| (k, k + 1, y)).collect(),
                ));
            }
            let pairs = entry.pairs.as_ref().expect("checked at parse time");
            pairs
                .iter()
                .map(|&[i, j, y]| {
                    let valid = |x: i64| x >= 0 && (x as usize) < n;
                    if !valid(i) || !valid(j) {
                        return Err(Error::Labels(format!(
                            "document `{id}`: pair ({i}, {j}) outside {n} sentences"
                        )));
                    }
                    Ok((i as usize, j as usize, y))
                })
                .collect::<Result<Vec<_>>>()
                .map(Targets::Pair)
        }
    }
}
