//! Corpus interchange: the binary embedding file, JSON-lines label files,
//! document-level splitting, and the planted synthetic corpus.

pub mod format;
pub mod labels;
pub mod split;
pub mod synth;

pub use format::{read_embeddings, write_embeddings, Corpus};
pub use labels::{DocLabels, LabelSet, Targets};
pub use split::split;
pub use synth::{gen_synthetic, SyntheticConfig, SyntheticCorpus};
