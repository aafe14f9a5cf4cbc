//! Two learnable self-attention modules over frozen token embeddings.
//!
//! Each sentence gets a local embedding (attention pooling over its own
//! tokens) plus a global shift (attention over every token of the document,
//! scored relative to that local embedding). The sum feeds a small task head.
//! Every representation the encoder produces is a linear combination of the
//! input token vectors.

pub mod data;
pub mod encoder;
pub mod error;
pub mod extended;
pub mod gradcheck;
pub mod heads;
pub mod math;
pub mod metrics;
pub mod model;
pub mod reference;
pub mod testing;
pub mod training;

pub use encoder::{encode, DocumentEmbeddings, EncoderOutput, EncoderParams, Variant};
pub use error::{Error, Result};
pub use math::{Matrix, Params, ScorerParams};
