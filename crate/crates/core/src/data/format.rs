//! Binary embedding file.
//!
//! ```text
//! "LIMD"  version:u32  dim:u32  doc_count:u32
//! per doc:      id_len:u32  id:utf8[id_len]  sent_count:u32
//! per sentence: tok_count:u32  f32[tok_count * dim]
//! ```
//!
//! All integers and floats little-endian. Readers reject anything that does
//! not account for every byte.

use crate::encoder::DocumentEmbeddings;
use crate::error::{Error, Result};
use crate::math::Matrix;

pub const MAGIC: &[u8; 4] = b"LIMD";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub dim: usize,
    pub docs: Vec<DocumentEmbeddings>,
}

impl Corpus {
    pub fn new(dim: usize, docs: Vec<DocumentEmbeddings>) -> Result<Self> {
        let c = Corpus { dim, docs };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidDocument("embedding dimension is zero".into()));
        }
        for d in &self.docs {
            if d.dim != self.dim {
                return Err(Error::DimMismatch {
                    expected: self.dim,
                    actual: d.dim,
                });
            }
            d.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Shape(format!("count {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

/// Serializes a corpus. Token values are stored as `f32`.
pub fn write_embeddings(corpus: &Corpus) -> Result<Vec<u8>> {
    corpus.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize)?;
    put_u32(&mut out, corpus.dim)?;
    put_u32(&mut out, corpus.docs.len())?;
    for doc in &corpus.docs {
        put_u32(&mut out, doc.doc_id.len())?;
        out.extend_from_slice(doc.doc_id.as_bytes());
        put_u32(&mut out, doc.sentences.len())?;
        for s in &doc.sentences {
            put_u32(&mut out, s.rows)?;
            for &v in &s.data {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(
                format!(
                    "truncated {what}: need {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
                self.pos,
            )),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

pub fn read_embeddings(bytes: &[u8]) -> Result<Corpus> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format("bad magic", 0));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported version {version}"), 4));
    }
    let dim_at = cur.pos;
    let dim = cur.u32("dim")? as usize;
    if dim == 0 {
        return Err(Error::format("zero dimension", dim_at));
    }
    let doc_count = cur.u32("doc count")? as usize;
    let mut docs = Vec::with_capacity(doc_count.min(1 << 16));
    for _ in 0..doc_count {
        let id_len = cur.u32("document id length")? as usize;
        let id_at = cur.pos;
        let id = std::str::from_utf8(cur.take(id_len, "document id")?)
            .map_err(|_| Error::format("document id is not UTF-8", id_at))?
            .to_string();
        let sent_at = cur.pos;
        let sent_count = cur.u32("sentence count")? as usize;
        if sent_count == 0 {
            return Err(Error::format("zero sentence count", sent_at));
        }
        let mut sentences = Vec::with_capacity(sent_count.min(1 << 16));
        for _ in 0..sent_count {
            let tok_at = cur.pos;
            let tok_count = cur.u32("token count")? as usize;
            if tok_count == 0 {
                return Err(Error::format("zero token count", tok_at));
            }
            let n = tok_count
                .checked_mul(dim)
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::format("token block size overflows", tok_at))?;
            let block_at = cur.pos;
            let raw = cur.take(n, "token block")?;
            let data: Vec<f64> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect();
            if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
                return Err(Error::format("non-finite embedding value", block_at + 4 * bad));
            }
            sentences.push(Matrix {
                rows: tok_count,
                cols: dim,
                data,
            });
        }
        docs.push(DocumentEmbeddings {
            doc_id: id,
            dim,
            sentences,
        });
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(
            format!("{} trailing bytes", bytes.len() - cur.pos),
            cur.pos,
        ));
    }
    Ok(Corpus { dim, docs })
}

pub fn read_embeddings_file(path: &std::path::Path) -> Result<Corpus> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_embeddings(&bytes)
}

pub fn write_embeddings_file(path: &std::path::Path, corpus: &Corpus) -> Result<()> {
    std::fs::write(path, write_embeddings(corpus)?)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
