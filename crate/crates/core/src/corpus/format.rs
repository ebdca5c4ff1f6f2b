//! The `EMBC` corpus file:
//!
//! ```text
//! "EMBC" | version u32 | dim u32 | count u64 | count·dim f32
//! | block count u32 | blocks… | SHA-256 of all preceding bytes
//! ```
//!
//! Label blocks start with a tag byte: `1` speaker ids (`count` × u32),
//! `2` binary attribute (name, `count` × u8 in {0,1}), `3` scalar attribute
//! (name, `count` × f32). Names are u16-length-prefixed UTF-8.

use std::fs;
use std::path::Path;

use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::ndmath::Matrix;

use super::{AttributeValues, EmbeddingCorpus};

pub const CORPUS_MAGIC: &[u8; 4] = b"EMBC";
pub const CORPUS_VERSION: u32 = 1;

const TAG_SPEAKERS: u8 = 1;
const TAG_BINARY: u8 = 2;
const TAG_SCALAR: u8 = 3;

pub(super) fn encode_body(c: &EmbeddingCorpus) -> ByteWriter {
    let mut w = ByteWriter::new();
    w.bytes(CORPUS_MAGIC);
    w.u32(CORPUS_VERSION);
    w.u32(c.dim() as u32);
    w.u64(c.count() as u64);
    w.f32s(c.embeddings.as_slice());
    let blocks = c.speakers.is_some() as u32 + c.attributes.len() as u32;
    w.u32(blocks);
    if let Some(s) = &c.speakers {
        w.u8(TAG_SPEAKERS);
        for &id in s {
            w.u32(id);
        }
    }
    for a in &c.attributes {
        match &a.values {
            AttributeValues::Binary(v) => {
                w.u8(TAG_BINARY);
                w.str(&a.name);
                for &b in v {
                    w.u8(b as u8);
                }
            }
            AttributeValues::Scalar(v) => {
                w.u8(TAG_SCALAR);
                w.str(&a.name);
                w.f32s(v);
            }
        }
    }
    w
}

pub fn encode_corpus(c: &EmbeddingCorpus) -> Vec<u8> {
    encode_body(c).finish()
}

pub fn decode_corpus(bytes: &[u8]) -> Result<EmbeddingCorpus> {
    let mut r = ByteReader::open(bytes, CORPUS_MAGIC)?;
    r.expect_version(CORPUS_VERSION)?;
    let dim = r.u32("dimension")? as usize;
    let count_at = r.pos();
    let count = usize::try_from(r.u64("count")?)
        .map_err(|_| Error::format(count_at, "count does not fit in memory"))?;
    let payload = r.f32s(count.saturating_mul(dim), "embedding payload")?;
    let embeddings = Matrix::from_vec(count, dim, payload).map_err(|e| Error::format(count_at, e.to_string()))?;
    let mut corpus = EmbeddingCorpus::new(embeddings)?;

    let blocks = r.u32("label block count")?;
    for _ in 0..blocks {
        let at = r.pos();
        let tag = r.u8("label block tag")?;
        let res = match tag {
            TAG_SPEAKERS => {
                if corpus.speakers.is_some() {
                    return Err(Error::format(at, "duplicate speaker block"));
                }
                let mut ids = Vec::with_capacity(count.min(1 << 20));
                for _ in 0..count {
                    ids.push(r.u32("speaker id")?);
                }
                corpus.with_speakers(ids)
            }
            TAG_BINARY => {
                let name = r.str("attribute name")?;
                let mut vals = Vec::with_capacity(count.min(1 << 20));
                for _ in 0..count {
                    let p = r.pos();
                    vals.push(match r.u8("binary label")? {
                        0 => false,
                        1 => true,
                        other => return Err(Error::format(p, format!("binary label {other} not in {{0,1}}"))),
                    });
                }
                corpus.with_attribute(name, AttributeValues::Binary(vals))
            }
            TAG_SCALAR => {
                let name = r.str("attribute name")?;
                let vals = r.f32s(count, "scalar labels")?;
                corpus.with_attribute(name, AttributeValues::Scalar(vals))
            }
            other => return Err(Error::format(at, format!("unknown label block tag {other}"))),
        };
        corpus = res.map_err(|e| Error::format(at, e.to_string()))?;
    }
    r.finish()?;
    Ok(corpus)
}

pub fn save_corpus(c: &EmbeddingCorpus, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_corpus(c))?;
    Ok(())
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<EmbeddingCorpus> {
    decode_corpus(&fs::read(path)?)
}

/// Imports `dim,<D>` followed by one comma-separated row of `D` floats per
/// embedding. Blank lines are skipped.
pub fn import_csv(text: &str) -> Result<EmbeddingCorpus> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::format(0, "empty CSV"))?;
    let mut h = header.split(',').map(str::trim);
    let dim = match (h.next(), h.next(), h.next()) {
        (Some("dim"), Some(d), None) => d
            .parse::<usize>()
            .map_err(|_| Error::format(0, format!("bad dimension {d:?} in header")))?,
        _ => return Err(Error::format(0, format!("expected header `dim,<D>`, got {header:?}"))),
    };
    let mut data = Vec::new();
    let mut rows = 0;
    for (lineno, line) in lines {
        let vals: std::result::Result<Vec<f32>, _> = line.split(',').map(|v| v.trim().parse::<f32>()).collect();
        let vals = vals.map_err(|e| Error::format(lineno + 1, format!("line {}: {e}", lineno + 1)))?;
        if vals.len() != dim {
            return Err(Error::format(
                lineno + 1,
                format!("line {}: {} values, expected {dim}", lineno + 1, vals.len()),
            ));
        }
        data.extend(vals);
        rows += 1;
    }
    let m = Matrix::from_vec(rows, dim, data).map_err(|e| Error::format(0, e.to_string()))?;
    EmbeddingCorpus::new(m)
}
