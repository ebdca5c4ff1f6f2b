//! Embedding corpora: storage, validation, summary statistics and the
//! synthetic corpus with planted attribute directions.

mod format;
mod synthetic;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::binio::Digest;
use crate::error::{Error, Result};
use crate::ndmath::Matrix;

pub use format::{decode_corpus, encode_corpus, import_csv, load_corpus, save_corpus, CORPUS_MAGIC, CORPUS_VERSION};
pub use synthetic::{generate_synthetic_corpus, PlantedDirections, SyntheticCorpusSpec, BINARY_ATTRIBUTE, SCALAR_ATTRIBUTE};

#[derive(Clone, Debug, PartialEq)]
pub enum AttributeValues {
    Binary(Vec<bool>),
    /// Values in `[0, 1]`.
    Scalar(Vec<f32>),
}

impl AttributeValues {
    pub fn len(&self) -> usize {
        match self {
            AttributeValues::Binary(v) => v.len(),
            AttributeValues::Scalar(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Attribute {
    pub name: String,
    pub values: AttributeValues,
}

/// Utterance-level embeddings (one row each) with optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingCorpus {
    embeddings: Matrix,
    speakers: Option<Vec<u32>>,
    attributes: Vec<Attribute>,
}

impl EmbeddingCorpus {
    pub fn new(embeddings: Matrix) -> Result<Self> {
        if !embeddings.is_finite() {
            return Err(Error::contract("corpus embeddings must be finite"));
        }
        Ok(Self {
            embeddings,
            speakers: None,
            attributes: Vec::new(),
        })
    }

    pub fn with_speakers(mut self, speakers: Vec<u32>) -> Result<Self> {
        if speakers.len() != self.count() {
            return Err(Error::shape("speaker labels", self.count(), speakers.len()));
        }
        self.speakers = Some(speakers);
        Ok(self)
    }

    pub fn with_attribute(mut self, name: impl Into<String>, values: AttributeValues) -> Result<Self> {
        let name = name.into();
        if values.len() != self.count() {
            return Err(Error::shape("attribute labels", self.count(), values.len()));
        }
        if name.is_empty() || name.len() > u16::MAX as usize {
            return Err(Error::contract("attribute name must be 1..=65535 bytes"));
        }
        if self.attributes.iter().any(|a| a.name == name) {
            return Err(Error::contract(format!("duplicate attribute {name:?}")));
        }
        if let AttributeValues::Scalar(v) = &values {
            if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::contract(format!("scalar attribute {name:?} must lie in [0, 1]")));
            }
        }
        self.attributes.push(Attribute { name, values });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn count(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn speakers(&self) -> Option<&[u32]> {
        self.speakers.as_deref()
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeValues> {
        self.attributes.iter().find(|a| a.name == name).map(|a| &a.values)
    }

    /// SHA-256 of the serialized content (the digest stored at the end of the file).
    pub fn content_hash(&self) -> Digest {
        Digest::of(format::encode_body(self).body())
    }

    /// Rows at `indices`, labels included.
    pub fn subset(&self, indices: &[usize]) -> EmbeddingCorpus {
        EmbeddingCorpus {
            embeddings: self.embeddings.select_rows(indices),
            speakers: self
                .speakers
                .as_ref()
                .map(|s| indices.iter().map(|&i| s[i]).collect()),
            attributes: self
                .attributes
                .iter()
                .map(|a| Attribute {
                    name: a.name.clone(),
                    values: match &a.values {
                        AttributeValues::Binary(v) => {
                            AttributeValues::Binary(indices.iter().map(|&i| v[i]).collect())
                        }
                        AttributeValues::Scalar(v) => {
                            AttributeValues::Scalar(indices.iter().map(|&i| v[i]).collect())
                        }
                    },
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormSummary {
    pub min: f64,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusStats {
    pub count: usize,
    pub dim: usize,
    pub mean: Vec<f64>,
    /// Population variance per dimension.
    pub variance: Vec<f64>,
    pub norms: NormSummary,
    pub speaker_counts: BTreeMap<u32, usize>,
}

pub fn corpus_stats(c: &EmbeddingCorpus) -> Result<CorpusStats> {
    let (n, d) = c.embeddings.shape();
    if n == 0 {
        return Err(Error::contract("statistics of an empty corpus"));
    }
    let mut mean = vec![0.0f64; d];
    for r in 0..n {
        for (m, &v) in mean.iter_mut().zip(c.embeddings.row(r)) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut variance = vec![0.0f64; d];
    let mut norms = Vec::with_capacity(n);
    for r in 0..n {
        let row = c.embeddings.row(r);
        for ((s, &v), m) in variance.iter_mut().zip(row).zip(&mean) {
            let x = v as f64 - m;
            *s += x * x;
        }
        norms.push(row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt());
    }
    variance.iter_mut().for_each(|s| *s /= n as f64);
    let norm_mean = norms.iter().sum::<f64>() / n as f64;
    let norm_std = (norms.iter().map(|x| (x - norm_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let mut speaker_counts = BTreeMap::new();
    if let Some(s) = &c.speakers {
        for &id in s {
            *speaker_counts.entry(id).or_insert(0) += 1;
        }
    }
    Ok(CorpusStats {
        count: n,
        dim: d,
        mean,
        variance,
        norms: NormSummary {
            min: norms.iter().cloned().fold(f64::INFINITY, f64::min),
            mean: norm_mean,
            std: norm_std,
            max: norms.iter().cloned().fold(0.0, f64::max),
        },
        speaker_counts,
    })
}
