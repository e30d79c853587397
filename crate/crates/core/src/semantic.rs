//! Cosine-similarity ranking of candidates against a topic embedding.
//!
//! Documents are embedded from their first sentences only. Vectors come
//! from an [`EmbeddingProvider`]: either precomputed files from an
//! external encoder, or the built-in hashed term-frequency embedder.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bm25::tokenize;
use crate::corpus_io::EmbeddingFile;
use crate::error::{Error, Result};
use crate::model::{Document, RankedList, Topic};

pub const DEFAULT_MAX_SENTENCES: usize = 20;
pub const DEFAULT_HASH_DIM: usize = 256;
/// FNV-1a 64-bit offset basis; seeds the token hash of the fallback embedder.
pub const HASH_SEED: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Splits after `.`, `!` or `?` when followed by whitespace or end of text.
/// Abbreviations are not special-cased.
pub fn segment_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let boundary = chars.peek().is_none_or(|&(_, n)| n.is_whitespace());
            if boundary {
                let end = i + c.len_utf8();
                out.push(text[start..end].trim());
                start = end;
            }
        }
    }
    out.push(text[start..].trim());
    out.retain(|s| !s.is_empty());
    out
}

/// The first `limit` sentences joined by single spaces.
pub fn truncate_for_embedding(text: &str, limit: usize) -> String {
    segment_sentences(text)
        .into_iter()
        .take(limit.max(1))
        .collect::<Vec<_>>()
        .join(" ")
}

/// `u·v / (‖u‖‖v‖)`, or 0 when either norm is 0.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Which topic fields are embedded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopicField {
    #[default]
    Query,
    Description,
    Both,
}

impl TopicField {
    pub fn text(self, topic: &Topic) -> String {
        match self {
            TopicField::Query => topic.query.clone(),
            TopicField::Description => topic.description.clone(),
            TopicField::Both => format!("{} {}", topic.query, topic.description),
        }
    }
}

impl FromStr for TopicField {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "query" => Ok(TopicField::Query),
            "description" => Ok(TopicField::Description),
            "both" => Ok(TopicField::Both),
            _ => Err(Error::invalid(
                "topic field",
                format!("`{s}` is not query, description or both"),
            )),
        }
    }
}

impl fmt::Display for TopicField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopicField::Query => "query",
            TopicField::Description => "description",
            TopicField::Both => "both",
        })
    }
}

pub trait EmbeddingProvider: Sync {
    fn dim(&self) -> usize;
    fn topic_vector(&self, topic: &Topic) -> Result<Vec<f64>>;
    fn doc_vector(&self, doc: &Document) -> Result<Vec<f64>>;
}

/// Vectors precomputed by an external encoder.
#[derive(Debug, Clone)]
pub struct FileEmbeddings {
    topics: EmbeddingFile,
    docs: EmbeddingFile,
}

impl FileEmbeddings {
    pub fn new(topics: EmbeddingFile, docs: EmbeddingFile) -> Result<Self> {
        if topics.dim != docs.dim {
            return Err(Error::DimensionMismatch {
                left: topics.dim,
                right: docs.dim,
            });
        }
        Ok(Self { topics, docs })
    }
}

impl EmbeddingProvider for FileEmbeddings {
    fn dim(&self) -> usize {
        self.docs.dim
    }

    fn topic_vector(&self, topic: &Topic) -> Result<Vec<f64>> {
        self.topics
            .vectors
            .get(&topic.topic_id)
            .cloned()
            .ok_or_else(|| Error::MissingVector {
                what: "topic",
                id: topic.topic_id.clone(),
            })
    }

    fn doc_vector(&self, doc: &Document) -> Result<Vec<f64>> {
        self.docs
            .vectors
            .get(&doc.doc_id)
            .cloned()
            .ok_or_else(|| Error::MissingVector {
                what: "document",
                id: doc.doc_id.clone(),
            })
    }
}

/// L2-normalised hashed term frequencies. Tokens are bucketed by FNV-1a
/// (offset basis `seed`, [`HASH_SEED`] by default) modulo `dim`.
/// Deterministic across platforms.
#[derive(Debug, Clone, Copy)]
pub struct HashedTfEmbedder {
    pub dim: usize,
    pub max_sentences: usize,
    pub topic_field: TopicField,
    pub seed: u64,
}

impl Default for HashedTfEmbedder {
    fn default() -> Self {
        Self {
            dim: DEFAULT_HASH_DIM,
            max_sentences: DEFAULT_MAX_SENTENCES,
            topic_field: TopicField::Query,
            seed: HASH_SEED,
        }
    }
}

pub fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(seed, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

impl HashedTfEmbedder {
    pub fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in tokenize(text) {
            v[(fnv1a(self.seed, tok.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingProvider for HashedTfEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn topic_vector(&self, topic: &Topic) -> Result<Vec<f64>> {
        Ok(self.embed(&self.topic_field.text(topic)))
    }

    fn doc_vector(&self, doc: &Document) -> Result<Vec<f64>> {
        Ok(self.embed(&truncate_for_embedding(&doc.text, self.max_sentences)))
    }
}

/// Orders every candidate by descending cosine to the topic vector.
pub fn semantic_rank(
    topic: &Topic,
    candidates: &[&Document],
    provider: &dyn EmbeddingProvider,
    run_tag: &str,
) -> Result<RankedList> {
    let q = provider.topic_vector(topic)?;
    let scored = candidates
        .iter()
        .map(|d| {
            let v = provider.doc_vector(d)?;
            Ok((d.doc_id.clone(), cosine(&q, &v)?))
        })
        .collect::<Result<Vec<_>>>()?;
    RankedList::from_scores(&topic.topic_id, run_tag, scored)
}
