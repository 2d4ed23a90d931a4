//! Dense ranking behind the [`Embedder`] interface.

use std::cmp::Ordering;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{Endpoint, JsonClient};
use crate::lexical::tokenize;

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;

    /// One unit-norm vector per input text.
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;
}

/// Deterministic hashed bag-of-words embedder for offline runs.
///
/// Each token is hashed (FNV-1a) to a bucket and a sign; the accumulated
/// vector is L2-normalised. Texts without tokens map to the first basis
/// vector so that every output stays unit-norm.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: 64 }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("embedding dimension must be positive"));
        }
        Ok(Self { dim })
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in tokenize(text) {
            let h = fnv1a(tok.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
            v[bucket] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            v[0] = 1.0;
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Embedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for an external service: `POST /embed {"texts": [...]}` returning
/// `{"vectors": [[...], ...]}`.
pub struct HttpEmbedder {
    client: JsonClient,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(endpoint: &Endpoint, dimension: usize) -> Self {
        Self {
            client: endpoint.client(),
            dim: dimension,
        }
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let resp: EmbedResponse = self.client.post("/embed", &EmbedRequest { texts })?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::External(format!(
                "embedder returned {} vectors for {} texts",
                resp.vectors.len(),
                texts.len()
            )));
        }
        if let Some(bad) = resp.vectors.iter().find(|v| v.len() != self.dim) {
            return Err(Error::External(format!(
                "embedder returned dimension {} (expected {})",
                bad.len(),
                self.dim
            )));
        }
        Ok(resp.vectors)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct DenseCandidate<'a> {
    pub id: &'a str,
    pub text: &'a str,
    pub timestamp: DateTime<Utc>,
}

/// Ranks candidates by cosine similarity to the query (dot product of unit
/// vectors). Returns `(candidate index, similarity)` best first; ties go to
/// the newer candidate, then the smaller id.
pub fn dense_rank(
    query: &str,
    candidates: &[DenseCandidate<'_>],
    embedder: &dyn Embedder,
) -> Result<Vec<(usize, f64)>> {
    let mut texts = Vec::with_capacity(candidates.len() + 1);
    texts.push(query);
    texts.extend(candidates.iter().map(|c| c.text));
    let vectors = embedder.embed(&texts)?;
    if vectors.len() != texts.len() {
        return Err(Error::External("embedder returned wrong vector count".into()));
    }
    let (q, docs) = vectors.split_first().expect("query vector present");
    let sims: Vec<f64> = docs.iter().map(|d| dot(q, d)).collect();
    Ok(rank_by_similarity(candidates, &sims))
}

/// Same ordering as [`dense_rank`] over precomputed similarities.
pub fn rank_by_similarity(candidates: &[DenseCandidate<'_>], sims: &[f64]) -> Vec<(usize, f64)> {
    let mut order: Vec<(usize, f64)> = sims.iter().copied().enumerate().collect();
    order.sort_by(|(i, si), (j, sj)| {
        sj.total_cmp(si)
            .then_with(|| newer_then_id(candidates[*i], candidates[*j]))
    });
    order
}

fn newer_then_id(a: DenseCandidate<'_>, b: DenseCandidate<'_>) -> Ordering {
    b.timestamp.cmp(&a.timestamp).then_with(|| a.id.cmp(b.id))
}
