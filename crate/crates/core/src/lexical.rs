//! Tokenisation and raw Okapi BM25.
//!
//! Scores are deliberately left unnormalised: the decay-bypass rule in
//! [`crate::scoring`] compares them against an absolute threshold.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercases and splits on every run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Deduplicates query terms, keeping first-occurrence order.
pub fn unique_terms(tokens: &[String]) -> Vec<&str> {
    let mut seen = HashSet::with_capacity(tokens.len());
    tokens
        .iter()
        .map(String::as_str)
        .filter(|t| seen.insert(*t))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

/// Immutable BM25 index over an ordered document collection.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    doc_ids: Vec<String>,
    positions: HashMap<String, usize>,
    doc_lens: Vec<u32>,
    avg_doc_len: f64,
    term_freqs: Vec<HashMap<String, u32>>,
    postings: HashMap<String, Vec<(u32, u32)>>,
}

impl Bm25Index {
    pub fn build<I, D, T>(docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (D, T)>,
        D: Into<String>,
        T: AsRef<str>,
    {
        Self::with_params(Bm25Params::default(), docs)
    }

    pub fn with_params<I, D, T>(params: Bm25Params, docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (D, T)>,
        D: Into<String>,
        T: AsRef<str>,
    {
        let mut doc_ids = Vec::new();
        let mut positions = HashMap::new();
        let mut doc_lens = Vec::new();
        let mut term_freqs = Vec::new();
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();

        for (id, text) in docs {
            let id = id.into();
            let pos = doc_ids.len();
            if positions.insert(id.clone(), pos).is_some() {
                return Err(Error::validation(format!("duplicate doc id {id:?}")));
            }
            let tokens = tokenize(text.as_ref());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, count) in &tf {
                postings
                    .entry(term.clone())
                    .or_default()
                    .push((pos as u32, *count));
            }
            doc_ids.push(id);
            doc_lens.push(tokens.len() as u32);
            term_freqs.push(tf);
        }

        let avg_doc_len = if doc_lens.is_empty() {
            0.0
        } else {
            doc_lens.iter().map(|&l| l as f64).sum::<f64>() / doc_lens.len() as f64
        };

        Ok(Self {
            params,
            doc_ids,
            positions,
            doc_lens,
            avg_doc_len,
            term_freqs,
            postings,
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.positions.get(doc_id).copied()
    }

    pub fn doc_len(&self, pos: usize) -> u32 {
        self.doc_lens[pos]
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn tf(&self, doc_id: &str, term: &str) -> u32 {
        self.position(doc_id)
            .and_then(|p| self.term_freqs[p].get(term).copied())
            .unwrap_or(0)
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, never negative.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.df(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_score(&self, idf: f64, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = if self.avg_doc_len > 0.0 {
            1.0 - b + b * doc_len as f64 / self.avg_doc_len
        } else {
            1.0
        };
        idf * tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// Raw score of one document. Repeated query terms count once.
    pub fn score(&self, query_tokens: &[String], doc_id: &str) -> Result<f64> {
        let pos = self
            .position(doc_id)
            .ok_or_else(|| Error::NotFound(format!("doc {doc_id:?} not in index")))?;
        let tf = &self.term_freqs[pos];
        let mut total = 0.0;
        for term in unique_terms(query_tokens) {
            if let Some(&count) = tf.get(term) {
                total += self.term_score(self.idf(term), count, self.doc_lens[pos]);
            }
        }
        Ok(total)
    }

    /// Scores of every document, indexed by insertion position.
    ///
    /// Bit-identical to calling [`Bm25Index::score`] per document.
    pub fn score_all(&self, query_tokens: &[String]) -> Vec<f64> {
        let mut scores = vec![0.0; self.doc_count()];
        for term in unique_terms(query_tokens) {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for &(pos, count) in list {
                let pos = pos as usize;
                scores[pos] += self.term_score(idf, count, self.doc_lens[pos]);
            }
        }
        scores
    }
}
