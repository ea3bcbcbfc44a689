//! Jaccard, tf-idf cosine and Okapi BM25 over case-folded token multisets.
//!
//! All sums run in lexicographic term order so that scores are
//! bit-reproducible.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textproc::TokenizedText;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub num_docs: usize,
    pub doc_freq: HashMap<String, usize>,
    pub avg_doc_len: f64,
    pub total_docs_len: usize,
}

impl CorpusStats {
    pub fn df(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }
}

/// Term → weight. Zero weights are never stored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub entries: BTreeMap<String, f64>,
}

impl SparseVector {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, term: &str) -> f64 {
        self.entries.get(term).copied().unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.entries.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> SparseVector {
        SparseVector {
            entries: self
                .entries
                .iter()
                .map(|(t, w)| (t.clone(), w * c))
                .filter(|(_, w)| *w != 0.0)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

fn term_counts(doc: &TokenizedText) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for t in &doc.tokens {
        *counts.entry(t.term()).or_insert(0) += 1;
    }
    counts
}

pub fn build_corpus_stats(docs: &[TokenizedText]) -> Result<CorpusStats> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut doc_freq = HashMap::new();
    let mut total = 0;
    for doc in docs {
        total += doc.len();
        let seen: BTreeSet<String> = doc.tokens.iter().map(|t| t.term()).collect();
        for term in seen {
            *doc_freq.entry(term).or_insert(0) += 1;
        }
    }
    let avg = total as f64 / docs.len() as f64;
    Ok(CorpusStats {
        num_docs: docs.len(),
        doc_freq,
        // an all-empty corpus still needs a positive length normalizer
        avg_doc_len: if avg > 0.0 { avg } else { 1.0 },
        total_docs_len: total,
    })
}

pub fn jaccard(a: &TokenizedText, b: &TokenizedText) -> f64 {
    let sa: BTreeSet<String> = a.tokens.iter().map(|t| t.term()).collect();
    let sb: BTreeSet<String> = b.tokens.iter().map(|t| t.term()).collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// `tf · ln((N + 1) / (df + 1))` with raw term counts.
pub fn tfidf_vector(doc: &TokenizedText, stats: &CorpusStats) -> SparseVector {
    let n = stats.num_docs as f64;
    let entries = term_counts(doc)
        .into_iter()
        .filter_map(|(term, tf)| {
            let idf = ((n + 1.0) / (stats.df(&term) as f64 + 1.0)).ln();
            let w = tf as f64 * idf;
            (w != 0.0 && w.is_finite()).then_some((term, w))
        })
        .collect();
    SparseVector { entries }
}

pub fn cosine(a: &SparseVector, b: &SparseVector) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a
        .entries
        .iter()
        .filter_map(|(t, w)| b.entries.get(t).map(|v| w * v))
        .sum();
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// `ln(1 + (N − df + 0.5) / (df + 0.5))`, never negative.
pub fn bm25_idf(stats: &CorpusStats, term: &str) -> f64 {
    let n = stats.num_docs as f64;
    let df = stats.df(term) as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Okapi BM25. A term repeated in the query contributes once per occurrence.
pub fn bm25(
    query: &TokenizedText,
    doc: &TokenizedText,
    stats: &CorpusStats,
    params: Bm25Params,
) -> f64 {
    let doc_counts = term_counts(doc);
    let len_norm = 1.0 - params.b + params.b * doc.len() as f64 / stats.avg_doc_len;
    term_counts(query)
        .into_iter()
        .filter_map(|(term, qtf)| {
            let tf = *doc_counts.get(&term)? as f64;
            let sat = tf * (params.k1 + 1.0) / (tf + params.k1 * len_norm);
            Some(qtf as f64 * bm25_idf(stats, &term) * sat)
        })
        .sum()
}
