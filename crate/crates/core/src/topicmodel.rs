//! Latent Dirichlet Allocation trained with collapsed Gibbs sampling.
//!
//! The sampler draws from
//!
//! ```text
//! p(z = k | rest) ∝ (n_dk + α) · (n_kw + β) / (n_k + V·β)
//! ```
//!
//! using a ChaCha8 stream seeded from the config, so a (corpus, config)
//! pair fully determines the trained counts on every platform.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textproc::TokenizedText;

const STOPWORDS_ASSET: &str = include_str!("../assets/stopwords.txt");
pub const MODEL_FORMAT: &str = "pqa-lda-1";

static STOPWORDS: LazyLock<HashSet<&'static str>> = LazyLock::new(|| {
    STOPWORDS_ASSET
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
});

pub fn is_stopword(term: &str) -> bool {
    STOPWORDS.contains(term)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub num_topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Minimum corpus frequency for a term to enter the vocabulary.
    pub min_term_freq: usize,
    pub drop_stopwords: bool,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self::with_topics(50)
    }
}

impl LdaConfig {
    /// Defaults with `alpha = 50 / K`.
    pub fn with_topics(num_topics: usize) -> Self {
        Self {
            num_topics,
            alpha: 50.0 / num_topics.max(1) as f64,
            beta: 0.01,
            iterations: 1000,
            seed: 0,
            min_term_freq: 2,
            drop_stopwords: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_topics < 1 {
            return Err(Error::InvalidConfig("num_topics must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::InvalidConfig("alpha and beta must be > 0".into()));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Sorted case-folded terms with corpus frequency `>= min_freq`.
pub fn build_vocabulary(corpus: &[TokenizedText], min_freq: usize, drop_stopwords: bool) -> Vec<String> {
    let mut freq: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus {
        for t in &doc.tokens {
            *freq.entry(t.term()).or_insert(0) += 1;
        }
    }
    freq.into_iter()
        .filter(|(t, n)| *n >= min_freq && !(drop_stopwords && is_stopword(t)))
        .map(|(t, _)| t)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicVector {
    pub weights: Vec<f64>,
}

impl TopicVector {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = k;
            }
        }
        best
    }

    pub fn cosine(&self, other: &TopicVector) -> f64 {
        let dot: f64 = self.weights.iter().zip(&other.weights).map(|(a, b)| a * b).sum();
        let na = self.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        let nb = other.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            (dot / (na * nb)).clamp(0.0, 1.0)
        }
    }

    fn from_counts(counts: &[u64], alpha: f64) -> Self {
        let k = counts.len() as f64;
        let len: u64 = counts.iter().sum();
        let denom = len as f64 + k * alpha;
        TopicVector {
            weights: counts.iter().map(|&c| (c as f64 + alpha) / denom).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub num_topics: usize,
    pub vocab: Vec<String>,
    /// K rows of V counts.
    pub topic_word_counts: Vec<Vec<u64>>,
    pub topic_totals: Vec<u64>,
    pub alpha: f64,
    pub beta: f64,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    num_topics: usize,
    alpha: f64,
    beta: f64,
    vocab: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    header: ModelHeader,
    /// Row-major K×V.
    counts: Vec<u64>,
}

impl TopicModel {
    fn new(
        num_topics: usize,
        vocab: Vec<String>,
        topic_word_counts: Vec<Vec<u64>>,
        alpha: f64,
        beta: f64,
    ) -> Self {
        let topic_totals = topic_word_counts.iter().map(|row| row.iter().sum()).collect();
        let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            num_topics,
            vocab,
            topic_word_counts,
            topic_totals,
            alpha,
            beta,
            index,
        }
    }

    pub fn term_id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Highest-count terms of topic `k`.
    pub fn top_terms(&self, k: usize, n: usize) -> Vec<(&str, u64)> {
        let mut row: Vec<(&str, u64)> = self
            .vocab
            .iter()
            .map(String::as_str)
            .zip(self.topic_word_counts[k].iter().copied())
            .collect();
        row.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        row.truncate(n);
        row
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            header: ModelHeader {
                format: MODEL_FORMAT.to_string(),
                num_topics: self.num_topics,
                alpha: self.alpha,
                beta: self.beta,
                vocab: self.vocab.clone(),
            },
            counts: self.topic_word_counts.iter().flatten().copied().collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        let h = file.header;
        if h.format != MODEL_FORMAT {
            return Err(Error::ModelVersion(h.format));
        }
        let v = h.vocab.len();
        if h.num_topics < 1 || file.counts.len() != h.num_topics * v {
            return Err(Error::Parse {
                path: "counts".into(),
                message: format!("expected {}x{} counts, found {}", h.num_topics, v, file.counts.len()),
            });
        }
        let rows = if v == 0 {
            vec![Vec::new(); h.num_topics]
        } else {
            file.counts.chunks(v).map(<[u64]>::to_vec).collect()
        };
        Ok(Self::new(h.num_topics, h.vocab, rows, h.alpha, h.beta))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Draw an index proportional to `weights`.
fn sample_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return k;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Collapsed Gibbs sampler state. [`train_lda`] drives it for the configured
/// number of sweeps; tests step it manually to check invariants per sweep.
pub struct GibbsSampler {
    config: LdaConfig,
    vocab: Vec<String>,
    docs: Vec<Vec<usize>>,
    assignments: Vec<Vec<usize>>,
    doc_topic: Vec<Vec<u64>>,
    topic_word: Vec<Vec<u64>>,
    topic_totals: Vec<u64>,
    rng: ChaCha8Rng,
    probs: Vec<f64>,
}

impl GibbsSampler {
    pub fn new(corpus: &[TokenizedText], config: &LdaConfig) -> Result<Self> {
        config.validate()?;
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let vocab = build_vocabulary(corpus, config.min_term_freq, config.drop_stopwords);
        let index: HashMap<&str, usize> =
            vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let docs: Vec<Vec<usize>> = corpus
            .iter()
            .map(|d| d.terms().iter().filter_map(|t| index.get(t.as_str()).copied()).collect())
            .collect();
        let total: usize = docs.iter().map(Vec::len).sum();
        let k = config.num_topics;
        if total < k {
            return Err(Error::InvalidConfig(format!(
                "{total} in-vocabulary tokens is fewer than {k} topics"
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let v = vocab.len();
        let mut doc_topic = vec![vec![0u64; k]; docs.len()];
        let mut topic_word = vec![vec![0u64; v]; k];
        let mut topic_totals = vec![0u64; k];
        let assignments = docs
            .iter()
            .enumerate()
            .map(|(d, words)| {
                words
                    .iter()
                    .map(|&w| {
                        let z = rng.gen_range(0..k);
                        doc_topic[d][z] += 1;
                        topic_word[z][w] += 1;
                        topic_totals[z] += 1;
                        z
                    })
                    .collect()
            })
            .collect();

        Ok(Self {
            config: config.clone(),
            vocab,
            docs,
            assignments,
            doc_topic,
            topic_word,
            topic_totals,
            rng,
            probs: vec![0.0; k],
        })
    }

    /// One full pass over every token of every document.
    pub fn sweep(&mut self) {
        let k = self.config.num_topics;
        let (alpha, beta) = (self.config.alpha, self.config.beta);
        let vbeta = self.vocab.len() as f64 * beta;
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.assignments[d][i];
                self.doc_topic[d][old] -= 1;
                self.topic_word[old][w] -= 1;
                self.topic_totals[old] -= 1;

                for t in 0..k {
                    self.probs[t] = (self.doc_topic[d][t] as f64 + alpha)
                        * (self.topic_word[t][w] as f64 + beta)
                        / (self.topic_totals[t] as f64 + vbeta);
                }
                let new = sample_index(&mut self.rng, &self.probs);

                self.assignments[d][i] = new;
                self.doc_topic[d][new] += 1;
                self.topic_word[new][w] += 1;
                self.topic_totals[new] += 1;
            }
        }
    }

    pub fn in_vocab_tokens(&self) -> u64 {
        self.docs.iter().map(|d| d.len() as u64).sum()
    }

    pub fn topic_totals(&self) -> &[u64] {
        &self.topic_totals
    }

    /// Totals match their rows, rows sum to the token count, and per-document
    /// counts agree with the assignments.
    pub fn counts_consistent(&self) -> bool {
        let rows_ok = self
            .topic_word
            .iter()
            .zip(&self.topic_totals)
            .all(|(row, total)| row.iter().sum::<u64>() == *total);
        let docs_ok = self
            .doc_topic
            .iter()
            .zip(&self.docs)
            .all(|(counts, words)| counts.iter().sum::<u64>() == words.len() as u64);
        rows_ok && docs_ok && self.topic_totals.iter().sum::<u64>() == self.in_vocab_tokens()
    }

    pub fn doc_topic_counts(&self, d: usize) -> &[u64] {
        &self.doc_topic[d]
    }

    pub fn doc_topic_vector(&self, d: usize) -> TopicVector {
        TopicVector::from_counts(&self.doc_topic[d], self.config.alpha)
    }

    pub fn into_model(self) -> TopicModel {
        TopicModel::new(
            self.config.num_topics,
            self.vocab,
            self.topic_word,
            self.config.alpha,
            self.config.beta,
        )
    }
}

pub fn train_lda(corpus: &[TokenizedText], config: &LdaConfig) -> Result<TopicModel> {
    let mut sampler = GibbsSampler::new(corpus, config)?;
    for _ in 0..config.iterations {
        sampler.sweep();
    }
    Ok(sampler.into_model())
}

/// Topic proportions of an unseen document, sampling only its own
/// assignments against the fixed topic-word counts. Out-of-vocabulary tokens
/// are skipped; a document with none left gets the uniform vector.
pub fn infer_topics(model: &TopicModel, doc: &TokenizedText, iterations: usize, seed: u64) -> TopicVector {
    let k = model.num_topics;
    let words: Vec<usize> = doc.terms().iter().filter_map(|t| model.term_id(t)).collect();
    let mut counts = vec![0u64; k];
    if words.is_empty() || k == 1 {
        counts[0] = words.len() as u64;
        return TopicVector::from_counts(&counts, model.alpha);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vbeta = model.vocab_size() as f64 * model.beta;
    let mut z: Vec<usize> = words
        .iter()
        .map(|_| {
            let t = rng.gen_range(0..k);
            counts[t] += 1;
            t
        })
        .collect();
    let mut probs = vec![0.0; k];
    for _ in 0..iterations {
        for (i, &w) in words.iter().enumerate() {
            counts[z[i]] -= 1;
            for t in 0..k {
                probs[t] = (counts[t] as f64 + model.alpha)
                    * (model.topic_word_counts[t][w] as f64 + model.beta)
                    / (model.topic_totals[t] as f64 + vbeta);
            }
            z[i] = sample_index(&mut rng, &probs);
            counts[z[i]] += 1;
        }
    }
    TopicVector::from_counts(&counts, model.alpha)
}
