//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.
//!
//! Counts are kept exactly; `phi` and `theta` are the smoothed point
//! estimates from the final sampler state.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenizedDoc, Vocabulary};
use crate::linalg::Matrix;
use crate::rng;

#[derive(Debug, thiserror::Error)]
pub enum TopicsError {
    #[error("invalid LDA config: {0}")]
    Config(String),
    #[error("corpus has no documents")]
    EmptyCorpus,
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("document {doc} contains word id {word} outside a vocabulary of {vocab}")]
    WordOutOfRange { doc: usize, word: usize, vocab: usize },
    #[error("topic {topic} out of range for a {k}-topic model")]
    TopicOutOfRange { topic: usize, k: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub burn_in: usize,
    pub train_sweeps: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self { k: 4, alpha: 0.1, beta: 0.01, burn_in: 200, train_sweeps: 200, seed: 42 }
    }
}

impl LdaConfig {
    pub fn validate(&self) -> Result<(), TopicsError> {
        if self.k < 1 {
            return Err(TopicsError::Config("k must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(TopicsError::Config("alpha must be > 0".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(TopicsError::Config("beta must be > 0".into()));
        }
        if self.train_sweeps < 1 {
            return Err(TopicsError::Config("train_sweeps must be >= 1".into()));
        }
        Ok(())
    }

    pub fn total_sweeps(&self) -> usize {
        self.burn_in + self.train_sweeps
    }
}

/// Documents as ordered word-id sequences over a shared vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowCorpus {
    pub vocab: Vocabulary,
    pub docs: Vec<BowDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowDoc {
    pub respondent_id: String,
    pub words: Vec<usize>,
}

impl BowCorpus {
    pub fn from_tokenized(vocab: Vocabulary, docs: &[TokenizedDoc]) -> Self {
        let docs = docs
            .iter()
            .map(|d| BowDoc { respondent_id: d.respondent_id.clone(), words: vocab.encode(&d.tokens) })
            .collect();
        Self { vocab, docs }
    }

    pub fn num_tokens(&self) -> usize {
        self.docs.iter().map(|d| d.words.len()).sum()
    }

    pub fn term_frequency(&self) -> Vec<usize> {
        let mut tf = vec![0; self.vocab.len()];
        for d in &self.docs {
            for &w in &d.words {
                tf[w] += 1;
            }
        }
        tf
    }

    fn validate(&self) -> Result<(), TopicsError> {
        if self.docs.is_empty() {
            return Err(TopicsError::EmptyCorpus);
        }
        if self.vocab.is_empty() {
            return Err(TopicsError::EmptyVocabulary);
        }
        let v = self.vocab.len();
        for (d, doc) in self.docs.iter().enumerate() {
            if let Some(&w) = doc.words.iter().find(|&&w| w >= v) {
                return Err(TopicsError::WordOutOfRange { doc: d, word: w, vocab: v });
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self, TopicsError> {
        let c: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub config: LdaConfig,
    pub vocab: Vocabulary,
    /// K x V, rows sum to one.
    pub phi: Matrix<f64>,
    /// D x K, rows sum to one.
    pub doc_theta: Matrix<f64>,
    pub assignments: Vec<Vec<usize>>,
    /// Log-likelihood per word at the final state.
    pub ll_per_word: f64,
    /// Log-likelihood per word after each sweep.
    pub ll_trace: Vec<f64>,
    /// Indices of documents with no in-vocabulary tokens (uniform theta).
    pub empty_docs: Vec<usize>,
}

struct Counts {
    k: usize,
    v: usize,
    doc_topic: Vec<Vec<u32>>,
    topic_word: Vec<u32>,
    topic_total: Vec<u32>,
}

impl Counts {
    fn add(&mut self, d: usize, w: usize, z: usize) {
        self.doc_topic[d][z] += 1;
        self.topic_word[z * self.v + w] += 1;
        self.topic_total[z] += 1;
    }

    fn remove(&mut self, d: usize, w: usize, z: usize) {
        self.doc_topic[d][z] -= 1;
        self.topic_word[z * self.v + w] -= 1;
        self.topic_total[z] -= 1;
    }

    fn phi(&self, beta: f64) -> Matrix<f64> {
        let vb = self.v as f64 * beta;
        Matrix::from_fn(self.k, self.v, |k, w| {
            (f64::from(self.topic_word[k * self.v + w]) + beta) / (f64::from(self.topic_total[k]) + vb)
        })
    }

    fn theta(&self, alpha: f64) -> Matrix<f64> {
        let ka = self.k as f64 * alpha;
        Matrix::from_fn(self.doc_topic.len(), self.k, |d, k| {
            let n_d: u32 = self.doc_topic[d].iter().sum();
            (f64::from(self.doc_topic[d][k]) + alpha) / (f64::from(n_d) + ka)
        })
    }
}

/// Samples an index proportionally to the (unnormalised) weights in `p`.
fn sample_discrete<R: Rng>(rng: &mut R, p: &[f64]) -> usize {
    let total: f64 = p.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &x) in p.iter().enumerate() {
        if u < x {
            return i;
        }
        u -= x;
    }
    p.len() - 1
}

/// Mean log-likelihood per token under the given estimates.
pub fn log_likelihood_per_word(phi: &Matrix<f64>, theta: &Matrix<f64>, docs: &[Vec<usize>]) -> f64 {
    let mut ll = 0.0;
    let mut n = 0usize;
    for (d, words) in docs.iter().enumerate() {
        let th = theta.row(d);
        for &w in words {
            let p: f64 = th.iter().enumerate().map(|(k, &t)| t * phi[(k, w)]).sum();
            ll += p.ln();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        ll / n as f64
    }
}

/// Topic of token `n` of document `d` before the first sweep. Keyed on the
/// document and token index so that reordering documents permutes, but does
/// not change, the initial state.
pub fn initial_topic(seed: u64, d_key: u64, n: usize, k: usize) -> usize {
    rng::keyed_index(seed, "lda-init", &[d_key, n as u64], k)
}

fn doc_key(respondent_id: &str, fallback: usize) -> u64 {
    if respondent_id.is_empty() {
        return fallback as u64;
    }
    // FNV-1a over the respondent id.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in respondent_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Uniform random topic per token, keyed on each document's respondent id
/// (or its position when the id is empty) and the token index.
pub fn initial_assignments(corpus: &BowCorpus, seed: u64, k: usize) -> Vec<Vec<usize>> {
    corpus
        .docs
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            let key = doc_key(&doc.respondent_id, d);
            (0..doc.words.len()).map(|n| initial_topic(seed, key, n, k)).collect()
        })
        .collect()
}

/// Runs `burn_in + train_sweeps` collapsed Gibbs sweeps over the corpus.
pub fn fit_lda(corpus: &BowCorpus, cfg: &LdaConfig) -> Result<TopicModel, TopicsError> {
    cfg.validate()?;
    corpus.validate()?;
    let k = cfg.k;
    let v = corpus.vocab.len();
    let docs: Vec<Vec<usize>> = corpus.docs.iter().map(|d| d.words.clone()).collect();
    let mut counts = Counts {
        k,
        v,
        doc_topic: vec![vec![0; k]; docs.len()],
        topic_word: vec![0; k * v],
        topic_total: vec![0; k],
    };
    let mut z = initial_assignments(corpus, cfg.seed, k);
    for (d, (words, zd)) in docs.iter().zip(&z).enumerate() {
        for (&w, &t) in words.iter().zip(zd) {
            counts.add(d, w, t);
        }
    }

    let mut rng = rng::stream(cfg.seed, "lda-sweep", &[]);
    let vb = v as f64 * cfg.beta;
    let mut p = vec![0.0; k];
    let mut ll_trace = Vec::with_capacity(cfg.total_sweeps());
    for _ in 0..cfg.total_sweeps() {
        for (d, words) in docs.iter().enumerate() {
            for (n, &w) in words.iter().enumerate() {
                let old = z[d][n];
                counts.remove(d, w, old);
                for (t, pt) in p.iter_mut().enumerate() {
                    *pt = (f64::from(counts.doc_topic[d][t]) + cfg.alpha)
                        * (f64::from(counts.topic_word[t * v + w]) + cfg.beta)
                        / (f64::from(counts.topic_total[t]) + vb);
                }
                let new = sample_discrete(&mut rng, &p);
                counts.add(d, w, new);
                z[d][n] = new;
            }
        }
        ll_trace.push(log_likelihood_per_word(&counts.phi(cfg.beta), &counts.theta(cfg.alpha), &docs));
    }

    let phi = counts.phi(cfg.beta);
    let doc_theta = counts.theta(cfg.alpha);
    let empty_docs = docs.iter().enumerate().filter(|(_, w)| w.is_empty()).map(|(d, _)| d).collect();
    Ok(TopicModel {
        config: cfg.clone(),
        vocab: corpus.vocab.clone(),
        ll_per_word: *ll_trace.last().expect("at least one sweep"),
        phi,
        doc_theta,
        assignments: z,
        ll_trace,
        empty_docs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferredTheta {
    pub theta: Vec<f64>,
    /// Set when the document had no in-vocabulary tokens.
    pub empty: bool,
}

impl TopicModel {
    pub fn k(&self) -> usize {
        self.phi.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.phi.cols()
    }

    /// Topic proportions for an unseen document with `phi` held fixed.
    pub fn infer_theta(&self, words: &[usize], iters: usize, seed: u64) -> InferredTheta {
        let k = self.k();
        let alpha = self.config.alpha;
        let words: Vec<usize> = words.iter().copied().filter(|&w| w < self.vocab_size()).collect();
        if words.is_empty() {
            return InferredTheta { theta: vec![1.0 / k as f64; k], empty: true };
        }
        let mut z: Vec<usize> = (0..words.len()).map(|n| initial_topic(seed, 0, n, k)).collect();
        let mut n_dk = vec![0u32; k];
        for &t in &z {
            n_dk[t] += 1;
        }
        let mut rng = rng::stream(seed, "lda-infer", &[]);
        let mut p = vec![0.0; k];
        for _ in 0..iters {
            for (n, &w) in words.iter().enumerate() {
                n_dk[z[n]] -= 1;
                for (t, pt) in p.iter_mut().enumerate() {
                    *pt = (f64::from(n_dk[t]) + alpha) * self.phi[(t, w)];
                }
                let new = sample_discrete(&mut rng, &p);
                n_dk[new] += 1;
                z[n] = new;
            }
        }
        let denom = words.len() as f64 + k as f64 * alpha;
        InferredTheta { theta: n_dk.iter().map(|&c| (f64::from(c) + alpha) / denom).collect(), empty: false }
    }

    pub fn infer_theta_tokens(&self, doc: &TokenizedDoc, iters: usize, seed: u64) -> InferredTheta {
        self.infer_theta(&self.vocab.encode(&doc.tokens), iters, seed)
    }

    /// Infers every document in parallel; document `i` uses a seed derived
    /// from `(seed, i)`.
    pub fn infer_many(&self, docs: &[Vec<usize>], iters: usize, seed: u64) -> Vec<InferredTheta> {
        docs.par_iter()
            .enumerate()
            .map(|(i, d)| self.infer_theta(d, iters, rng::derive_seed(seed, "lda-infer-doc", &[i as u64])))
            .collect()
    }

    /// Mean per-token log-likelihood of held-out documents, with their topic
    /// proportions inferred against this model.
    pub fn held_out_ll_per_word(&self, docs: &[Vec<usize>], iters: usize, seed: u64) -> f64 {
        let thetas = self.infer_many(docs, iters, seed);
        let theta = Matrix::from_rows(&thetas.into_iter().map(|t| t.theta).collect::<Vec<_>>())
            .expect("equal-length theta rows");
        log_likelihood_per_word(&self.phi, &theta, docs)
    }

    /// The `n` most probable terms of topic `topic`, ties broken lexicographically.
    pub fn top_words(&self, topic: usize, n: usize) -> Result<Vec<(String, f64)>, TopicsError> {
        if topic >= self.k() {
            return Err(TopicsError::TopicOutOfRange { topic, k: self.k() });
        }
        let mut words: Vec<(String, f64)> = self
            .phi
            .row(topic)
            .iter()
            .enumerate()
            .map(|(w, &p)| (self.vocab.term(w).to_string(), p))
            .collect();
        words.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        words.truncate(n);
        Ok(words)
    }

    /// `score[d][k] = Σ_t phi[k][t]` over the tokens of document `d`; the last
    /// column is the row total. Out-of-vocabulary tokens contribute nothing.
    pub fn score_documents(&self, docs: &[TokenizedDoc]) -> Matrix<f64> {
        let k = self.k();
        let mut out = Matrix::zeros(docs.len(), k + 1);
        for (d, doc) in docs.iter().enumerate() {
            for w in self.vocab.encode(&doc.tokens) {
                for t in 0..k {
                    out[(d, t)] += self.phi[(t, w)];
                }
            }
            out[(d, k)] = (0..k).map(|t| out[(d, t)]).sum();
        }
        out
    }

    pub fn vis_data(&self, corpus: &BowCorpus) -> VisData {
        VisData {
            phi: self.phi.clone(),
            theta: self.doc_theta.clone(),
            doc_lengths: corpus.docs.iter().map(|d| d.words.len()).collect(),
            vocab: self.vocab.terms().to_vec(),
            term_frequency: corpus.term_frequency(),
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<(), TopicsError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, TopicsError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// The five aligned tables used by topic-model visualisers.
#[derive(Debug, Clone, PartialEq)]
pub struct VisData {
    pub phi: Matrix<f64>,
    pub theta: Matrix<f64>,
    pub doc_lengths: Vec<usize>,
    pub vocab: Vec<String>,
    pub term_frequency: Vec<usize>,
}

impl VisData {
    /// Writes `phi.csv`, `theta.csv`, `doc_lengths.csv`, `vocab.csv` and
    /// `term_frequency.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<(), TopicsError> {
        std::fs::create_dir_all(dir)?;
        write_matrix_csv(&dir.join("phi.csv"), &self.phi, &self.vocab)?;
        let topics: Vec<String> = (0..self.theta.cols()).map(|k| format!("topic_{k}")).collect();
        write_matrix_csv(&dir.join("theta.csv"), &self.theta, &topics)?;
        let mut w = csv::Writer::from_path(dir.join("doc_lengths.csv"))?;
        w.write_record(["doc", "length"])?;
        for (d, n) in self.doc_lengths.iter().enumerate() {
            w.write_record([d.to_string(), n.to_string()])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("vocab.csv"))?;
        w.write_record(["term"])?;
        for t in &self.vocab {
            w.write_record([t])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("term_frequency.csv"))?;
        w.write_record(["term", "frequency"])?;
        for (t, f) in self.vocab.iter().zip(&self.term_frequency) {
            w.write_record([t.clone(), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn write_matrix_csv(path: &Path, m: &Matrix<f64>, header: &[String]) -> Result<(), TopicsError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
