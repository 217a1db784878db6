use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::TokenizedDoc;

/// Bigrams promoted to single tokens, with their scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhraseTable {
    pub min_count: usize,
    pub threshold: f64,
    /// `"a b"` -> score, sorted for stable serialisation.
    pub phrases: BTreeMap<String, f64>,
}

impl PhraseTable {
    pub fn contains(&self, a: &str, b: &str) -> bool {
        self.phrases.contains_key(&format!("{a} {b}"))
    }

    /// Greedy left-to-right merge of adjacent pairs found in the table.
    pub fn apply(&self, tokens: &[String]) -> Vec<String> {
        let mut out = Vec::with_capacity(tokens.len());
        let mut i = 0;
        while i < tokens.len() {
            if i + 1 < tokens.len() && self.contains(&tokens[i], &tokens[i + 1]) {
                out.push(format!("{}_{}", tokens[i], tokens[i + 1]));
                i += 2;
            } else {
                out.push(tokens[i].clone());
                i += 1;
            }
        }
        out
    }
}

/// Count-based bigram score `(n_ab - min_count) * V / (n_a * n_b)`.
pub fn phrase_score(n_ab: usize, n_a: usize, n_b: usize, min_count: usize, vocab_size: usize) -> f64 {
    (n_ab as f64 - min_count as f64) * vocab_size as f64 / (n_a as f64 * n_b as f64)
}

/// Scores every adjacent pair in the corpus and keeps those with
/// `n_ab >= min_count` and `score >= threshold`.
pub fn learn_phrases(docs: &[TokenizedDoc], min_count: usize, threshold: f64) -> PhraseTable {
    let mut unigrams: HashMap<&str, usize> = HashMap::new();
    let mut bigrams: HashMap<(&str, &str), usize> = HashMap::new();
    for doc in docs {
        for t in &doc.tokens {
            *unigrams.entry(t.as_str()).or_default() += 1;
        }
        for w in doc.tokens.windows(2) {
            *bigrams.entry((w[0].as_str(), w[1].as_str())).or_default() += 1;
        }
    }
    let vocab_size = unigrams.len();
    let mut phrases = BTreeMap::new();
    for (&(a, b), &n_ab) in &bigrams {
        if n_ab < min_count {
            continue;
        }
        let score = phrase_score(n_ab, unigrams[a], unigrams[b], min_count, vocab_size);
        if score >= threshold {
            phrases.insert(format!("{a} {b}"), score);
        }
    }
    PhraseTable { min_count, threshold, phrases }
}
