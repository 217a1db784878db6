//! Text cleaning for open-ended survey answers: normalisation, tokenising,
//! stopword removal, phrase detection, Porter stemming and vocabulary
//! construction.

mod phrases;
pub mod porter;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use phrases::{learn_phrases, phrase_score, PhraseTable};

const BASE_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");
const DOMAIN_STOPWORDS: &str = include_str!("../../data/stopwords_domain.txt");

const NUMBER_WORDS: [&str; 21] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
    "twenty",
];

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("invalid negation pattern {pattern:?}: {source}")]
    Pattern {
        pattern: String,
        #[source]
        source: regex::Error,
    },
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("vocabulary is empty after applying min_cf={min_cf}")]
    EmptyVocabulary { min_cf: usize },
    #[error("unknown question id {0:?}")]
    UnknownQuestion(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuestionId {
    #[serde(rename = "PEoU_open")]
    PeouOpen,
    #[serde(rename = "PU_open")]
    PuOpen,
}

impl QuestionId {
    pub const ALL: [QuestionId; 2] = [QuestionId::PeouOpen, QuestionId::PuOpen];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionId::PeouOpen => "PEoU_open",
            QuestionId::PuOpen => "PU_open",
        }
    }
}

impl fmt::Display for QuestionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuestionId {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "PEoU_open" => Ok(QuestionId::PeouOpen),
            "PU_open" => Ok(QuestionId::PuOpen),
            other => Err(CorpusError::UnknownQuestion(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    pub respondent_id: String,
    pub question_id: QuestionId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub respondent_id: String,
    pub question_id: QuestionId,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegationRule {
    pub pattern: String,
    pub replacement: String,
}

impl NegationRule {
    fn new(pattern: &str, replacement: &str) -> Self {
        Self { pattern: pattern.to_string(), replacement: replacement.to_string() }
    }
}

fn default_negations() -> Vec<NegationRule> {
    vec![
        NegationRule::new(
            r"(?i)(do\s*not\s*trust|don['’]t\s*trust|don['’]t\s*fully\s*trust|would\s*not\s*trust|never\s*trust)",
            "no_trust",
        ),
        NegationRule::new(
            r"(?i)(unsafe|not\s*safe|not\s*feel\s*safe|not\s*be\s*safe|doesn['’]t\s*seem\s*very\s*safe|don['’]t\s*feel\s*it['’]s\s*safe)",
            "unsafe",
        ),
        NegationRule::new(r"(?i)not\s*feel", "not_feel"),
        NegationRule::new(r"(?i)don['’]t\s*think", "dont_think"),
    ]
}

fn word_list(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect()
}

pub fn default_stopwords() -> Vec<String> {
    let mut words = word_list(BASE_STOPWORDS);
    words.extend(word_list(DOMAIN_STOPWORDS));
    words.sort();
    words.dedup();
    words
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub negation_patterns: Vec<NegationRule>,
    /// Replaces the shipped list when given in a config file.
    pub stopwords: Vec<String>,
    /// Appended to `stopwords`.
    pub extra_stopwords: Vec<String>,
    pub min_word_count: usize,
    pub phrase_min_count: usize,
    pub phrase_threshold: f64,
    pub min_cf: usize,
    pub spell_out_numbers: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            negation_patterns: default_negations(),
            stopwords: default_stopwords(),
            extra_stopwords: Vec::new(),
            min_word_count: 7,
            phrase_min_count: 5,
            phrase_threshold: 100.0,
            min_cf: 3,
            spell_out_numbers: true,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A validated [`PipelineConfig`] with its regexes compiled.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    negations: Vec<(Regex, String)>,
    stopwords: HashSet<String>,
    email: Regex,
    newline: Regex,
    number: Regex,
}

/// Everything produced by [`Pipeline::run`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub docs: Vec<TokenizedDoc>,
    pub dropped: Vec<String>,
    pub raw_word_counts: Vec<usize>,
    pub phrases: PhraseTable,
    pub vocabulary: Vocabulary,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, CorpusError> {
        if cfg.phrase_min_count < 1 {
            return Err(CorpusError::Config("phrase_min_count must be >= 1".into()));
        }
        if cfg.min_cf < 1 {
            return Err(CorpusError::Config("min_cf must be >= 1".into()));
        }
        if !cfg.phrase_threshold.is_finite() {
            return Err(CorpusError::Config("phrase_threshold must be finite".into()));
        }
        let negations = cfg
            .negation_patterns
            .iter()
            .map(|r| {
                Regex::new(&r.pattern)
                    .map(|re| (re, r.replacement.clone()))
                    .map_err(|source| CorpusError::Pattern { pattern: r.pattern.clone(), source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let stopwords = cfg
            .stopwords
            .iter()
            .chain(&cfg.extra_stopwords)
            .map(|s| s.to_lowercase())
            .collect();
        Ok(Self {
            negations,
            stopwords,
            email: Regex::new(r"\S+@\S+\s?").expect("static regex"),
            newline: Regex::new(r"\r\n|\n|\r").expect("static regex"),
            number: Regex::new(r"\b\d+(?:[.,]\d+)*\b").expect("static regex"),
            cfg,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    /// Removes e-mail addresses and line breaks, rewrites negation phrases to
    /// their underscore forms and spells out the integers 0 to 20.
    pub fn normalize_text(&self, text: &str) -> String {
        let mut s = self.email.replace_all(text, "").into_owned();
        s = self.newline.replace_all(&s, " ").into_owned();
        for (re, repl) in &self.negations {
            s = re.replace_all(&s, repl.as_str()).into_owned();
        }
        if self.cfg.spell_out_numbers {
            s = self
                .number
                .replace_all(&s, |caps: &regex::Captures<'_>| {
                    let m = &caps[0];
                    match m.parse::<usize>() {
                        Ok(n) if n < NUMBER_WORDS.len() && m.bytes().all(|b| b.is_ascii_digit()) => {
                            NUMBER_WORDS[n].to_string()
                        }
                        _ => m.to_string(),
                    }
                })
                .into_owned();
        }
        s
    }

    pub fn normalize(&self, raw: &RawResponse) -> RawResponse {
        RawResponse { text: self.normalize_text(&raw.text), ..raw.clone() }
    }

    pub fn remove_stopwords(&self, doc: &TokenizedDoc) -> TokenizedDoc {
        TokenizedDoc {
            tokens: doc.tokens.iter().filter(|t| !self.is_stopword(t)).cloned().collect(),
            ..doc.clone()
        }
    }

    pub fn detect_phrases(&self, docs: &[TokenizedDoc]) -> (PhraseTable, Vec<TokenizedDoc>) {
        detect_phrases(docs, self.cfg.phrase_min_count, self.cfg.phrase_threshold)
    }

    pub fn filter_short(
        &self,
        docs: Vec<TokenizedDoc>,
        raw_word_counts: &[usize],
    ) -> (Vec<TokenizedDoc>, Vec<String>) {
        filter_short(docs, raw_word_counts, self.cfg.min_word_count)
    }

    /// normalise → tokenise → length filter → stopwords → phrases → stem → vocabulary.
    pub fn run(&self, responses: &[RawResponse]) -> Result<PipelineOutput, CorpusError> {
        let raw_word_counts: Vec<usize> = responses.iter().map(|r| raw_word_count(&r.text)).collect();
        let docs: Vec<TokenizedDoc> = responses.iter().map(|r| tokenize(&self.normalize(r))).collect();
        let (docs, dropped) = self.filter_short(docs, &raw_word_counts);
        let docs: Vec<TokenizedDoc> = docs.iter().map(|d| self.remove_stopwords(d)).collect();
        let (phrases, docs) = self.detect_phrases(&docs);
        let docs: Vec<TokenizedDoc> = docs.iter().map(stem_doc).collect();
        let vocabulary = build_vocabulary(&docs, self.cfg.min_cf)?;
        Ok(PipelineOutput { docs, dropped, raw_word_counts, phrases, vocabulary })
    }
}

/// Whitespace word count of the original text.
pub fn raw_word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Lowercases and splits on every character outside `[A-Za-z_]`.
/// Tokens made only of underscores are dropped.
pub fn tokenize(raw: &RawResponse) -> TokenizedDoc {
    let tokens = tokenize_text(&raw.text);
    TokenizedDoc { respondent_id: raw.respondent_id.clone(), question_id: raw.question_id, tokens }
}

pub fn tokenize_text(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_ascii_alphabetic() || ch == '_' {
            cur.push(ch.to_ascii_lowercase());
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens.retain(|t| t.bytes().any(|b| b != b'_'));
    tokens
}

pub fn remove_stopwords(doc: &TokenizedDoc, stopwords: &HashSet<String>) -> TokenizedDoc {
    TokenizedDoc {
        tokens: doc.tokens.iter().filter(|t| !stopwords.contains(*t)).cloned().collect(),
        ..doc.clone()
    }
}

pub fn detect_phrases(
    docs: &[TokenizedDoc],
    min_count: usize,
    threshold: f64,
) -> (PhraseTable, Vec<TokenizedDoc>) {
    let table = learn_phrases(docs, min_count, threshold);
    let rewritten = docs
        .iter()
        .map(|d| TokenizedDoc { tokens: table.apply(&d.tokens), ..d.clone() })
        .collect();
    (table, rewritten)
}

pub fn stem_doc(doc: &TokenizedDoc) -> TokenizedDoc {
    TokenizedDoc { tokens: doc.tokens.iter().map(|t| porter::stem(t)).collect(), ..doc.clone() }
}

/// Drops documents whose original word count is below `min_word_count`.
/// Returns the kept documents and the dropped respondent ids.
pub fn filter_short(
    docs: Vec<TokenizedDoc>,
    raw_word_counts: &[usize],
    min_word_count: usize,
) -> (Vec<TokenizedDoc>, Vec<String>) {
    assert_eq!(docs.len(), raw_word_counts.len(), "one word count per document");
    let mut kept = Vec::with_capacity(docs.len());
    let mut dropped = Vec::new();
    for (doc, &n) in docs.into_iter().zip(raw_word_counts) {
        if n < min_word_count {
            dropped.push(doc.respondent_id);
        } else {
            kept.push(doc);
        }
    }
    (kept, dropped)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    min_cf: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    min_cf: usize,
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        VocabularyRepr { terms: self.terms.clone(), min_cf: self.min_cf }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = VocabularyRepr::deserialize(d)?;
        Vocabulary::from_terms(repr.terms, repr.min_cf).map_err(serde::de::Error::custom)
    }
}

impl Vocabulary {
    pub fn from_terms(terms: Vec<String>, min_cf: usize) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(CorpusError::Config(format!("duplicate vocabulary term {t:?}")));
            }
        }
        Ok(Self { terms, index, min_cf })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn min_cf(&self) -> usize {
        self.min_cf
    }

    pub fn term(&self, i: usize) -> &str {
        &self.terms[i]
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Token ids in order, skipping out-of-vocabulary tokens.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.index_of(t)).collect()
    }

    pub fn bag_of_words(&self, tokens: &[String]) -> Vec<usize> {
        let mut counts = vec![0; self.len()];
        for i in self.encode(tokens) {
            counts[i] += 1;
        }
        counts
    }
}

/// Terms with corpus frequency `>= min_cf`, sorted lexicographically.
pub fn build_vocabulary(docs: &[TokenizedDoc], min_cf: usize) -> Result<Vocabulary, CorpusError> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for d in docs {
        for t in &d.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let terms: Vec<String> =
        counts.into_iter().filter(|&(_, c)| c >= min_cf).map(|(t, _)| t.to_string()).collect();
    if terms.is_empty() {
        return Err(CorpusError::EmptyVocabulary { min_cf });
    }
    Vocabulary::from_terms(terms, min_cf)
}

/// Reads `respondent_id,question_id,text` rows.
pub fn read_responses_csv(path: &Path) -> Result<Vec<RawResponse>, CorpusError> {
    let mut rdr = csv::Reader::from_path(path)?;
    read_responses(&mut rdr)
}

pub fn read_responses<R: std::io::Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<RawResponse>, CorpusError> {
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<RawResponseRow>().enumerate() {
        let row = rec?;
        let question_id = row
            .question_id
            .parse()
            .map_err(|e: CorpusError| CorpusError::Row { row: i + 2, message: e.to_string() })?;
        out.push(RawResponse { respondent_id: row.respondent_id, question_id, text: row.text });
    }
    Ok(out)
}

#[derive(Deserialize, Serialize)]
struct RawResponseRow {
    respondent_id: String,
    question_id: String,
    text: String,
}

pub fn write_responses_csv(path: &Path, responses: &[RawResponse]) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in responses {
        w.serialize(RawResponseRow {
            respondent_id: r.respondent_id.clone(),
            question_id: r.question_id.to_string(),
            text: r.text.clone(),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// One JSON object per line: `{respondent_id, question_id, tokens}`.
pub fn to_json_lines(docs: &[TokenizedDoc]) -> String {
    let mut s = String::new();
    for d in docs {
        s.push_str(&serde_json::to_string(d).expect("token docs serialise"));
        s.push('\n');
    }
    s
}

pub fn from_json_lines(text: &str) -> Result<Vec<TokenizedDoc>, CorpusError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(CorpusError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(text: &str) -> RawResponse {
        RawResponse { respondent_id: "r1".into(), question_id: QuestionId::PeouOpen, text: text.into() }
    }

    fn doc(tokens: &[&str]) -> TokenizedDoc {
        TokenizedDoc {
            respondent_id: "r1".into(),
            question_id: QuestionId::PuOpen,
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn pipeline() -> Pipeline {
        Pipeline::new(PipelineConfig::default()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let p = pipeline();
        assert_eq!(p.normalize_text("I don't trust them\n"), "I no_trust them ");
        assert_eq!(p.normalize_text(""), "");
        assert_eq!(p.normalize_text("3 cars"), "three cars");
        assert_eq!(p.normalize_text("I do not trust it"), "I no_trust it");
        assert_eq!(p.normalize_text("it is not safe"), "it is unsafe");
        assert_eq!(p.normalize_text("I don't think so"), "I dont_think so");
        assert_eq!(p.normalize_text("mail me at a.b@example.com please"), "mail me at please");
        assert_eq!(p.normalize_text("21 and 20 and 10,000"), "21 and twenty and 10,000");
        assert_eq!(p.normalize_text("3rd time"), "3rd time");
    }

    #[test]
    fn bad_pattern_fails_at_load() {
        let cfg = PipelineConfig {
            negation_patterns: vec![NegationRule::new("(unclosed", "x")],
            ..Default::default()
        };
        assert!(matches!(Pipeline::new(cfg), Err(CorpusError::Pattern { .. })));
        let cfg = PipelineConfig { min_cf: 0, ..Default::default() };
        assert!(Pipeline::new(cfg).is_err());
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize(&raw("Easy to use!")).tokens, ["easy", "to", "use"]);
        assert_eq!(tokenize(&raw("no_trust AVs.")).tokens, ["no_trust", "avs"]);
        assert_eq!(tokenize(&raw("A-B c")).tokens, ["a", "b", "c"]);
        assert!(tokenize(&raw("")).tokens.is_empty());
        assert_eq!(tokenize(&raw("x __ 42 y")).tokens, ["x", "y"]);
    }

    #[test]
    fn stopword_examples() {
        let sw: HashSet<String> = ["the", "is", "car"].iter().map(|s| s.to_string()).collect();
        assert_eq!(remove_stopwords(&doc(&["the", "car", "is", "easy"]), &sw).tokens, ["easy"]);
        assert!(remove_stopwords(&doc(&[]), &sw).tokens.is_empty());
        assert!(remove_stopwords(&doc(&["the", "is"]), &sw).tokens.is_empty());
        let p = pipeline();
        for w in ["the", "i", "autonomous", "vehicles", "cars", "phone"] {
            assert!(p.is_stopword(w), "{w}");
        }
        assert!(!p.is_stopword("no_trust"));
    }

    #[test]
    fn extra_stopwords_extend_the_list() {
        let cfg = PipelineConfig { extra_stopwords: vec!["Avs".into()], ..Default::default() };
        let p = Pipeline::new(cfg).unwrap();
        assert!(p.is_stopword("avs") && p.is_stopword("the"));
    }

    #[test]
    fn filter_short_boundary() {
        let docs = vec![doc(&["a"]), doc(&["b"])];
        let (kept, dropped) = filter_short(docs.clone(), &[6, 7], 7);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].tokens, ["b"]);
        assert_eq!(dropped, ["r1"]);
        let (kept, dropped) = filter_short(docs, &[6, 7], 0);
        assert_eq!(kept.len(), 2);
        assert!(dropped.is_empty());
    }

    #[test]
    fn vocabulary_examples() {
        let docs = vec![doc(&["a", "a", "a"]), doc(&["b"])];
        let v = build_vocabulary(&docs, 3).unwrap();
        assert_eq!(v.terms(), ["a"]);
        let v = build_vocabulary(&docs, 1).unwrap();
        assert_eq!(v.terms(), ["a", "b"]);
        let docs = vec![doc(&["zeta", "alpha", "mid"])];
        let v = build_vocabulary(&docs, 1).unwrap();
        assert_eq!(v.terms(), ["alpha", "mid", "zeta"]);
        for i in 0..v.len() {
            assert_eq!(v.index_of(v.term(i)), Some(i));
        }
        assert!(matches!(build_vocabulary(&docs, 2), Err(CorpusError::EmptyVocabulary { min_cf: 2 })));
        assert_eq!(v.bag_of_words(&["mid".into(), "oov".into(), "mid".into()]), [0, 2, 0]);
    }

    #[test]
    fn vocabulary_json_shape() {
        let v = Vocabulary::from_terms(vec!["a".into(), "b".into()], 3).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"terms":["a","b"],"min_cf":3}"#);
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<Vocabulary>(r#"{"terms":["a","a"],"min_cf":1}"#).is_err());
    }

    #[test]
    fn phrase_detection() {
        // "self driving" ten times among filler so that V is large enough.
        let mut docs = Vec::new();
        for i in 0..10 {
            docs.push(doc(&["self", "driving", &format!("w{i}"), &format!("x{i}")]));
        }
        // n_ab = 10, n_a = n_b = 10, V = 22: score = (10 - 5) * 22 / 100 = 1.1
        let oracle = (10.0 - 5.0) * 22.0 / (10.0 * 10.0);
        let (table, out) = detect_phrases(&docs, 5, 1.0);
        assert!((table.phrases["self driving"] - oracle).abs() < 1e-12);
        assert_eq!(out[0].tokens, ["self_driving", "w0", "x0"]);
        let (table, out) = detect_phrases(&docs, 5, 1.2);
        assert!(table.phrases.is_empty());
        assert_eq!(out, docs);
        let (_, out) = detect_phrases(&docs, 11, 0.0);
        assert_eq!(out, docs);
        let single = vec![doc(&["only"])];
        assert_eq!(detect_phrases(&single, 1, 0.0).1, single);
    }

    #[test]
    fn stem_examples() {
        assert_eq!(stem_doc(&doc(&["easiness", "easy"])).tokens, ["easi", "easi"]);
        assert_eq!(stem_doc(&doc(&["travelled", "travelling"])).tokens, ["travel", "travel"]);
        assert_eq!(stem_doc(&doc(&["oper"])).tokens, ["oper"]);
    }

    #[test]
    fn json_lines_round_trip() {
        let docs = vec![doc(&["a", "b"]), doc(&[])];
        let text = to_json_lines(&docs);
        assert!(text.starts_with(r#"{"respondent_id":"r1","question_id":"PU_open","tokens":["a","b"]}"#));
        assert_eq!(from_json_lines(&text).unwrap(), docs);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn tokens_are_lowercase_ascii(text in "\\PC{0,80}") {
                for t in tokenize_text(&text) {
                    prop_assert!(!t.is_empty());
                    prop_assert!(t.bytes().all(|b| b.is_ascii_lowercase() || b == b'_'));
                    prop_assert!(t.bytes().any(|b| b != b'_'));
                }
            }

            #[test]
            fn tokenizing_joined_tokens_is_identity(text in "[a-zA-Z ,.!?0-9']{0,80}") {
                let once = tokenize_text(&text);
                prop_assert_eq!(tokenize_text(&once.join(" ")), once);
            }

            #[test]
            fn stopword_removal_keeps_order_and_drops_only_stopwords(words in proptest::collection::vec("[a-z]{1,6}", 0..30)) {
                let p = pipeline();
                let d = doc(&words.iter().map(String::as_str).collect::<Vec<_>>());
                let out = p.remove_stopwords(&d);
                let expected: Vec<String> = words.iter().filter(|w| !p.is_stopword(w)).cloned().collect();
                prop_assert_eq!(out.tokens, expected);
            }

            #[test]
            fn filter_short_partitions(counts in proptest::collection::vec(0usize..15, 0..20), min in 0usize..12) {
                let docs: Vec<TokenizedDoc> = (0..counts.len())
                    .map(|i| TokenizedDoc { respondent_id: format!("r{i}"), ..doc(&[]) })
                    .collect();
                let (kept, dropped) = filter_short(docs, &counts, min);
                prop_assert_eq!(kept.len() + dropped.len(), counts.len());
                prop_assert_eq!(dropped.len(), counts.iter().filter(|&&c| c < min).count());
            }

            #[test]
            fn vocabulary_indices_are_a_bijection(words in proptest::collection::vec("[a-e]{1,2}", 1..60), min_cf in 1usize..4) {
                let d = doc(&words.iter().map(String::as_str).collect::<Vec<_>>());
                if let Ok(v) = build_vocabulary(std::slice::from_ref(&d), min_cf) {
                    for (i, t) in v.terms().iter().enumerate() {
                        prop_assert_eq!(v.index_of(t), Some(i));
                        prop_assert!(words.iter().filter(|w| *w == t).count() >= min_cf);
                    }
                    prop_assert!(v.terms().windows(2).all(|w| w[0] != w[1]));
                }
            }
        }
    }
}
