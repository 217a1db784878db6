use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::*;
use crate::corpus::{QuestionId, Vocabulary};

fn vocab(n: usize) -> Vocabulary {
    Vocabulary::from_terms((0..n).map(|i| format!("w{i:03}")).collect(), 1).unwrap()
}

/// Two topics with disjoint supports of `per_topic` words each; returns the
/// corpus and the planted phi. Document mixtures are drawn from the same
/// symmetric Dirichlet(0.1) the fits below assume.
fn planted(docs: usize, per_topic: usize, len: usize, seed: u64) -> (BowCorpus, Vec<Vec<f64>>) {
    let v = 2 * per_topic;
    let mut rng = crate::rng::stream(seed, "test-planted", &[]);
    let mut phi = vec![vec![0.0; v]; 2];
    for (t, row) in phi.iter_mut().enumerate() {
        let weights: Vec<f64> = (0..per_topic).map(|i| 1.0 + i as f64).collect();
        let total: f64 = weights.iter().sum();
        for (i, w) in weights.iter().enumerate() {
            row[t * per_topic + i] = w / total;
        }
    }
    let g = Gamma::new(0.1, 1.0).unwrap();
    let mut out = Vec::new();
    for d in 0..docs {
        let a = g.sample(&mut rng);
        let b = g.sample(&mut rng);
        let th0 = a / (a + b);
        let words = (0..len)
            .map(|_| {
                let t = usize::from(rng.random::<f64>() >= th0);
                let mut u = rng.random::<f64>();
                let mut pick = v - 1;
                for (w, &p) in phi[t].iter().enumerate() {
                    if u < p {
                        pick = w;
                        break;
                    }
                    u -= p;
                }
                pick
            })
            .collect();
        out.push(BowDoc { respondent_id: format!("d{d}"), words });
    }
    (BowCorpus { vocab: vocab(v), docs: out }, phi)
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn cfg(k: usize) -> LdaConfig {
    LdaConfig { k, alpha: 0.1, beta: 0.01, burn_in: 50, train_sweeps: 50, seed: 42 }
}

fn assert_row_stochastic(m: &Matrix<f64>) {
    for i in 0..m.rows() {
        let s: f64 = m.row(i).iter().sum();
        assert!((s - 1.0).abs() < 1e-9, "row {i} sums to {s}");
    }
}

#[test]
fn single_document_single_topic() {
    let corpus = BowCorpus {
        vocab: Vocabulary::from_terms(vec!["a".into()], 1).unwrap(),
        docs: vec![BowDoc { respondent_id: "r".into(), words: vec![0, 0, 0] }],
    };
    let m = fit_lda(&corpus, &cfg(1)).unwrap();
    assert_eq!(m.phi.as_slice(), &[1.0]);
    assert_eq!(m.doc_theta.as_slice(), &[1.0]);
    assert!(m.assignments[0].iter().all(|&z| z == 0));
}

#[test]
fn recovers_planted_topics() {
    let (corpus, truth) = planted(500, 10, 12, 3);
    let m = fit_lda(&corpus, &cfg(2)).unwrap();
    let direct = tv(m.phi.row(0), &truth[0]) + tv(m.phi.row(1), &truth[1]);
    let swapped = tv(m.phi.row(0), &truth[1]) + tv(m.phi.row(1), &truth[0]);
    let mean_tv = direct.min(swapped) / 2.0;
    assert!(mean_tv < 0.05, "mean TV {mean_tv}");
    assert_row_stochastic(&m.phi);
    assert_row_stochastic(&m.doc_theta);
    assert!(m.phi.as_slice().iter().all(|&p| p > 0.0));
    assert!(m.assignments.iter().flatten().all(|&z| z < 2));
}

#[test]
fn seeded_fits_are_identical() {
    let (corpus, _) = planted(60, 5, 8, 9);
    let a = fit_lda(&corpus, &cfg(2)).unwrap();
    let b = fit_lda(&corpus, &cfg(2)).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_ne!(initial_assignments(&corpus, 42, 2), initial_assignments(&corpus, 7, 2));
}

#[test]
fn initial_state_follows_documents_not_positions() {
    let (corpus, _) = planted(30, 5, 8, 1);
    let mut reversed = corpus.clone();
    reversed.docs.reverse();
    let a = initial_assignments(&corpus, 42, 3);
    let mut b = initial_assignments(&reversed, 42, 3);
    b.reverse();
    assert_eq!(a, b);
}

#[test]
fn likelihood_improves_over_training() {
    let (corpus, _) = planted(200, 10, 12, 5);
    let m = fit_lda(&corpus, &cfg(2)).unwrap();
    assert_eq!(m.ll_trace.len(), 100);
    assert!(m.ll_per_word >= m.ll_trace[0]);

    let (held, _) = planted(100, 10, 12, 6);
    let held: Vec<Vec<usize>> = held.docs.into_iter().map(|d| d.words).collect();
    let early = fit_lda(&corpus, &LdaConfig { burn_in: 0, train_sweeps: 1, ..cfg(2) }).unwrap();
    let late = m.held_out_ll_per_word(&held, 30, 1);
    let first = early.held_out_ll_per_word(&held, 30, 1);
    assert!(late >= first, "{late} < {first}");
}

#[test]
fn empty_documents_get_uniform_theta() {
    let (mut corpus, _) = planted(20, 5, 8, 2);
    corpus.docs.push(BowDoc { respondent_id: "empty".into(), words: vec![] });
    let m = fit_lda(&corpus, &cfg(2)).unwrap();
    assert_eq!(m.empty_docs, vec![20]);
    assert_eq!(m.doc_theta.row(20), &[0.5, 0.5]);
}

#[test]
fn rejects_bad_config_and_corpus() {
    let (corpus, _) = planted(5, 3, 4, 2);
    assert!(fit_lda(&corpus, &LdaConfig { k: 0, ..cfg(2) }).is_err());
    assert!(fit_lda(&corpus, &LdaConfig { alpha: 0.0, ..cfg(2) }).is_err());
    assert!(fit_lda(&corpus, &LdaConfig { train_sweeps: 0, ..cfg(2) }).is_err());
    let empty = BowCorpus { vocab: corpus.vocab.clone(), docs: vec![] };
    assert!(matches!(fit_lda(&empty, &cfg(2)), Err(TopicsError::EmptyCorpus)));
    let mut bad = corpus.clone();
    bad.docs[0].words.push(99);
    assert!(matches!(fit_lda(&bad, &cfg(2)), Err(TopicsError::WordOutOfRange { .. })));
}

#[test]
fn inference_on_new_documents() {
    let (corpus, _) = planted(300, 10, 12, 4);
    let m = fit_lda(&corpus, &cfg(2)).unwrap();
    // words 0..10 belong to planted topic 0; find the fitted topic holding them
    let t0 = if m.phi[(0, 0)] > m.phi[(1, 0)] { 0 } else { 1 };
    let doc: Vec<usize> = (0..20).map(|i| i % 10).collect();
    let th = m.infer_theta(&doc, 50, 3);
    assert!(!th.empty);
    assert!(th.theta[t0] > 0.9, "{:?}", th.theta);
    let th = m.infer_theta(&[], 50, 3);
    assert!(th.empty);
    assert_eq!(th.theta, vec![0.5, 0.5]);
    let train = &corpus.docs[17].words;
    let th = m.infer_theta(train, 50, 11);
    let l1: f64 = th.theta.iter().zip(m.doc_theta.row(17)).map(|(a, b)| (a - b).abs()).sum();
    assert!(l1 < 0.15, "L1 {l1}");
    assert_eq!(m.infer_theta(train, 20, 5), m.infer_theta(train, 20, 5));

    let oov = TokenizedDoc {
        respondent_id: "x".into(),
        question_id: QuestionId::PuOpen,
        tokens: vec!["nothing".into(), "known".into()],
    };
    assert!(m.infer_theta_tokens(&oov, 10, 1).empty);
}

fn hand_model(phi: Vec<Vec<f64>>, terms: &[&str]) -> TopicModel {
    let k = phi.len();
    TopicModel {
        config: LdaConfig { k, ..LdaConfig::default() },
        vocab: Vocabulary::from_terms(terms.iter().map(|s| s.to_string()).collect(), 1).unwrap(),
        phi: Matrix::from_rows(&phi).unwrap(),
        doc_theta: Matrix::zeros(0, k),
        assignments: vec![],
        ll_per_word: 0.0,
        ll_trace: vec![],
        empty_docs: vec![],
    }
}

#[test]
fn top_words_order_and_bounds() {
    let m = hand_model(vec![vec![0.4, 0.6, 0.0], vec![0.25, 0.25, 0.5]], &["y", "x", "z"]);
    let top = m.top_words(0, 2).unwrap();
    assert_eq!(top, vec![("x".to_string(), 0.6), ("y".to_string(), 0.4)]);
    assert!(m.top_words(0, 0).unwrap().is_empty());
    assert_eq!(m.top_words(1, 10).unwrap().len(), 3);
    // tie between x and y broken lexicographically
    assert_eq!(m.top_words(1, 3).unwrap()[1].0, "x");
    assert!(matches!(m.top_words(2, 1), Err(TopicsError::TopicOutOfRange { topic: 2, k: 2 })));

    let corpus = BowCorpus {
        vocab: Vocabulary::from_terms(vec!["x".into(), "y".into()], 1).unwrap(),
        docs: (0..100).map(|i| BowDoc { respondent_id: format!("{i}"), words: {
            let mut w = vec![0; 6];
            w.extend([1; 4]);
            w
        } }).collect(),
    };
    let fitted = fit_lda(&corpus, &cfg(1)).unwrap();
    let top = fitted.top_words(0, 2).unwrap();
    assert_eq!(top[0].0, "x");
    assert!((top[0].1 - 0.6).abs() < 1e-4 && (top[1].1 - 0.4).abs() < 1e-4);
}

#[test]
fn document_scores_are_phi_sums() {
    let m = hand_model(vec![vec![0.5, 0.5], vec![0.1, 0.9]], &["a", "b"]);
    let doc = |t: &[&str]| TokenizedDoc {
        respondent_id: "r".into(),
        question_id: QuestionId::PeouOpen,
        tokens: t.iter().map(|s| s.to_string()).collect(),
    };
    let s = m.score_documents(&[doc(&["a", "a"]), doc(&[]), doc(&["b", "zzz", "a", "b"])]);
    assert_eq!(s.row(0), &[1.0, 0.2, 1.2]);
    assert_eq!(s.row(1), &[0.0, 0.0, 0.0]);
    let oracle0 = 0.5 + 0.5 + 0.5;
    let oracle1 = 0.9 + 0.1 + 0.9;
    assert!((s[(2, 0)] - oracle0).abs() < 1e-12);
    assert!((s[(2, 1)] - oracle1).abs() < 1e-12);
    assert!((s[(2, 2)] - (oracle0 + oracle1)).abs() < 1e-12);
}

#[test]
fn vis_export_is_consistent() {
    let (corpus, _) = planted(2, 3, 5, 8);
    let m = fit_lda(&corpus, &cfg(2)).unwrap();
    let vis = m.vis_data(&corpus);
    assert_eq!(vis.doc_lengths, vec![5, 5]);
    assert_eq!(vis.term_frequency.iter().sum::<usize>(), corpus.num_tokens());
    assert_row_stochastic(&vis.theta);
    assert_eq!((vis.phi.rows(), vis.phi.cols()), (2, 6));
    let dir = tempfile::tempdir().unwrap();
    vis.write_csv(dir.path()).unwrap();
    for f in ["phi.csv", "theta.csv", "doc_lengths.csv", "vocab.csv", "term_frequency.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let lengths = std::fs::read_to_string(dir.path().join("doc_lengths.csv")).unwrap();
    assert_eq!(lengths, "doc,length\n0,5\n1,5\n");
}

#[test]
fn json_reload_is_exact() {
    let (corpus, _) = planted(40, 4, 6, 10);
    let m = fit_lda(&corpus, &cfg(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    m.save_json(&path).unwrap();
    let back = TopicModel::load_json(&path).unwrap();
    assert_eq!(back, m);
}
