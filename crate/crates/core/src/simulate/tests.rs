use super::*;
use crate::corpus::porter::stem;
use crate::corpus::{Pipeline, PipelineConfig};
use crate::survey::{load_dataset, read_dataset};

fn small(n: usize, seed: u64) -> SimConfig {
    SimConfig { n_per_version: n, seed, ..Default::default() }
}

#[test]
fn pseudo_words_are_distinct_and_stable_under_cleaning() {
    let pipeline = Pipeline::new(PipelineConfig::default()).unwrap();
    let words: Vec<String> = (0..2000).map(pseudo_word).collect();
    let set: std::collections::HashSet<&String> = words.iter().collect();
    assert_eq!(set.len(), words.len());
    for w in &words {
        assert_eq!(&stem(w), w);
        assert!(!pipeline.is_stopword(w), "{w}");
        assert!(w.chars().all(|c| c.is_ascii_lowercase()));
    }
    for f in FILLERS {
        assert!(pipeline.is_stopword(f));
    }
}

#[test]
fn planted_phi_rows_are_distributions() {
    for sep in [0.0, 0.5, 1.0] {
        let phi = planted_phi(7, 200, sep);
        for t in 0..7 {
            assert!((phi.row(t).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn single_topic_assigns_everything_to_zero() {
    let c = simulate_lda_corpus(&LdaSimConfig { k: 1, n_docs: 50, ..Default::default() }).unwrap();
    assert!(c.z.iter().flatten().all(|&z| z == 0));
    assert!(c.theta.as_slice().iter().all(|&t| t == 1.0));
}

#[test]
fn disjoint_topics_respect_support() {
    let cfg = LdaSimConfig { separation: 1.0, n_docs: 200, ..Default::default() };
    let c = simulate_lda_corpus(&cfg).unwrap();
    for d in 0..c.docs.len() {
        for (&w, &z) in c.docs[d].iter().zip(&c.z[d]) {
            assert!(c.phi[(z, w)] > 0.0);
            assert!(c.theta[(d, z)] > 0.0);
            assert_eq!(w * 4 / 200, z);
        }
    }
}

#[test]
fn empirical_topic_word_frequencies_converge() {
    // ~10^5 tokens per topic
    let cfg = LdaSimConfig { n_docs: 34_000, seed: 3, ..Default::default() };
    let c = simulate_lda_corpus(&cfg).unwrap();
    let mut counts = Matrix::<f64>::zeros(4, 200);
    for (doc, zs) in c.docs.iter().zip(&c.z) {
        for (&w, &z) in doc.iter().zip(zs) {
            counts[(z, w)] += 1.0;
        }
    }
    let total: usize = c.docs.iter().map(Vec::len).sum();
    assert!(total > 380_000, "{total}");
    for t in 0..4 {
        let n: f64 = counts.row(t).iter().sum();
        assert!(n > 90_000.0);
        let tv: f64 = 0.5 * (0..200).map(|w| (counts[(t, w)] / n - c.phi[(t, w)]).abs()).sum::<f64>();
        assert!(tv < 0.02, "topic {t}: {tv}");
    }
}

#[test]
fn mean_length_follows_xi() {
    let c = simulate_lda_corpus(&LdaSimConfig { n_docs: 4000, xi: 12.0, ..Default::default() }).unwrap();
    let mean = c.docs.iter().map(Vec::len).sum::<usize>() as f64 / 4000.0;
    assert!((mean - 12.0).abs() < 0.25, "{mean}");
}

#[test]
fn lda_config_validation() {
    assert!(LdaSimConfig { alpha: 0.0, ..Default::default() }.validate().is_err());
    let bad = Matrix::from_fn(4, 200, |_, _| 0.001);
    assert!(LdaSimConfig { phi: Some(bad), ..Default::default() }.validate().is_err());
}

#[test]
fn zero_choice_params_give_equal_shares() {
    let base = small(3334, 5);
    let mut truth = default_truth(&base);
    truth.choice = ChoiceParams::zeros(3, 2, 3);
    let cfg = SimConfig { truth: Some(truth), generate_text: false, ..base };
    let s = simulate_survey(&cfg).unwrap();
    let n = s.records.len() as f64;
    for c in 0..3 {
        let share = s.records.iter().filter(|r| r.choice == c).count() as f64 / n;
        assert!((share - 1.0 / 3.0).abs() < 0.02, "{share}");
    }
}

#[test]
fn version_masks_are_respected() {
    let s = simulate_survey(&small(20, 1)).unwrap();
    assert_eq!(s.records.len(), 60);
    for r in &s.records {
        assert_eq!(r.likert.is_some(), r.version.has_likert());
        assert_eq!(r.topic_props.is_some(), r.version.has_topics());
        if let Some(tp) = &r.topic_props {
            assert!((tp[..4].iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((tp[4..].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
    let with_text: std::collections::HashSet<&str> = s.responses.iter().map(|r| r.respondent_id.as_str()).collect();
    for r in &s.records {
        assert_eq!(with_text.contains(r.respondent_id.as_str()), r.version.has_topics());
    }
    assert_eq!(s.responses.len(), 2 * 20);
}

#[test]
fn deterministic_under_seed() {
    let a = simulate_survey(&small(15, 9)).unwrap();
    let b = simulate_survey(&small(15, 9)).unwrap();
    assert_eq!(a, b);
    let c = simulate_survey(&small(15, 10)).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn attitudes_centre_on_head_means() {
    let s = simulate_survey(&SimConfig { generate_text: false, ..small(2000, 2) }).unwrap();
    let cfg = &s.truth.config;
    let mut resid = [0.0f64; 2];
    let mut sq = [0.0f64; 2];
    for (i, r) in s.records.iter().enumerate() {
        let x: Vec<f64> = match r.version {
            Version::Oe => r.topic_props.clone().unwrap(),
            _ => r.likert.as_ref().unwrap().iter().flat_map(|&l| (1..=5).map(move |j| if j == l { 1.0 } else { 0.0 })).collect(),
        };
        let m = attitude_mean(s.truth.params.head(r.version).unwrap(), &x).unwrap();
        for k in 0..2 {
            let e = s.att[(i, k)] - m[k];
            resid[k] += e;
            sq[k] += e * e;
        }
    }
    let n = s.records.len() as f64;
    for k in 0..2 {
        assert!((resid[k] / n).abs() < 0.05);
        assert!((sq[k] / n - 1.0).abs() < 0.06);
    }
    assert_eq!(cfg.k_att, 2);
}

#[test]
fn records_round_trip_through_loader() {
    let s = simulate_survey(&small(30, 4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = s.write_dir(dir.path()).unwrap();
    assert_eq!(files.len(), 4);
    let manifest = SchemaManifest::from_json_file(&dir.path().join("schema.json")).unwrap();
    let report = load_dataset(&dir.path().join("survey.csv"), &manifest).unwrap();
    assert!(report.rejected.is_empty());
    assert_eq!(report.records, s.records);
    let mut buf = Vec::new();
    crate::survey::write_dataset(&mut buf, &manifest, &s.records).unwrap();
    assert!(read_dataset(buf.as_slice(), &manifest).unwrap().rejected.is_empty());
}

#[test]
fn generated_text_survives_cleaning() {
    let s = simulate_survey(&small(40, 6)).unwrap();
    let out = Pipeline::new(PipelineConfig { min_cf: 1, ..Default::default() }).unwrap().run(&s.responses).unwrap();
    assert!(out.dropped.is_empty());
    assert_eq!(out.docs.len(), s.responses.len());
    let vocab: std::collections::HashSet<&String> = s.truth.vocabularies.iter().flat_map(|(_, v)| v).collect();
    for d in &out.docs {
        assert!(d.tokens.iter().all(|t| vocab.contains(t)), "{:?}", d.tokens);
    }
}

#[test]
fn config_validation_catches_shape_errors() {
    let mut cfg = small(10, 0);
    cfg.likert.cutpoints = vec![0.5, 0.1];
    assert!(cfg.validate().is_err());
    let mut cfg = small(10, 0);
    let mut truth = default_truth(&cfg);
    truth.choice = ChoiceParams::zeros(2, 2, 3);
    cfg.truth = Some(truth);
    assert!(cfg.validate().is_err());
    let cfg: SimConfig = serde_json::from_str(r#"{"n_per_version": 5, "covariates": [{"name": "x", "dist": "normal", "mean": 1.0, "sd": 2.0}]}"#).unwrap();
    assert!(cfg.validate().is_ok());
    assert_eq!(cfg.covariates[0].dist, CovariateDist::Normal { mean: 1.0, sd: 2.0 });
}

#[test]
fn default_truth_is_bounded_with_zero_base() {
    let t = default_truth(&SimConfig::default());
    assert!(t.choice.beta.column(0).iter().all(|&b| b == 0.0));
    assert_eq!(t.choice.alpha[0], 0.0);
    assert!(t.choice.beta.as_slice().iter().all(|b| b.abs() <= 1.0));
    for (_, h) in &t.heads {
        assert!(h.gamma.as_slice().iter().chain(&h.alpha).all(|v| v.abs() <= 1.0));
    }
}
