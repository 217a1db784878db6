use super::*;

fn manifest() -> SchemaManifest {
    SchemaManifest {
        columns: vec![
            ColumnSpec::likert("PEoU_1", 5),
            ColumnSpec::likert("PU_1", 5),
            ColumnSpec::topic("T1", "PEoU", 2),
            ColumnSpec::topic("T2", "PEoU", 2),
            ColumnSpec::topic("T3", "PU", 3),
            ColumnSpec::topic("T4", "PU", 3),
            ColumnSpec::topic("T5", "PU", 3),
            ColumnSpec::new("age", ColumnRole::Continuous),
            ColumnSpec::new("male", ColumnRole::Indicator),
            ColumnSpec::new("cost", ColumnRole::SpAttr),
        ],
        alternatives: vec!["RegularCar".into(), "PrivateAV".into(), "SharedAV".into()],
        standardize_topic_props: false,
    }
}

const HEADER: &str = "respondent_id,version,choice,PEoU_1,PU_1,T1,T2,T3,T4,T5,age,male,cost\n";

fn load(body: &str) -> LoadReport {
    read_dataset(format!("{HEADER}{body}").as_bytes(), &manifest()).unwrap()
}

#[test]
fn lk_row_is_accepted() {
    let r = load("a,1,0,3,5,,,,,,30,1,2.5\n");
    assert!(r.rejected.is_empty(), "{:?}", r.rejected);
    let rec = &r.records[0];
    assert_eq!(rec.version, Version::Lk);
    assert_eq!(rec.likert.as_deref(), Some(&[3u8, 5][..]));
    assert!(rec.topic_props.is_none());
    assert_eq!(rec.covariates, vec![30.0, 1.0, 2.5]);
}

#[test]
fn oe_row_with_likert_is_rejected() {
    let r = load("a,1,0,3,5,,,,,,30,1,2.5\nb,3,1,2,,0.5,0.5,0.2,0.3,0.5,40,0,1\n");
    assert_eq!(r.records.len(), 1);
    assert_eq!(r.rejected.len(), 1);
    assert_eq!(r.rejected[0].row, 2);
    assert!(r.rejected[0].message.contains("Likert"));
}

#[test]
fn near_unit_topic_block_is_renormalized() {
    let r = load("b,OE,SharedAV,,,0.4995,0.5,0.2,0.3,0.5,40,0,1\n");
    assert!(r.rejected.is_empty(), "{:?}", r.rejected);
    assert_eq!(r.renormalized, vec![1]);
    let t = r.records[0].topic_props.as_ref().unwrap();
    assert!((t[0] + t[1] - 1.0).abs() < 1e-12, "{t:?}");
    assert!((t[0] - 0.4995 / 0.9995).abs() < 1e-15);
    assert_eq!(r.records[0].choice, 2);
    let r = load("b,OE,SharedAV,,,0.49,0.5,0.2,0.3,0.5,40,0,1\n");
    assert_eq!(r.rejected.len(), 1);
}

#[test]
fn bad_rows_are_reported_individually() {
    let r = load(
        "a,1,0,3.5,5,,,,,,30,1,2.5\n\
         b,3,1,,,0.6,0.5,0.2,0.3,0.5,40,0,1\n\
         c,2,7,1,1,,,,,,30,1,2.5\n\
         d,2,0,1,,,,,,,30,1,2.5\n\
         e,4,0,1,1,,,,,,30,1,2.5\n",
    );
    assert!(r.records.is_empty());
    let rows: Vec<_> = r.rejected.iter().map(|e| e.row).collect();
    assert_eq!(rows, vec![1, 2, 3, 4, 5]);
    assert!(r.rejected[0].message.contains("not an integer"));
    assert_eq!(r.rejected[1].column.as_deref(), Some("PEoU"));
    assert!(matches!(LoadReport { rejected: r.rejected.clone(), ..Default::default() }.into_records(),
        Err(SurveyError::Rows(v)) if v.len() == 5));
}

#[test]
fn missing_column_fails_the_read() {
    let err = read_dataset("respondent_id,version,choice\n".as_bytes(), &manifest()).unwrap_err();
    assert!(matches!(err, SurveyError::MissingColumn(c) if c == "PEoU_1"));
}

#[test]
fn write_then_read_round_trips() {
    let r = load("a,1,0,3,5,,,,,,30,1,2.5\nb,3,1,,,0.5,0.5,0.2,0.3,0.5,40,0,1\n");
    let mut buf = Vec::new();
    write_dataset(&mut buf, &manifest(), &r.records).unwrap();
    let again = read_dataset(buf.as_slice(), &manifest()).unwrap();
    assert_eq!(again.records, r.records);
}

fn four_rows() -> Vec<SurveyRecord> {
    load(
        "a,1,0,3,5,,,,,,20,1,1\n\
         b,2,1,1,2,,,,,,30,0,2\n\
         c,3,2,,,0.5,0.5,0.2,0.3,0.5,40,0,3\n\
         d,3,0,,,0.1,0.9,0.6,0.2,0.2,50,1,4\n",
    )
    .into_records()
    .unwrap()
}

#[test]
fn encode_one_hot_and_masking() {
    let (dm, _) = encode::<f64>(&four_rows(), &manifest(), None).unwrap();
    assert_eq!(dm.x_att.cols(), 15);
    assert_eq!(&dm.x_att.row(0)[..5], &[0.0, 0.0, 1.0, 0.0, 0.0]);
    assert_eq!(&dm.x_att.row(0)[5..10], &[0.0, 0.0, 0.0, 0.0, 1.0]);
    assert!(dm.x_att.row(0)[10..].iter().all(|&v| v == 0.0));
    assert!(dm.x_att.row(2)[..10].iter().all(|&v| v == 0.0));
    assert_eq!(&dm.x_att.row(2)[10..], &[0.5, 0.5, 0.2, 0.3, 0.5]);
    assert_eq!(dm.schema.likert_range, (0, 10));
    assert_eq!(dm.schema.topic_range, (10, 15));
    assert_eq!(dm.schema.topic_blocks, vec![("PEoU".to_string(), 2), ("PU".to_string(), 3)]);
    assert_eq!(dm.y, vec![0, 1, 2, 0]);
}

#[test]
fn encode_standardizes_continuous_only() {
    let (dm, stats) = encode::<f64>(&four_rows(), &manifest(), None).unwrap();
    // ages 20,30,40,50: mean 35, sample sd sqrt(500/3)
    let sd = (500.0f64 / 3.0).sqrt();
    assert_eq!(stats.columns.len(), 1);
    assert!((stats.columns[0].mean - 35.0).abs() < 1e-12);
    assert!((stats.columns[0].std - sd).abs() < 1e-12);
    let age = dm.x_s.column(0);
    assert!((age[0] - (-15.0 / sd)).abs() < 1e-12);
    let m: f64 = age.iter().sum::<f64>() / 4.0;
    let s = (age.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 3.0).sqrt();
    assert!(m.abs() < 1e-9 && (s - 1.0).abs() < 1e-6);
    assert_eq!(dm.x_s.column(1), vec![1.0, 0.0, 0.0, 1.0]);
    assert_eq!(dm.x_s.column(2), vec![1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn encode_test_split_reuses_train_stats() {
    let recs = four_rows();
    let (_, stats) = encode::<f64>(&recs[..2], &manifest(), None).unwrap();
    // train ages 20,30: mean 25, sd sqrt(50)
    let (dm, again) = encode::<f64>(&recs[2..], &manifest(), Some(&stats)).unwrap();
    assert_eq!(again, stats);
    let sd = 50f64.sqrt();
    assert!((dm.x_s[(0, 0)] - 15.0 / sd).abs() < 1e-12);
    assert!((dm.x_s[(1, 0)] - 25.0 / sd).abs() < 1e-12);
}

#[test]
fn encode_rejects_bad_levels_and_constant_columns() {
    let mut recs = four_rows();
    recs[0].likert = Some(vec![6, 1]);
    assert!(matches!(encode::<f64>(&recs, &manifest(), None),
        Err(SurveyError::UnseenLevel { column, value }) if column == "PEoU_1" && value == "6"));
    let mut recs = four_rows();
    recs[1].covariates[1] = 2.0;
    assert!(matches!(encode::<f64>(&recs, &manifest(), None),
        Err(SurveyError::UnseenLevel { column, .. }) if column == "male"));
    let mut recs = four_rows();
    recs.iter_mut().for_each(|r| r.covariates[0] = 33.0);
    assert!(matches!(encode::<f64>(&recs, &manifest(), None), Err(SurveyError::ConstantColumn(c)) if c == "age"));
}

#[test]
fn topic_standardization_is_opt_in() {
    let mut m = manifest();
    m.standardize_topic_props = true;
    let (dm, stats) = encode::<f64>(&four_rows(), &m, None).unwrap();
    assert_eq!(stats.columns.len(), 6);
    let t1 = stats.get("T1").unwrap();
    assert!((t1.mean - 0.3).abs() < 1e-12);
    assert!((dm.x_att[(2, 10)] - (0.5 - 0.3) / t1.std).abs() < 1e-12);
    assert_eq!(dm.x_att[(0, 10)], 0.0);
}

#[test]
fn manifest_validation() {
    let mut m = manifest();
    m.columns.push(ColumnSpec::new("version", ColumnRole::Continuous));
    assert!(m.validate().is_err());
    let mut m = manifest();
    m.columns[2].block_size = Some(3);
    assert!(m.validate().is_err());
    let json = serde_json::to_string(&manifest()).unwrap();
    let back: SchemaManifest = serde_json::from_str(&json).unwrap();
    assert_eq!(back, manifest());
    let minimal: SchemaManifest =
        serde_json::from_str(r#"{"columns":[{"name":"x","role":"continuous"}]}"#).unwrap();
    assert_eq!(minimal.n_alternatives(), 3);
    assert!(!minimal.standardize_topic_props);
}

fn records_by_version(counts: [usize; 3]) -> Vec<SurveyRecord> {
    let mut out = Vec::new();
    for (v, &n) in Version::ALL.iter().zip(&counts) {
        for i in 0..n {
            out.push(SurveyRecord {
                respondent_id: format!("{v}-{i}"),
                version: *v,
                choice: i % 3,
                likert: None,
                topic_props: None,
                covariates: vec![],
            });
        }
    }
    out
}

#[test]
fn split_sizes_follow_fraction() {
    let recs = records_by_version([34, 33, 33]);
    let (train, test) = split(&recs, 0.2, 7).unwrap();
    assert_eq!((train.len(), test.len()), (80, 20));
    for v in Version::ALL {
        let n_test = test.iter().filter(|r| r.version == v).count() as f64;
        let n = recs.iter().filter(|r| r.version == v).count() as f64;
        assert!((n_test - 0.2 * n).abs() <= 1.0);
    }
    let recs = records_by_version([4, 3, 3]);
    let (train, test) = split(&recs, 0.2, 7).unwrap();
    assert_eq!((train.len(), test.len()), (8, 2));
}

#[test]
fn split_is_deterministic_and_a_partition() {
    let recs = records_by_version([50, 40, 30]);
    let a = split(&recs, 0.25, 3).unwrap();
    let b = split(&recs, 0.25, 3).unwrap();
    assert_eq!(a, b);
    let mut ids: Vec<_> = a.0.iter().chain(&a.1).map(|r| r.respondent_id.clone()).collect();
    ids.sort();
    let mut want: Vec<_> = recs.iter().map(|r| r.respondent_id.clone()).collect();
    want.sort();
    assert_eq!(ids, want);
    let c = split(&recs, 0.25, 4).unwrap();
    assert_ne!(a.1, c.1);
}

#[test]
fn split_rejects_tiny_strata_and_bad_fractions() {
    assert!(split(&records_by_version([5, 1, 5]), 0.2, 0).is_err());
    assert!(split(&records_by_version([5, 5, 5]), 0.0, 0).is_err());
    assert!(split(&records_by_version([5, 5, 5]), 1.0, 0).is_err());
    assert!(split(&records_by_version([5, 0, 5]), 0.2, 0).is_ok());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn split_partitions(a in 2usize..40, b in 2usize..40, c in 2usize..40, f in 0.05f64..0.95, seed: u64) {
            let recs = records_by_version([a, b, c]);
            let (train, test) = split(&recs, f, seed).unwrap();
            prop_assert_eq!(train.len() + test.len(), recs.len());
            for v in Version::ALL {
                prop_assert!(train.iter().any(|r| r.version == v));
            }
            let mut ids: Vec<_> = train.iter().chain(&test).map(|r| r.respondent_id.clone()).collect();
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), recs.len());
        }

        #[test]
        fn encoded_rows_match_their_version(levels in proptest::collection::vec((1u8..=5, 1u8..=5), 3..12)) {
            let recs: Vec<SurveyRecord> = levels.iter().enumerate().map(|(i, &(l1, l2))| {
                let v = Version::ALL[i % 3];
                SurveyRecord {
                    respondent_id: i.to_string(),
                    version: v,
                    choice: i % 3,
                    likert: v.has_likert().then(|| vec![l1, l2]),
                    topic_props: v.has_topics().then(|| vec![0.25, 0.75, 0.2, 0.2, 0.6]),
                    covariates: vec![i as f64, (i % 2) as f64, 1.0],
                }
            }).collect();
            let (dm, _) = encode::<f64>(&recs, &manifest(), None).unwrap();
            for i in 0..dm.len() {
                let row = dm.x_att.row(i);
                if dm.version[i].has_likert() {
                    prop_assert_eq!(row[..10].iter().filter(|&&v| v == 1.0).count(), 2);
                    prop_assert!(row[10..].iter().all(|&v| v == 0.0));
                } else {
                    prop_assert!(row[..10].iter().all(|&v| v == 0.0));
                    prop_assert!((row[10] + row[11] - 1.0).abs() < 1e-12);
                    prop_assert!((row[12..].iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
