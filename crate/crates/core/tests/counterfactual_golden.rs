//! Seeded counterfactual tables compared byte for byte with stored copies.
//! Set `UPDATE_GOLDEN=1` to rewrite them after an intended change.

use std::path::PathBuf;

use attfusion::counterfactual::{map_to_likert, map_to_topics, side_by_side, BlockStructure, GibbsConfig};
use attfusion::simulate::{default_truth, SimConfig};
use attfusion::survey::{EncodedSchema, Version};
use attfusion::Matrix;

fn check(name: &str, got: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, got).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(got == want, "{name} differs from the stored table:\n{got}");
}

#[test]
fn seeded_tables_reproduce() {
    let cfg = SimConfig { seed: 11, ..Default::default() };
    let truth = default_truth(&cfg);
    let schema = EncodedSchema::from_manifest(&cfg.manifest());
    let att = Matrix::from_fn(10, 2, |i, k| ((i * 7 + k * 3) % 11) as f64 / 5.0 - 1.0);
    let gibbs = GibbsConfig { seed: 5, ..Default::default() };

    let lk = BlockStructure::likert(&schema).unwrap();
    let likert = map_to_likert(&att, truth.head(Version::Lk).unwrap(), &lk, &gibbs).unwrap();
    check("golden_likert.csv", &likert.table.to_csv());

    let tb = BlockStructure::topics(&schema).unwrap();
    let names: Vec<String> = schema.topic_column_names().into_iter().map(String::from).collect();
    let topics = map_to_topics(&att, truth.head(Version::Oe).unwrap(), &tb, &names, &gibbs).unwrap();
    check("golden_topics.csv", &topics.table.to_csv());

    let lkoe = map_to_likert(&att, truth.head(Version::Lkoe).unwrap(), &lk, &gibbs).unwrap();
    check("golden_side_by_side.csv", &side_by_side(&[&likert.table, &lkoe.table]));
}
