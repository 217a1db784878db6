use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_attitude-fusion"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SUBCOMMANDS: &[&[&str]] = &[
    &["preprocess"],
    &["topics"],
    &["topics", "fit"],
    &["topics", "infer"],
    &["topics", "top-words"],
    &["topics", "export-vis"],
    &["topics", "score"],
    &["attach-topics"],
    &["split"],
    &["encode"],
    &["fit"],
    &["predict"],
    &["evaluate"],
    &["shares"],
    &["map"],
    &["mnl"],
    &["reliability"],
    &["simulate"],
];

#[test]
fn help_exits_zero_everywhere() {
    let top = ok(&["--help"]);
    assert!(String::from_utf8_lossy(&top.stdout).contains("Usage"));
    for sub in SUBCOMMANDS {
        let mut args = sub.to_vec();
        args.push("--help");
        let out = ok(&args);
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{sub:?}");
    }
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let out = run(&["simulate", "--bogus", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.csv");
    let out = run(&["preprocess", "--input", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.csv"));

    let schema = dir.path().join("schema.json");
    let out = run(&["mnl", "--data", s(&missing), "--schema", s(&schema), "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema.json"));
}

fn simulate_small(dir: &Path, seed: &str) {
    let cfg = dir.join("sim.json");
    std::fs::write(&cfg, r#"{"n_per_version": 60}"#).unwrap();
    ok(&["--quiet", "--seed", seed, "simulate", "--config", s(&cfg), "--out", s(&dir.join("sim"))]);
}

#[test]
fn simulate_is_seed_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate_small(a.path(), "4");
    simulate_small(b.path(), "4");
    for f in ["survey.csv", "responses.csv", "truth.json", "schema.json"] {
        let x = std::fs::read(a.path().join("sim").join(f)).unwrap();
        let y = std::fs::read(b.path().join("sim").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("sim/run_manifest.json")).unwrap()).unwrap();
    assert_eq!(m["subcommand"], "simulate");
    assert_eq!(m["seed"], 4);
    assert!(m["outputs"].as_array().unwrap().len() >= 4);
}

#[test]
fn smoke_pipeline_produces_a_fit_report() {
    let d = tempfile::tempdir().unwrap();
    let d = d.path();
    simulate_small(d, "2");
    let sim = d.join("sim");
    let schema = sim.join("schema.json");
    ok(&["--quiet", "preprocess", "--input", s(&sim.join("responses.csv")), "--out", s(&d.join("pre"))]);
    for (q, k) in [("PEoU_open", "4"), ("PU_open", "7")] {
        ok(&[
            "--quiet", "topics", "fit", "--bow", s(&d.join(format!("pre/bow_{q}.json"))), "--k", k, "--burn-in", "50",
            "--sweeps", "50", "--out", s(&d.join(format!("topics/{q}.json"))),
        ]);
    }
    let attached = d.join("attached.csv");
    ok(&[
        "--quiet", "attach-topics", "--data", s(&sim.join("survey.csv")), "--schema", s(&schema),
        "--theta", &format!("PEoU_open={}", s(&d.join("topics/PEoU_open.theta.csv"))),
        "--theta", &format!("PU_open={}", s(&d.join("topics/PU_open.theta.csv"))),
        "--out", s(&attached),
    ]);
    ok(&["--quiet", "split", "--data", s(&attached), "--schema", s(&schema), "--out", s(&d.join("split"))]);
    let post = d.join("fit/post.json");
    let train = d.join("split/train.csv");
    let fit_args = [
        "--quiet", "fit", "--train", s(&train), "--schema", s(&schema), "--steps", "300",
        "--out", s(&post),
    ];
    ok(&fit_args);
    let first = std::fs::read(&post).unwrap();
    ok(&fit_args);
    assert!(first == std::fs::read(&post).unwrap(), "refit is not bit-identical");

    let pred = d.join("pred.csv");
    ok(&["--quiet", "predict", "--posterior", s(&post), "--data", s(&d.join("split/test.csv")), "--out", s(&pred)]);
    let report_path = d.join("report.json");
    ok(&["--quiet", "evaluate", "--pred", s(&pred), "--out", s(&report_path)]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["n"], 36);
    let acc = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert!(report["ll_final"].as_f64().unwrap() < 0.0);
    assert!(report["rho2"].as_f64().is_some());

    let table = d.join("map/likert.csv");
    ok(&[
        "--quiet", "map", "--posterior", s(&post), "--attitudes", s(&pred), "--target", "likert", "--iters", "200",
        "--warmup", "50", "--observed", s(&attached), "--out", s(&table),
    ]);
    let text = std::fs::read_to_string(&table).unwrap();
    assert!(text.starts_with("Statement,SD,Disag,Neut,Agree,SA\n"));
    assert_eq!(text.lines().count(), 10);
    assert!(d.join("map/likert.compare.csv").exists());
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("map/likert.diagnostics.json")).unwrap()).unwrap();
    assert!(diag["max_inner_residual"].as_f64().unwrap() < 1e-9);

    let shares = d.join("shares.csv");
    ok(&["--quiet", "shares", "--posterior", s(&post), "--data", s(&attached), "--out", s(&shares)]);
    let text = std::fs::read_to_string(&shares).unwrap();
    for line in text.lines().skip(1) {
        let total: f64 = line.split(',').skip(1).map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((total - 100.0).abs() < 0.02, "{line}");
    }
    assert!(d.join("shares.csv.manifest.json").exists());
}

#[test]
fn singular_head_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let d = d.path();
    simulate_small(d, "1");
    let sim = d.join("sim");
    let schema = sim.join("schema.json");
    let post = d.join("post.json");
    ok(&[
        "--quiet", "fit", "--train", s(&sim.join("survey.csv")), "--schema", s(&schema), "--steps", "20",
        "--out", s(&post),
    ]);
    let pred = d.join("pred.csv");
    ok(&["--quiet", "predict", "--posterior", s(&post), "--data", s(&sim.join("survey.csv")), "--out", s(&pred)]);
    // zero every LK loading: gamma gamma^T is singular for every statement block
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&post).unwrap()).unwrap();
    for p in v["params"].as_array_mut().unwrap() {
        if p["name"].as_str().unwrap().starts_with("gamma_LK[") {
            p["loc"] = 0.0.into();
        }
    }
    std::fs::write(&post, serde_json::to_string(&v).unwrap()).unwrap();
    let out = run(&[
        "map", "--posterior", s(&post), "--attitudes", s(&pred), "--target", "likert", "--iters", "20", "--warmup",
        "5", "--out", s(&d.join("m.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
