use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use attfusion::attitude::{self, fit_indicator_mnl, version_design, ModelMode, ModelSpec, OptConfig};
use attfusion::corpus::{
    build_vocabulary, from_json_lines, raw_word_count, read_responses_csv, to_json_lines, Pipeline, PipelineConfig,
    QuestionId, TokenizedDoc,
};
use attfusion::counterfactual::{
    likert_table, map_to_likert, map_to_topics, observed_averages, side_by_side, topic_table, BlockStructure,
    GibbsConfig,
};
use attfusion::linalg::Matrix;
use attfusion::metrics::{cronbach_alpha, fit_report, ll_null, mann_whitney_u, two_group_t, Averaging, ConfusionMatrix};
use attfusion::simulate::{simulate_survey, SimConfig};
use attfusion::survey::{encode, split, write_dataset, StandardizationStats, SurveyRecord, Version};
use attfusion::topics::{fit_lda, BowCorpus, LdaConfig, TopicModel};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::io::{self, PosteriorFile, PredRow};
use crate::run::{sidecar, write_atomic, write_json, Context, Recorder};
use crate::*;

pub fn dispatch(ctx: &Context, cmd: &Command) -> Result<()> {
    match cmd {
        Command::Preprocess(a) => preprocess(ctx, a),
        Command::Topics(t) => match t {
            TopicsCommand::Fit(a) => topics_fit(ctx, a),
            TopicsCommand::Infer(a) => topics_infer(ctx, a),
            TopicsCommand::TopWords(a) => top_words(ctx, a),
            TopicsCommand::ExportVis(a) => export_vis(ctx, a),
            TopicsCommand::Score(a) => score(ctx, a),
        },
        Command::AttachTopics(a) => attach_topics(ctx, a),
        Command::Split(a) => split_cmd(ctx, a),
        Command::Encode(a) => encode_cmd(ctx, a),
        Command::Fit(a) => fit_cmd(ctx, a),
        Command::Predict(a) => predict_cmd(ctx, a),
        Command::Evaluate(a) => evaluate(ctx, a),
        Command::Shares(a) => shares(ctx, a),
        Command::Map(a) => map_cmd(ctx, a),
        Command::Mnl(a) => mnl(ctx, a),
        Command::Reliability(a) => reliability(ctx, a),
        Command::Simulate(a) => simulate(ctx, a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn read_tokens(path: &Path, question: Option<&str>) -> Result<Vec<TokenizedDoc>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let docs = from_json_lines(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(match question {
        None => docs,
        Some(q) => {
            let q: QuestionId = q.parse().map_err(|e| anyhow!("{e}"))?;
            docs.into_iter().filter(|d| d.question_id == q).collect()
        }
    })
}

fn load_model(path: &Path) -> Result<TopicModel> {
    TopicModel::load_json(path).with_context(|| format!("reading topic model {}", path.display()))
}

fn topic_header(k: usize) -> Vec<String> {
    (0..k).map(|t| format!("topic_{t}")).collect()
}

fn preprocess(ctx: &Context, a: &PreprocessArgs) -> Result<()> {
    let rec = Recorder::start();
    let cfg = match &a.pipeline_config {
        Some(p) => PipelineConfig::from_json_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    let responses = read_responses_csv(&a.input).with_context(|| format!("reading responses {}", a.input.display()))?;
    let pipeline = Pipeline::new(cfg.clone())?;
    let out = pipeline.run(&responses)?;
    create_dir(&a.out)?;
    let mut outputs = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let p = a.out.join(name);
        write_atomic(&p, &bytes)?;
        outputs.push(p);
        Ok(())
    };
    put("tokens.jsonl", to_json_lines(&out.docs).into_bytes())?;
    put("vocabulary.json", serde_json::to_vec_pretty(&out.vocabulary)?)?;
    put("phrases.json", serde_json::to_vec_pretty(&out.phrases)?)?;
    put("dropped.json", serde_json::to_vec_pretty(&out.dropped)?)?;
    let mean_before = mean(responses.iter().map(|r| raw_word_count(&r.text) as f64));
    let mean_after = mean(out.docs.iter().map(|d| d.tokens.len() as f64));
    let mut per_question = Vec::new();
    for q in QuestionId::ALL {
        let docs: Vec<TokenizedDoc> = out.docs.iter().filter(|d| d.question_id == q).cloned().collect();
        if docs.is_empty() {
            continue;
        }
        let vocab = match build_vocabulary(&docs, cfg.min_cf) {
            Ok(v) => v,
            Err(e) => {
                ctx.info(format!("{q}: no bag of words ({e})"));
                continue;
            }
        };
        put(&format!("tokens_{q}.jsonl"), to_json_lines(&docs).into_bytes())?;
        let bow = BowCorpus::from_tokenized(vocab, &docs);
        per_question.push(json!({"question": q.as_str(), "docs": docs.len(), "vocabulary": bow.vocab.len()}));
        put(&format!("bow_{q}.json"), serde_json::to_vec(&bow)?)?;
    }
    let summary = json!({
        "responses": responses.len(),
        "kept": out.docs.len(),
        "dropped": out.dropped.len(),
        "vocabulary": out.vocabulary.len(),
        "phrases": out.phrases,
        "mean_words_before": mean_before,
        "mean_tokens_after": mean_after,
        "per_question": per_question,
    });
    put("summary.json", serde_json::to_vec_pretty(&summary)?)?;
    ctx.info(format!(
        "kept {} of {} responses; mean length {mean_before:.1} -> {mean_after:.1}",
        out.docs.len(),
        responses.len()
    ));
    let inputs = std::iter::once(a.input.clone()).chain(a.pipeline_config.clone()).collect();
    rec.finish(ctx, "preprocess", &json!({"args": a, "pipeline": cfg}), &a.out, inputs, outputs)
}

fn topics_fit(ctx: &Context, a: &TopicsFitArgs) -> Result<()> {
    let rec = Recorder::start();
    let corpus = BowCorpus::from_json_file(&a.bow).with_context(|| format!("reading {}", a.bow.display()))?;
    let cfg = LdaConfig {
        k: a.k,
        alpha: a.alpha,
        beta: a.beta,
        burn_in: a.burn_in,
        train_sweeps: a.sweeps,
        seed: ctx.seed_for("topics"),
    };
    let model = fit_lda(&corpus, &cfg)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_atomic(&a.out, serde_json::to_string(&model)?.as_bytes())?;
    let theta_path = sidecar(&a.out, "theta.csv");
    let ids: Vec<String> = corpus.docs.iter().map(|d| d.respondent_id.clone()).collect();
    io::write_id_matrix(&theta_path, &topic_header(a.k), &ids, &model.doc_theta)?;
    ctx.info(format!("{} docs, K={}, log-likelihood per word {:.4}", ids.len(), a.k, model.ll_per_word));
    rec.finish(ctx, "topics fit", &json!({"args": a, "lda": cfg}), &a.out, vec![a.bow.clone()], vec![a.out.clone(), theta_path])
}

fn topics_infer(ctx: &Context, a: &TopicsInferArgs) -> Result<()> {
    let rec = Recorder::start();
    let model = load_model(&a.model)?;
    let docs = read_tokens(&a.tokens, a.question.as_deref())?;
    let words: Vec<Vec<usize>> = docs.iter().map(|d| model.vocab.encode(&d.tokens)).collect();
    let seed = ctx.seed_for("topics-infer");
    let inferred = model.infer_many(&words, a.iters, seed);
    let theta = Matrix::from_fn(docs.len(), model.k(), |i, t| inferred[i].theta[t]);
    let ids: Vec<String> = docs.iter().map(|d| d.respondent_id.clone()).collect();
    io::write_id_matrix(&a.out, &topic_header(model.k()), &ids, &theta)?;
    let empty = inferred.iter().filter(|t| t.empty).count();
    if empty > 0 {
        ctx.info(format!("{empty} documents had no in-vocabulary tokens; uniform proportions"));
    }
    rec.finish(
        ctx,
        "topics infer",
        &json!({"args": a, "seed": seed, "empty_docs": empty}),
        &a.out,
        vec![a.model.clone(), a.tokens.clone()],
        vec![a.out.clone()],
    )
}

fn top_words(ctx: &Context, a: &TopWordsArgs) -> Result<()> {
    let rec = Recorder::start();
    let model = load_model(&a.model)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(std::iter::once("Top #".to_string()).chain((1..=a.n).map(|i| format!("Word_{i}"))))?;
    for t in 0..model.k() {
        let words = model.top_words(t, a.n)?;
        w.write_record(std::iter::once(format!("{}{}", a.prefix, t + 1)).chain(words.into_iter().map(|(s, _)| s)))?;
    }
    write_atomic(&a.out, &w.into_inner()?)?;
    rec.finish(ctx, "topics top-words", a, &a.out, vec![a.model.clone()], vec![a.out.clone()])
}

fn export_vis(ctx: &Context, a: &ExportVisArgs) -> Result<()> {
    let rec = Recorder::start();
    let model = load_model(&a.model)?;
    let corpus = BowCorpus::from_json_file(&a.bow).with_context(|| format!("reading {}", a.bow.display()))?;
    if corpus.docs.len() != model.doc_theta.rows() {
        bail!("{} has {} documents but the model was fitted on {}", a.bow.display(), corpus.docs.len(), model.doc_theta.rows());
    }
    create_dir(&a.out)?;
    model.vis_data(&corpus).write_csv(&a.out)?;
    let outputs = ["phi.csv", "theta.csv", "doc_lengths.csv", "vocab.csv", "term_frequency.csv"].iter().map(|f| a.out.join(f)).collect();
    rec.finish(ctx, "topics export-vis", a, &a.out, vec![a.model.clone(), a.bow.clone()], outputs)
}

fn score(ctx: &Context, a: &ScoreArgs) -> Result<()> {
    let rec = Recorder::start();
    let model = load_model(&a.model)?;
    let docs = read_tokens(&a.tokens, a.question.as_deref())?;
    let s = model.score_documents(&docs);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(
        ["respondent_id".to_string(), "question_id".into()]
            .into_iter()
            .chain((0..model.k()).map(|t| format!("score_{t}")))
            .chain(std::iter::once("total".to_string())),
    )?;
    for (i, d) in docs.iter().enumerate() {
        w.write_record(
            [d.respondent_id.clone(), d.question_id.to_string()].into_iter().chain(s.row(i).iter().map(|v| format!("{v}"))),
        )?;
    }
    write_atomic(&a.out, &w.into_inner()?)?;
    rec.finish(ctx, "topics score", a, &a.out, vec![a.model.clone(), a.tokens.clone()], vec![a.out.clone()])
}

fn write_records(path: &Path, manifest: &attfusion::survey::SchemaManifest, records: &[SurveyRecord]) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset(&mut buf, manifest, records)?;
    write_atomic(path, &buf)
}

fn attach_topics(ctx: &Context, a: &AttachTopicsArgs) -> Result<()> {
    let rec = Recorder::start();
    let manifest = io::read_schema(&a.schema)?;
    let mut records = io::read_records(&a.data, &manifest)?;
    let blocks = manifest.topic_blocks();
    let mut offsets = HashMap::new();
    let mut off = 0;
    for b in &blocks {
        offsets.insert(b.id.clone(), (off, b.columns.len()));
        off += b.columns.len();
    }
    let mut fallback = serde_json::Map::new();
    let mut inputs = vec![a.data.clone(), a.schema.clone()];
    for (block, path) in &a.theta {
        let &(start, size) =
            offsets.get(block).ok_or_else(|| anyhow!("no topic block {block:?} in {}", a.schema.display()))?;
        let theta = io::read_id_matrix(path)?;
        if let Some(row) = theta.values().find(|r| r.len() != size) {
            bail!("{}: {} topic columns, block {block:?} has {size}", path.display(), row.len());
        }
        let mut missing = 0usize;
        for r in records.iter_mut() {
            let Some(tp) = r.topic_props.as_mut() else { continue };
            match theta.get(&r.respondent_id) {
                Some(t) => tp[start..start + size].copy_from_slice(t),
                None => {
                    tp[start..start + size].fill(1.0 / size as f64);
                    missing += 1;
                }
            }
        }
        if missing > 0 {
            ctx.info(format!("{block}: {missing} respondents without a document get uniform proportions"));
        }
        fallback.insert(block.clone(), missing.into());
        inputs.push(path.clone());
    }
    write_records(&a.out, &manifest, &records)?;
    rec.finish(ctx, "attach-topics", &json!({"args": a, "uniform_fallback": fallback}), &a.out, inputs, vec![a.out.clone()])
}

fn split_cmd(ctx: &Context, a: &SplitArgs) -> Result<()> {
    let rec = Recorder::start();
    let manifest = io::read_schema(&a.schema)?;
    let records = io::read_records(&a.data, &manifest)?;
    let seed = ctx.seed_for("split");
    let (train, test) = split(&records, a.test_fraction, seed)?;
    create_dir(&a.out)?;
    let (tp, sp) = (a.out.join("train.csv"), a.out.join("test.csv"));
    write_records(&tp, &manifest, &train)?;
    write_records(&sp, &manifest, &test)?;
    ctx.info(format!("{} train, {} test", train.len(), test.len()));
    rec.finish(ctx, "split", &json!({"args": a, "seed": seed}), &a.out, vec![a.data.clone(), a.schema.clone()], vec![tp, sp])
}

fn encode_cmd(ctx: &Context, a: &EncodeArgs) -> Result<()> {
    let rec = Recorder::start();
    let manifest = io::read_schema(&a.schema)?;
    let records = io::read_records(&a.data, &manifest)?;
    let stats: Option<StandardizationStats> = a.stats.as_deref().map(io::read_json).transpose()?;
    let (design, stats) = encode::<f64>(&records, &manifest, stats.as_ref())?;
    create_dir(&a.out)?;
    let (dp, sp) = (a.out.join("design.csv"), a.out.join("stats.json"));
    let mut buf = Vec::new();
    design.write_csv(&mut buf)?;
    write_atomic(&dp, &buf)?;
    write_json(&sp, &stats)?;
    let inputs = [a.data.clone(), a.schema.clone()].into_iter().chain(a.stats.clone()).collect();
    rec.finish(ctx, "encode", a, &a.out, inputs, vec![dp, sp])
}

fn fit_cmd(ctx: &Context, a: &FitArgs) -> Result<()> {
    let rec = Recorder::start();
    let mode: ModelMode = a.model.parse().map_err(|e| anyhow!("--model: {e}"))?;
    let manifest = io::read_schema(&a.schema)?;
    let mut records = io::read_records(&a.train, &manifest)?;
    records.retain(|r| mode.covers(r.version));
    if records.is_empty() {
        bail!("{} has no rows for model {mode}", a.train.display());
    }
    let (design, stats) = encode::<f64>(&records, &manifest, None)?;
    let mut spec = ModelSpec::from_schema(&design.schema, mode, a.k_att)?;
    spec.standardize_attitudes = !a.raw_attitudes;
    let opt = OptConfig {
        lr: a.lr,
        steps: a.steps,
        clip: a.clip,
        n_particles: a.particles,
        seed: ctx.seed_for("fit"),
        ..OptConfig::default()
    };
    ctx.info(format!("fitting {mode} on {} rows, {} coefficients", design.len(), spec.parameter_count()));
    let res = attitude::fit(&spec, &design, &opt)?;
    let file = PosteriorFile {
        k_params: spec.parameter_count(),
        spec,
        schema: manifest,
        stats,
        opt,
        n_train: design.len(),
        params: res
            .posterior
            .entries()
            .into_iter()
            .map(|(name, loc, scale)| io::ParamEntry { name, loc, scale })
            .collect(),
        elbo_trace: res.posterior.elbo_trace.clone(),
        attitude_mean: res.attitudes.mean.clone(),
        attitude_sd: res.attitudes.sd.clone(),
    };
    write_json(&a.out, &file)?;
    let elbo_path = sidecar(&a.out, "elbo.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "elbo"])?;
    for (s, e) in &res.posterior.elbo_trace {
        w.write_record([s.to_string(), format!("{e}")])?;
    }
    write_atomic(&elbo_path, &w.into_inner()?)?;
    let att_path = sidecar(&a.out, "attitudes.csv");
    let header: Vec<String> = (1..=a.k_att).map(|j| format!("att_{j}")).collect();
    io::write_id_matrix(&att_path, &header, &design.respondent_ids, &res.attitudes.att)?;
    if let Some((_, e)) = res.posterior.elbo_trace.last() {
        ctx.info(format!("final ELBO {e:.3}"));
    }
    rec.finish(
        ctx,
        "fit",
        &json!({"args": a, "opt": file.opt}),
        &a.out,
        vec![a.train.clone(), a.schema.clone()],
        vec![a.out.clone(), elbo_path, att_path],
    )
}

struct Loaded {
    file: PosteriorFile,
    posterior: attfusion::attitude::VariationalPosterior<f64>,
}

fn load_posterior(path: &Path) -> Result<Loaded> {
    let file: PosteriorFile = io::read_json(path)?;
    let posterior = file.posterior().with_context(|| format!("posterior {}", path.display()))?;
    Ok(Loaded { file, posterior })
}

/// Records of `path` restricted to the versions the model covers, encoded with the training statistics.
fn load_design(l: &Loaded, path: &Path) -> Result<attfusion::survey::DesignMatrix<f64>> {
    let mut records = io::read_records(path, &l.file.schema)?;
    records.retain(|r| l.file.spec.mode.covers(r.version));
    if records.is_empty() {
        bail!("{} has no rows for model {}", path.display(), l.file.spec.mode);
    }
    Ok(encode::<f64>(&records, &l.file.schema, Some(&l.file.stats))?.0)
}

#[derive(Serialize, Deserialize)]
struct PredictSummary {
    n: usize,
    log_likelihood: f64,
    n_params: usize,
    alternatives: Vec<String>,
}

fn predict_cmd(ctx: &Context, a: &PredictArgs) -> Result<()> {
    let rec = Recorder::start();
    let l = load_posterior(&a.posterior)?;
    let design = load_design(&l, &a.data)?;
    let pred = attitude::predict(&l.posterior, &l.file.spec, &design)?;
    let rows: Vec<PredRow> = (0..design.len())
        .map(|i| PredRow {
            respondent_id: design.respondent_ids[i].clone(),
            version: design.version[i],
            choice: design.y[i],
            pred: pred.labels[i],
            probs: pred.probs.row(i).to_vec(),
            att: pred.attitudes.row(i).to_vec(),
        })
        .collect();
    let alts = &l.file.schema.alternatives;
    io::write_predictions(&a.out, alts, &rows)?;
    let summary_path = sidecar(&a.out, "summary.json");
    let summary = PredictSummary {
        n: rows.len(),
        log_likelihood: pred.log_likelihood,
        n_params: l.file.k_params,
        alternatives: alts.clone(),
    };
    write_json(&summary_path, &summary)?;
    let hits = rows.iter().filter(|r| r.choice == r.pred).count();
    ctx.info(format!("{} rows, accuracy {:.3}, log-likelihood {:.3}", rows.len(), hits as f64 / rows.len() as f64, pred.log_likelihood));
    rec.finish(ctx, "predict", a, &a.out, vec![a.posterior.clone(), a.data.clone()], vec![a.out.clone(), summary_path])
}

fn evaluate(ctx: &Context, a: &EvaluateArgs) -> Result<()> {
    let rec = Recorder::start();
    let (alts, rows) = io::read_predictions(&a.pred)?;
    if rows.is_empty() {
        bail!("{} has no predictions", a.pred.display());
    }
    let c = alts.len();
    let mut inputs = vec![a.pred.clone()];
    let truth: Vec<usize> = match &a.truth {
        None => rows.iter().map(|r| r.choice).collect(),
        Some(p) => {
            inputs.push(p.clone());
            let mut rdr = csv::Reader::from_path(p).with_context(|| format!("reading truth {}", p.display()))?;
            let h = rdr.headers()?.clone();
            let col = |n: &str| h.iter().position(|x| x == n).ok_or_else(|| anyhow!("{}: missing column {n:?}", p.display()));
            let (id, ch) = (col("respondent_id")?, col("choice")?);
            let mut by_id = HashMap::new();
            for r in rdr.records() {
                let r = r?;
                let y: usize = r[ch].parse().map_err(|_| anyhow!("{}: bad choice {:?}", p.display(), &r[ch]))?;
                by_id.insert(r[id].to_string(), y);
            }
            rows.iter()
                .map(|r| by_id.get(&r.respondent_id).copied().ok_or_else(|| anyhow!("{}: no choice for {:?}", p.display(), r.respondent_id)))
                .collect::<Result<_>>()?
        }
    };
    let pred: Vec<usize> = rows.iter().map(|r| r.pred).collect();
    let cm = ConfusionMatrix::from_labels(&truth, &pred, c)?;
    let nulls = ll_null::<f64>(&truth, c)?;
    let ll_full = match a.ll_full {
        Some(v) => v,
        None => truth.iter().zip(&rows).map(|(&y, r)| r.probs[y].ln()).sum(),
    };
    let summary_path = sidecar(&a.pred, "summary.json");
    let k = match a.k {
        Some(k) => k,
        None if summary_path.exists() => {
            inputs.push(summary_path.clone());
            io::read_json::<PredictSummary>(&summary_path)?.n_params
        }
        None => bail!("--k not given and {} not found", summary_path.display()),
    };
    let averaging = match a.averaging {
        AveragingArg::Macro => Averaging::Macro,
        AveragingArg::Micro => Averaging::Micro,
    };
    let report = fit_report(a.ll_null.unwrap_or(nulls.ll_init), nulls.ll_constants, Some(ll_full), &cm, k, averaging)?;
    write_json(&a.out, &report)?;
    if !ctx.quiet {
        eprintln!("{}", attfusion::metrics::FitReport::TABLE_HEADER);
        eprintln!("{}", report.table_row("model"));
    }
    rec.finish(ctx, "evaluate", a, &a.out, inputs, vec![a.out.clone()])
}

fn shares(ctx: &Context, a: &SharesArgs) -> Result<()> {
    let rec = Recorder::start();
    let l = load_posterior(&a.posterior)?;
    let design = load_design(&l, &a.data)?;
    let spec = &l.file.spec;
    let params = l.posterior.posterior_mean(spec);
    let att = attitude::attitude_matrix(&params, spec, &design)?;
    let mut out = String::new();
    out.push_str("Dataset used");
    for alt in &l.file.schema.alternatives {
        out.push(',');
        out.push_str(alt);
    }
    out.push('\n');
    for v in Version::ALL {
        let rows = design.rows_of(v);
        if rows.is_empty() {
            continue;
        }
        let sub = design.subset(&rows);
        let att_mean: Vec<f64> = (0..spec.k_att).map(|j| mean(rows.iter().map(|&i| att[(i, j)]))).collect();
        let s = attfusion::counterfactual::predict_shares(&params.choice, &sub.covariate_means(), &att_mean)?;
        out.push_str(v.name());
        for p in s {
            out.push_str(&format!(",{p:.2}"));
        }
        out.push('\n');
    }
    write_atomic(&a.out, out.as_bytes())?;
    rec.finish(ctx, "shares", a, &a.out, vec![a.posterior.clone(), a.data.clone()], vec![a.out.clone()])
}

fn map_cmd(ctx: &Context, a: &MapArgs) -> Result<()> {
    let rec = Recorder::start();
    let l = load_posterior(&a.posterior)?;
    let spec = &l.file.spec;
    let schema = attfusion::survey::EncodedSchema::from_manifest(&l.file.schema);
    let head_v = match &a.head {
        Some(h) => io::parse_version(h)?,
        None if a.target == MapTarget::Likert => Version::Lk,
        None => Version::Oe,
    };
    if (a.target == MapTarget::Likert) != head_v.has_likert() {
        bail!("head {head_v} does not carry the {:?} instrument", a.target);
    }
    let params = l.posterior.posterior_mean(spec);
    let head = params.head(head_v).ok_or_else(|| anyhow!("the posterior has no {head_v} head (model {})", spec.mode))?;
    let versions: Vec<Version> = if a.versions.is_empty() {
        Version::ALL
            .into_iter()
            .filter(|v| match a.target {
                MapTarget::Likert => !v.has_likert(),
                MapTarget::Topics => !v.has_topics(),
            })
            .collect()
    } else {
        a.versions.iter().map(|s| io::parse_version(s)).collect::<Result<_>>()?
    };
    let (_, preds) = io::read_predictions(&a.attitudes)?;
    let src: Vec<&PredRow> = preds.iter().filter(|r| versions.contains(&r.version)).collect();
    if src.is_empty() {
        bail!("{} has no rows of versions {versions:?}", a.attitudes.display());
    }
    if src[0].att.len() != spec.k_att {
        bail!("{}: {} attitude columns, model has {}", a.attitudes.display(), src[0].att.len(), spec.k_att);
    }
    let y = Matrix::from_fn(src.len(), spec.k_att, |i, j| src[i].att[j]);
    let cfg = GibbsConfig {
        n_iter: a.iters,
        n_warm: a.warmup,
        seed: ctx.seed_for("map"),
        concentration: a.concentration,
        record_trace: false,
    };
    let (structure, range) = match a.target {
        MapTarget::Likert => (BlockStructure::likert(&schema)?, schema.likert_range),
        MapTarget::Topics => (BlockStructure::topics(&schema)?, schema.topic_range),
    };
    let names: Vec<String> = schema.topic_column_names().into_iter().map(String::from).collect();
    let mapped = match a.target {
        MapTarget::Likert => map_to_likert(&y, head, &structure, &cfg)?,
        MapTarget::Topics => map_to_topics(&y, head, &structure, &names, &cfg)?,
    };
    write_atomic(&a.out, mapped.table.to_csv().as_bytes())?;
    let mut outputs = vec![a.out.clone()];
    let mut inputs = vec![a.posterior.clone(), a.attitudes.clone()];

    let rows_path = sidecar(&a.out, "rows.csv");
    let ids: Vec<String> = src.iter().map(|r| r.respondent_id.clone()).collect();
    let col_names: Vec<String> = schema.att_columns[range.0..range.1].iter().map(|c| c.name.clone()).collect();
    io::write_id_matrix(&rows_path, &col_names, &ids, &mapped.result.row_means)?;
    outputs.push(rows_path);

    if let Some(obs) = &a.observed {
        let records = io::read_records(obs, &l.file.schema)?;
        let (design, _) = encode::<f64>(&records, &l.file.schema, Some(&l.file.stats))?;
        let rows = design.rows_of(head_v);
        if rows.is_empty() {
            bail!("{} has no {head_v} rows to compare against", obs.display());
        }
        let avg = observed_averages(&design.x_att, &rows, range);
        let observed = match a.target {
            MapTarget::Likert => likert_table("Observed Averages", &structure, &avg),
            MapTarget::Topics => topic_table("Observed Topic Proportions", &names, &avg),
        };
        let cmp_path = sidecar(&a.out, "compare.csv");
        write_atomic(&cmp_path, side_by_side(&[&observed, &mapped.table]).as_bytes())?;
        outputs.push(cmp_path);
        inputs.push(obs.clone());
    }

    let diag_path = sidecar(&a.out, "diagnostics.json");
    let r = &mapped.result;
    write_json(
        &diag_path,
        &json!({
            "rows": src.len(),
            "head": head_v.name(),
            "versions": versions.iter().map(|v| v.name()).collect::<Vec<_>>(),
            "config": cfg,
            "degeneracies": r.degeneracies,
            "max_inner_residual": r.max_inner_residual,
            "max_draw_simplex_error": r.max_draw_simplex_error,
        }),
    )?;
    outputs.push(diag_path);
    ctx.info(format!("mapped {} rows; max inner residual {:.2e}", src.len(), r.max_inner_residual));
    rec.finish(ctx, "map", &json!({"args": a, "gibbs": cfg}), &a.out, inputs, outputs)
}

fn mnl(ctx: &Context, a: &MnlArgs) -> Result<()> {
    let rec = Recorder::start();
    let manifest = io::read_schema(&a.schema)?;
    let records = io::read_records(&a.data, &manifest)?;
    let versions: Vec<Version> = records.iter().map(|r| r.version).collect();
    let y: Vec<usize> = records.iter().map(|r| r.choice).collect();
    let (x, names) = version_design::<f64>(&versions);
    let fit = fit_indicator_mnl(&x, &y, manifest.n_alternatives(), 0)?;
    let mut coefficients = Vec::new();
    for (j, &alt) in fit.alternatives.iter().enumerate() {
        for (p, name) in names.iter().enumerate() {
            coefficients.push(json!({
                "alternative": manifest.alternatives[alt],
                "variable": name,
                "coef": fit.coef[(p, j)],
                "std_err": fit.std_err[(p, j)],
                "t_stat": fit.t_stat[(p, j)],
            }));
        }
    }
    let report = json!({
        "n": y.len(),
        "base": manifest.alternatives[0],
        "log_likelihood": fit.log_likelihood,
        "iterations": fit.iterations,
        "grad_norm": fit.grad_norm,
        "coefficients": coefficients,
    });
    write_json(&a.out, &report)?;
    rec.finish(ctx, "mnl", a, &a.out, vec![a.data.clone(), a.schema.clone()], vec![a.out.clone()])
}

fn reliability(ctx: &Context, a: &ReliabilityArgs) -> Result<()> {
    let rec = Recorder::start();
    let manifest = io::read_schema(&a.schema)?;
    let records = io::read_records(&a.data, &manifest)?;
    let with_likert: Vec<&Vec<u8>> = records.iter().filter_map(|r| r.likert.as_ref()).collect();
    if with_likert.is_empty() {
        bail!("{} has no Likert rows", a.data.display());
    }
    let items = Matrix::from_fn(with_likert.len(), with_likert[0].len(), |i, j| f64::from(with_likert[i][j]));
    let alpha = cronbach_alpha::<f64>(&items)?;
    let [va, vb] = match a.compare.as_slice() {
        [x, y] => [io::parse_version(x)?, io::parse_version(y)?],
        _ => bail!("--compare takes exactly two versions"),
    };
    let scores = |v: Version| -> Vec<f64> {
        records
            .iter()
            .filter(|r| r.version == v)
            .filter_map(|r| r.likert.as_ref())
            .map(|l| mean(l.iter().map(|&x| f64::from(x))))
            .collect()
    };
    let (sa, sb) = (scores(va), scores(vb));
    if sa.is_empty() || sb.is_empty() {
        bail!("both {va} and {vb} need Likert rows for the comparison");
    }
    let mw = mann_whitney_u(&sa, &sb)?;
    let t = two_group_t::<f64>(&sa, &sb).ok();
    let report = json!({
        "cronbach_alpha": alpha,
        "items": items.cols(),
        "rows": items.rows(),
        "comparison": {
            "a": va.name(), "b": vb.name(), "n_a": sa.len(), "n_b": sb.len(),
            "mean_a": mean(sa.iter().copied()), "mean_b": mean(sb.iter().copied()),
            "mann_whitney": mw, "t": t,
        },
    });
    write_json(&a.out, &report)?;
    ctx.info(format!("Cronbach's alpha {alpha:.3}; Mann-Whitney U {} (p = {:.4})", mw.u, mw.p_two_sided));
    rec.finish(ctx, "reliability", a, &a.out, vec![a.data.clone(), a.schema.clone()], vec![a.out.clone()])
}

fn simulate(ctx: &Context, a: &SimulateArgs) -> Result<()> {
    let rec = Recorder::start();
    let mut cfg = match &a.config {
        Some(p) => SimConfig::from_json_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => SimConfig::default(),
    };
    cfg.seed = ctx.seed_for("simulate");
    let sim = simulate_survey(&cfg)?;
    create_dir(&a.out)?;
    let outputs: Vec<PathBuf> = sim.write_dir(&a.out)?;
    ctx.info(format!("{} records, {} responses", sim.records.len(), sim.responses.len()));
    rec.finish(ctx, "simulate", &json!({"args": a, "config": cfg}), &a.out, a.config.iter().cloned().collect(), outputs)
}
