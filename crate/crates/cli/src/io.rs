use std::collections::HashMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context as _, Result};
use attfusion::attitude::{ModelSpec, OptConfig, ParamLayout, VariationalPosterior};
use attfusion::linalg::Matrix;
use attfusion::survey::{load_dataset, SchemaManifest, StandardizationStats, SurveyRecord, Version};
use serde::{Deserialize, Serialize};

pub fn read_schema(path: &Path) -> Result<SchemaManifest> {
    let m = SchemaManifest::from_json_file(path).with_context(|| format!("reading schema {}", path.display()))?;
    m.validate().with_context(|| format!("schema {}", path.display()))?;
    Ok(m)
}

pub fn read_records(path: &Path, manifest: &SchemaManifest) -> Result<Vec<SurveyRecord>> {
    let report = load_dataset(path, manifest).with_context(|| format!("reading survey {}", path.display()))?;
    if !report.renormalized.is_empty() {
        eprintln!("note: {} rows had topic blocks renormalised", report.renormalized.len());
    }
    report.into_records().with_context(|| format!("validating survey {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub loc: f64,
    pub scale: f64,
}

/// Everything `predict`, `shares` and `map` need from a fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorFile {
    pub spec: ModelSpec,
    pub schema: SchemaManifest,
    pub stats: StandardizationStats,
    pub opt: OptConfig,
    pub n_train: usize,
    /// Free coefficient count.
    pub k_params: usize,
    pub params: Vec<ParamEntry>,
    pub elbo_trace: Vec<(usize, f64)>,
    /// Column statistics used to standardise the training attitudes.
    pub attitude_mean: Vec<f64>,
    pub attitude_sd: Vec<f64>,
}

impl PosteriorFile {
    pub fn posterior(&self) -> Result<VariationalPosterior<f64>> {
        let layout = ParamLayout::new(&self.spec);
        let names = layout.entry_names();
        if names.len() != self.params.len() {
            bail!("posterior has {} coefficients, model needs {}", self.params.len(), names.len());
        }
        for (n, p) in names.iter().zip(&self.params) {
            if *n != p.name {
                bail!("posterior coefficient {:?} where {:?} was expected", p.name, n);
            }
        }
        Ok(VariationalPosterior {
            layout,
            loc: self.params.iter().map(|p| p.loc).collect(),
            scale: self.params.iter().map(|p| p.scale).collect(),
            fitted: true,
            elbo_trace: self.elbo_trace.clone(),
        })
    }
}

/// One row of a prediction file.
#[derive(Debug, Clone, PartialEq)]
pub struct PredRow {
    pub respondent_id: String,
    pub version: Version,
    pub choice: usize,
    pub pred: usize,
    pub probs: Vec<f64>,
    pub att: Vec<f64>,
}

pub fn write_predictions(path: &Path, alternatives: &[String], rows: &[PredRow]) -> Result<()> {
    let k = rows.first().map_or(0, |r| r.att.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["respondent_id".to_string(), "version".into(), "choice".into(), "pred".into()];
    header.extend(alternatives.iter().map(|a| format!("p_{a}")));
    header.extend((1..=k).map(|j| format!("att_{j}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.respondent_id.clone(), r.version.name().to_string(), r.choice.to_string(), r.pred.to_string()];
        rec.extend(r.probs.iter().map(|p| format!("{p}")));
        rec.extend(r.att.iter().map(|a| format!("{a}")));
        w.write_record(&rec)?;
    }
    crate::run::write_atomic(path, &w.into_inner()?)
}

pub fn read_predictions(path: &Path) -> Result<(Vec<String>, Vec<PredRow>)> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading predictions {}", path.display()))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| anyhow!("{}: missing column {name:?}", path.display()));
    let (id, ver, ch, pr) = (col("respondent_id")?, col("version")?, col("choice")?, col("pred")?);
    let p_cols: Vec<(usize, String)> =
        header.iter().enumerate().filter_map(|(i, h)| h.strip_prefix("p_").map(|a| (i, a.to_string()))).collect();
    let a_cols: Vec<usize> = header.iter().enumerate().filter(|(_, h)| h.starts_with("att_")).map(|(i, _)| i).collect();
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| anyhow!("{} row {}: {:?} is not a number", path.display(), n + 1, &rec[i]))
        };
        let idx = |i: usize| -> Result<usize> {
            rec[i].parse().map_err(|_| anyhow!("{} row {}: {:?} is not a label", path.display(), n + 1, &rec[i]))
        };
        rows.push(PredRow {
            respondent_id: rec[id].to_string(),
            version: rec[ver].parse().map_err(|e| anyhow!("{} row {}: {e}", path.display(), n + 1))?,
            choice: idx(ch)?,
            pred: idx(pr)?,
            probs: p_cols.iter().map(|&(i, _)| num(i)).collect::<Result<_>>()?,
            att: a_cols.iter().map(|&i| num(i)).collect::<Result<_>>()?,
        });
    }
    Ok((p_cols.into_iter().map(|(_, a)| a).collect(), rows))
}

/// `respondent_id` plus numeric columns, in file order.
pub fn read_id_matrix(path: &Path) -> Result<HashMap<String, Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("respondent_id") {
        bail!("{}: first column must be respondent_id", path.display());
    }
    let mut out = HashMap::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|_| anyhow!("{} row {}: {s:?} is not a number", path.display(), n + 1)))
            .collect::<Result<Vec<_>>>()?;
        if out.insert(rec[0].to_string(), vals).is_some() {
            bail!("{}: respondent {:?} appears twice", path.display(), &rec[0]);
        }
    }
    Ok(out)
}

pub fn write_id_matrix(path: &Path, header: &[String], ids: &[String], m: &Matrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(std::iter::once("respondent_id".to_string()).chain(header.iter().cloned()))?;
    for (i, id) in ids.iter().enumerate() {
        w.write_record(std::iter::once(id.clone()).chain(m.row(i).iter().map(|v| format!("{v}"))))?;
    }
    crate::run::write_atomic(path, &w.into_inner()?)
}

pub fn parse_version(s: &str) -> Result<Version> {
    s.parse().map_err(|e| anyhow!("{e}"))
}
