//! Three-instrument survey data: typed records, CSV ingestion, design-matrix
//! encoding and version-stratified splitting.

mod schema;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::rng;
use crate::scalar::Scalar;

pub use schema::{
    ColumnRole, ColumnSpec, EncodedColumn, EncodedSchema, SchemaManifest, TopicBlock, LIKERT_LEVEL_LABELS,
};

/// Tolerance on a topic block's sum before it is rejected rather than renormalised.
pub const TOPIC_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum SurveyError {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("column {column:?}: unseen level {value}")]
    UnseenLevel { column: String, value: String },
    #[error("column {0:?} is constant; cannot standardise")]
    ConstantColumn(String),
    #[error("standardisation stats do not cover column {0:?}")]
    MissingStats(String),
    #[error("{} rows rejected; first: {}", .0.len(), .0[0])]
    Rows(Vec<RowError>),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("no records")]
    Empty,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A rejected input row. `row` counts data rows from 1 (the header is not counted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    pub row: usize,
    pub column: Option<String>,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.column {
            Some(c) => write!(f, "row {} column {:?}: {}", self.row, c, self.message),
            None => write!(f, "row {}: {}", self.row, self.message),
        }
    }
}

/// Questionnaire instrument a respondent received.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Version {
    /// Likert statements only.
    #[serde(rename = "LK")]
    Lk = 1,
    /// Likert statements, then open-ended questions.
    #[serde(rename = "LKOE")]
    Lkoe = 2,
    /// Open-ended questions only.
    #[serde(rename = "OE")]
    Oe = 3,
}

impl Version {
    pub const ALL: [Version; 3] = [Version::Lk, Version::Lkoe, Version::Oe];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Version::Lk),
            2 => Some(Version::Lkoe),
            3 => Some(Version::Oe),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Version::Lk => "LK",
            Version::Lkoe => "LKOE",
            Version::Oe => "OE",
        }
    }

    /// Whether respondents of this version answered the Likert statements.
    pub fn has_likert(self) -> bool {
        self != Version::Oe
    }

    pub fn has_topics(self) -> bool {
        self == Version::Oe
    }

    pub fn index(self) -> usize {
        self as usize - 1
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Version {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim();
        if let Ok(c) = t.parse::<u8>() {
            return Version::from_code(c).ok_or_else(|| format!("version code {c} not in 1..=3"));
        }
        match t.to_ascii_uppercase().as_str() {
            "LK" => Ok(Version::Lk),
            "LKOE" => Ok(Version::Lkoe),
            "OE" => Ok(Version::Oe),
            _ => Err(format!("unknown version {t:?}")),
        }
    }
}

/// One respondent-choice observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub respondent_id: String,
    pub version: Version,
    /// Index into the manifest's alternatives.
    pub choice: usize,
    /// Likert levels (1-based) in manifest order; present iff the version has Likert items.
    pub likert: Option<Vec<u8>>,
    /// Topic proportions of every topic block, concatenated in manifest order.
    pub topic_props: Option<Vec<f64>>,
    /// Covariate values in manifest order.
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub records: Vec<SurveyRecord>,
    pub rejected: Vec<RowError>,
    /// Rows whose topic blocks were renormalised.
    pub renormalized: Vec<usize>,
}

impl LoadReport {
    /// The records, or every rejected row as an error.
    pub fn into_records(self) -> Result<Vec<SurveyRecord>, SurveyError> {
        if self.rejected.is_empty() {
            Ok(self.records)
        } else {
            Err(SurveyError::Rows(self.rejected))
        }
    }
}

pub fn load_dataset(path: &Path, manifest: &SchemaManifest) -> Result<LoadReport, SurveyError> {
    let f = std::fs::File::open(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    read_dataset(f, manifest)
}

/// Parses survey rows against `manifest`. Missing columns fail the whole read;
/// rows that break the version rules are collected in [`LoadReport::rejected`].
pub fn read_dataset<R: Read>(reader: R, manifest: &SchemaManifest) -> Result<LoadReport, SurveyError> {
    manifest.validate()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let pos = |name: &str| -> Result<usize, SurveyError> {
        headers.iter().position(|h| h == name).ok_or_else(|| SurveyError::MissingColumn(name.to_string()))
    };
    let id_col = pos("respondent_id")?;
    let version_col = pos("version")?;
    let choice_col = pos("choice")?;
    let likert_cols = manifest
        .likert_items()
        .into_iter()
        .map(|(n, levels)| Ok((n.to_string(), levels, pos(n)?)))
        .collect::<Result<Vec<_>, SurveyError>>()?;
    let topic_blocks = manifest
        .topic_blocks()
        .into_iter()
        .map(|b| {
            let idx = b.columns.iter().map(|c| pos(c)).collect::<Result<Vec<_>, _>>()?;
            Ok((b, idx))
        })
        .collect::<Result<Vec<_>, SurveyError>>()?;
    let cov_cols = manifest
        .covariates()
        .into_iter()
        .map(|c| Ok((c.name.clone(), pos(&c.name)?)))
        .collect::<Result<Vec<_>, SurveyError>>()?;

    let mut report = LoadReport::default();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let reject = |column: Option<&str>, message: String| RowError {
            row,
            column: column.map(str::to_string),
            message,
        };
        let parsed = (|| -> Result<(SurveyRecord, bool), RowError> {
            let field = |j: usize| rec.get(j).unwrap_or("").trim();
            let respondent_id = field(id_col).to_string();
            if respondent_id.is_empty() {
                return Err(reject(Some("respondent_id"), "empty respondent id".into()));
            }
            let version: Version = field(version_col).parse().map_err(|e| reject(Some("version"), e))?;
            let choice = parse_choice(field(choice_col), &manifest.alternatives)
                .map_err(|e| reject(Some("choice"), e))?;

            let likert_present = likert_cols.iter().any(|&(_, _, j)| !field(j).is_empty());
            let likert = if version.has_likert() {
                let mut levels = Vec::with_capacity(likert_cols.len());
                for (name, n_levels, j) in &likert_cols {
                    let s = field(*j);
                    if s.is_empty() {
                        return Err(reject(Some(name), format!("missing Likert response for version {version}")));
                    }
                    let v: u8 = s
                        .parse()
                        .map_err(|_| reject(Some(name), format!("Likert value {s:?} is not an integer")))?;
                    if v < 1 || usize::from(v) > *n_levels {
                        return Err(reject(Some(name), format!("Likert value {v} outside 1..={n_levels}")));
                    }
                    levels.push(v);
                }
                Some(levels)
            } else {
                if likert_present {
                    return Err(reject(None, format!("version {version} row has Likert responses")));
                }
                None
            };

            let topics_present = topic_blocks.iter().any(|(_, idx)| idx.iter().any(|&j| !field(j).is_empty()));
            let mut renorm = false;
            let topic_props = if version.has_topics() && !topic_blocks.is_empty() {
                let mut props = Vec::new();
                for (block, idx) in &topic_blocks {
                    let mut vals = Vec::with_capacity(idx.len());
                    for (c, &j) in block.columns.iter().zip(idx) {
                        let s = field(j);
                        let v: f64 = s
                            .parse()
                            .map_err(|_| reject(Some(c), format!("topic proportion {s:?} is not a number")))?;
                        if !v.is_finite() || v < 0.0 {
                            return Err(reject(Some(c), format!("topic proportion {v} is negative or not finite")));
                        }
                        vals.push(v);
                    }
                    let sum: f64 = vals.iter().sum();
                    if (sum - 1.0).abs() > TOPIC_SUM_TOLERANCE {
                        return Err(reject(Some(&block.id), format!("topic block sums to {sum}, not 1")));
                    }
                    // rounding-level error is left alone so written records read back unchanged
                    if (sum - 1.0).abs() > 1e-12 {
                        renorm = true;
                        vals.iter_mut().for_each(|v| *v /= sum);
                    }
                    props.extend(vals);
                }
                Some(props)
            } else {
                if topics_present {
                    return Err(reject(None, format!("version {version} row has topic proportions")));
                }
                None
            };

            let mut covariates = Vec::with_capacity(cov_cols.len());
            for (name, j) in &cov_cols {
                let s = field(*j);
                let v: f64 = s.parse().map_err(|_| reject(Some(name), format!("value {s:?} is not a number")))?;
                if !v.is_finite() {
                    return Err(reject(Some(name), "value is not finite".into()));
                }
                covariates.push(v);
            }
            Ok((SurveyRecord { respondent_id, version, choice, likert, topic_props, covariates }, renorm))
        })();
        match parsed {
            Ok((r, renorm)) => {
                if renorm {
                    report.renormalized.push(row);
                }
                report.records.push(r);
            }
            Err(e) => report.rejected.push(e),
        }
    }
    Ok(report)
}

fn parse_choice(s: &str, alternatives: &[String]) -> Result<usize, String> {
    if let Ok(c) = s.parse::<usize>() {
        if c < alternatives.len() {
            return Ok(c);
        }
        return Err(format!("choice {c} outside 0..{}", alternatives.len()));
    }
    alternatives.iter().position(|a| a == s).ok_or_else(|| format!("unknown alternative {s:?}"))
}

/// Writes records in the layout [`read_dataset`] accepts; absent instruments are blank.
pub fn write_dataset<W: Write>(
    writer: W,
    manifest: &SchemaManifest,
    records: &[SurveyRecord],
) -> Result<(), SurveyError> {
    let mut w = csv::Writer::from_writer(writer);
    let likert = manifest.likert_items();
    let topic_cols: Vec<String> = manifest.topic_blocks().into_iter().flat_map(|b| b.columns).collect();
    let covs = manifest.covariates();
    let mut header = vec!["respondent_id".to_string(), "version".into(), "choice".into()];
    header.extend(likert.iter().map(|(n, _)| n.to_string()));
    header.extend(topic_cols.iter().cloned());
    header.extend(covs.iter().map(|c| c.name.clone()));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.respondent_id.clone(), r.version.code().to_string(), r.choice.to_string()];
        match &r.likert {
            Some(l) => row.extend(l.iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), likert.len())),
        }
        match &r.topic_props {
            Some(t) => row.extend(t.iter().map(|v| format!("{v}"))),
            None => row.extend(std::iter::repeat_n(String::new(), topic_cols.len())),
        }
        row.extend(r.covariates.iter().map(|v| format!("{v}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

/// Means and sample standard deviations of the standardised columns, computed
/// on the fitting split and reused for later data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub columns: Vec<ColumnStats>,
}

impl StandardizationStats {
    pub fn get(&self, name: &str) -> Option<&ColumnStats> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Encoded features. `x_att` holds the instrument columns (Likert one-hots,
/// then topic blocks) with zeros wherever the instrument is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix<T> {
    pub x_att: Matrix<T>,
    pub x_s: Matrix<T>,
    pub y: Vec<usize>,
    pub version: Vec<Version>,
    pub respondent_ids: Vec<String>,
    pub schema: EncodedSchema,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            x_att: self.x_att.select_rows(rows),
            x_s: self.x_s.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            version: rows.iter().map(|&i| self.version[i]).collect(),
            respondent_ids: rows.iter().map(|&i| self.respondent_ids[i].clone()).collect(),
            schema: self.schema.clone(),
        }
    }

    pub fn rows_of(&self, version: Version) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.version[i] == version).collect()
    }

    pub fn n_alternatives(&self) -> usize {
        self.schema.alternatives.len()
    }

    /// Column-wise mean of `x_s`: the "average person" covariates.
    pub fn covariate_means(&self) -> Vec<T> {
        let n = T::count(self.len().max(1));
        (0..self.x_s.cols()).map(|j| self.x_s.column(j).into_iter().sum::<T>() / n).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SurveyError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["respondent_id".to_string(), "version".into(), "choice".into()];
        header.extend(self.schema.att_columns.iter().map(|c| c.name.clone()));
        header.extend(self.schema.covariate_columns.iter().map(|c| c.name.clone()));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row =
                vec![self.respondent_ids[i].clone(), self.version[i].code().to_string(), self.y[i].to_string()];
            row.extend(self.x_att.row(i).iter().map(|v| format!("{v}")));
            row.extend(self.x_s.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sample_mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn compute_stats(
    records: &[SurveyRecord],
    manifest: &SchemaManifest,
    schema: &EncodedSchema,
) -> Result<StandardizationStats, SurveyError> {
    let mut out = Vec::new();
    for (j, c) in manifest.covariates().iter().enumerate() {
        if c.role != ColumnRole::Continuous {
            continue;
        }
        let xs: Vec<f64> = records.iter().map(|r| r.covariates[j]).collect();
        out.push(stats_for(&c.name, &xs)?);
    }
    if manifest.standardize_topic_props {
        for (j, name) in schema.topic_column_names().into_iter().enumerate() {
            let xs: Vec<f64> = records.iter().filter_map(|r| r.topic_props.as_ref().map(|t| t[j])).collect();
            out.push(stats_for(name, &xs)?);
        }
    }
    Ok(StandardizationStats { columns: out })
}

fn stats_for(name: &str, xs: &[f64]) -> Result<ColumnStats, SurveyError> {
    if xs.len() < 2 {
        return Err(SurveyError::ConstantColumn(name.to_string()));
    }
    let (mean, std) = sample_mean_std(xs);
    if !(std > 1e-12) {
        return Err(SurveyError::ConstantColumn(name.to_string()));
    }
    Ok(ColumnStats { name: name.to_string(), mean, std })
}

/// Encodes records into a design matrix. Continuous covariates (and topic
/// proportions, if the manifest asks) are standardised with `stats` when
/// given, or with statistics computed from `records`, which are returned.
pub fn encode<T: Scalar>(
    records: &[SurveyRecord],
    manifest: &SchemaManifest,
    stats: Option<&StandardizationStats>,
) -> Result<(DesignMatrix<T>, StandardizationStats), SurveyError> {
    manifest.validate()?;
    if records.is_empty() {
        return Err(SurveyError::Empty);
    }
    let schema = EncodedSchema::from_manifest(manifest);
    let stats = match stats {
        Some(s) => s.clone(),
        None => compute_stats(records, manifest, &schema)?,
    };
    let covs = manifest.covariates();
    let cov_stats = covs
        .iter()
        .map(|c| match c.role {
            ColumnRole::Continuous => {
                stats.get(&c.name).map(Some).ok_or_else(|| SurveyError::MissingStats(c.name.clone()))
            }
            _ => Ok(None),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let topic_names = schema.topic_column_names();
    let topic_stats = if manifest.standardize_topic_props {
        topic_names
            .iter()
            .map(|n| stats.get(n).map(Some).ok_or_else(|| SurveyError::MissingStats(n.to_string())))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        vec![None; topic_names.len()]
    };
    let likert = manifest.likert_items();

    let n = records.len();
    let p_att = schema.att_columns.len();
    let p_s = covs.len();
    let mut x_att = Matrix::zeros(n, p_att);
    let mut x_s = Matrix::zeros(n, p_s);
    for (i, r) in records.iter().enumerate() {
        if r.choice >= manifest.n_alternatives() {
            return Err(SurveyError::UnseenLevel { column: "choice".into(), value: r.choice.to_string() });
        }
        let row = x_att.row_mut(i);
        if let Some(levels) = &r.likert {
            let mut off = 0;
            for ((name, n_levels), &v) in likert.iter().zip(levels) {
                if v < 1 || usize::from(v) > *n_levels {
                    return Err(SurveyError::UnseenLevel { column: name.to_string(), value: v.to_string() });
                }
                row[off + usize::from(v) - 1] = T::one();
                off += n_levels;
            }
        }
        if let Some(props) = &r.topic_props {
            let start = schema.topic_range.0;
            for (j, (&p, st)) in props.iter().zip(&topic_stats).enumerate() {
                let v = match st {
                    Some(s) => (p - s.mean) / s.std,
                    None => p,
                };
                row[start + j] = T::of(v);
            }
        }
        let srow = x_s.row_mut(i);
        for (j, ((c, st), &v)) in covs.iter().zip(&cov_stats).zip(&r.covariates).enumerate() {
            srow[j] = match (c.role, st) {
                (ColumnRole::Continuous, Some(s)) => T::of((v - s.mean) / s.std),
                (ColumnRole::Indicator, _) if v != 0.0 && v != 1.0 => {
                    return Err(SurveyError::UnseenLevel { column: c.name.clone(), value: v.to_string() })
                }
                _ => T::of(v),
            };
        }
    }
    Ok((
        DesignMatrix {
            x_att,
            x_s,
            y: records.iter().map(|r| r.choice).collect(),
            version: records.iter().map(|r| r.version).collect(),
            respondent_ids: records.iter().map(|r| r.respondent_id.clone()).collect(),
            schema,
        },
        stats,
    ))
}

/// Random split stratified by version. The total test size is
/// `round(N * test_fraction)`, shared across versions by largest remainder.
/// Every version keeps at least one training record. Both outputs keep the input order.
pub fn split(
    records: &[SurveyRecord],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<SurveyRecord>, Vec<SurveyRecord>), SurveyError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SurveyError::Split(format!("test_fraction {test_fraction} not in (0, 1)")));
    }
    let mut strata: BTreeMap<Version, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        strata.entry(r.version).or_default().push(i);
    }
    if strata.is_empty() {
        return Err(SurveyError::Empty);
    }
    if let Some((v, idx)) = strata.iter().find(|(_, idx)| idx.len() < 2) {
        return Err(SurveyError::Split(format!("version {v} has {} record(s); need at least 2", idx.len())));
    }
    let n = records.len();
    let total = ((n as f64 * test_fraction).round() as usize).clamp(1, n - strata.len());
    let quotas: Vec<f64> =
        strata.values().map(|idx| total as f64 * idx.len() as f64 / n as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut remaining = total - alloc.iter().sum::<usize>();
    for &s in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        let size = strata.values().nth(s).map_or(0, Vec::len);
        if alloc[s] < size - 1 {
            alloc[s] += 1;
            remaining -= 1;
        }
    }

    let mut is_test = vec![false; n];
    for ((v, idx), &t) in strata.iter().zip(&alloc) {
        let mut shuffled = idx.clone();
        shuffled.shuffle(&mut rng::stream(seed, "split", &[u64::from(v.code())]));
        for &i in &shuffled[..t] {
            is_test[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (r, t) in records.iter().zip(is_test) {
        if t { test.push(r.clone()) } else { train.push(r.clone()) }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests;
