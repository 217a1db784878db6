use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SurveyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Continuous,
    Indicator,
    LikertLevel,
    TopicProp,
    SpAttr,
}

impl ColumnRole {
    pub fn is_covariate(self) -> bool {
        matches!(self, ColumnRole::Continuous | ColumnRole::Indicator | ColumnRole::SpAttr)
    }
}

/// One raw input column. A `likert_level` column holds an integer in
/// `1..=block_size` and expands to `block_size` one-hot columns; `topic_prop`
/// columns sharing a `block_id` form one simplex block of `block_size` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub role: ColumnRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_size: Option<usize>,
}

impl ColumnSpec {
    pub fn new(name: &str, role: ColumnRole) -> Self {
        Self { name: name.to_string(), role, block_id: None, block_size: None }
    }

    pub fn likert(name: &str, levels: usize) -> Self {
        Self {
            name: name.to_string(),
            role: ColumnRole::LikertLevel,
            block_id: Some(name.to_string()),
            block_size: Some(levels),
        }
    }

    pub fn topic(name: &str, block: &str, size: usize) -> Self {
        Self {
            name: name.to_string(),
            role: ColumnRole::TopicProp,
            block_id: Some(block.to_string()),
            block_size: Some(size),
        }
    }
}

pub const LIKERT_LEVEL_LABELS: [&str; 5] = ["SD", "Disag", "Neut", "Agree", "SA"];

fn default_alternatives() -> Vec<String> {
    vec!["RegularCar".into(), "PrivateAV".into(), "SharedAV".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaManifest {
    pub columns: Vec<ColumnSpec>,
    #[serde(default = "default_alternatives")]
    pub alternatives: Vec<String>,
    /// Standardise topic-proportion columns like continuous covariates.
    /// Off by default so that topic blocks stay on the simplex.
    #[serde(default)]
    pub standardize_topic_props: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicBlock {
    pub id: String,
    pub columns: Vec<String>,
}

pub(crate) const RESERVED: [&str; 3] = ["respondent_id", "version", "choice"];

impl SchemaManifest {
    pub fn from_json_file(path: &Path) -> Result<Self, SurveyError> {
        let m: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), SurveyError> {
        let bad = |msg: String| Err(SurveyError::Schema(msg));
        if self.alternatives.len() < 2 {
            return bad("at least two alternatives are required".into());
        }
        let mut seen = HashSet::new();
        for c in &self.columns {
            if RESERVED.contains(&c.name.as_str()) {
                return bad(format!("column name {:?} is reserved", c.name));
            }
            if !seen.insert(c.name.as_str()) {
                return bad(format!("duplicate column {:?}", c.name));
            }
            if c.role == ColumnRole::LikertLevel && c.block_size.unwrap_or(5) < 2 {
                return bad(format!("likert column {:?} needs block_size >= 2", c.name));
            }
            if c.role == ColumnRole::TopicProp && c.block_id.is_none() {
                return bad(format!("topic column {:?} has no block_id", c.name));
            }
        }
        for b in self.topic_blocks() {
            let declared = self
                .columns
                .iter()
                .filter(|c| c.block_id.as_deref() == Some(b.id.as_str()))
                .filter_map(|c| c.block_size)
                .collect::<HashSet<_>>();
            if declared.len() > 1 || declared.iter().any(|&s| s != b.columns.len()) {
                return bad(format!(
                    "topic block {:?} has {} columns but declares block_size {:?}",
                    b.id,
                    b.columns.len(),
                    declared
                ));
            }
            if b.columns.len() < 2 {
                return bad(format!("topic block {:?} needs at least two columns", b.id));
            }
        }
        Ok(())
    }

    pub fn likert_items(&self) -> Vec<(&str, usize)> {
        self.columns
            .iter()
            .filter(|c| c.role == ColumnRole::LikertLevel)
            .map(|c| (c.name.as_str(), c.block_size.unwrap_or(5)))
            .collect()
    }

    /// Topic blocks in order of first appearance.
    pub fn topic_blocks(&self) -> Vec<TopicBlock> {
        let mut blocks: Vec<TopicBlock> = Vec::new();
        for c in self.columns.iter().filter(|c| c.role == ColumnRole::TopicProp) {
            let id = c.block_id.clone().unwrap_or_default();
            match blocks.iter_mut().find(|b| b.id == id) {
                Some(b) => b.columns.push(c.name.clone()),
                None => blocks.push(TopicBlock { id, columns: vec![c.name.clone()] }),
            }
        }
        blocks
    }

    pub fn covariates(&self) -> Vec<&ColumnSpec> {
        self.columns.iter().filter(|c| c.role.is_covariate()).collect()
    }

    pub fn n_alternatives(&self) -> usize {
        self.alternatives.len()
    }
}

/// One column of the encoded design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub name: String,
    pub role: ColumnRole,
    pub block_id: Option<String>,
    pub block_size: usize,
}

/// Column manifest of a [`super::DesignMatrix`]: attitude-instrument columns
/// (Likert one-hots, then topic blocks) and covariate columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedSchema {
    pub att_columns: Vec<EncodedColumn>,
    pub covariate_columns: Vec<EncodedColumn>,
    pub likert_range: (usize, usize),
    pub topic_range: (usize, usize),
    pub likert_blocks: Vec<(String, usize)>,
    pub topic_blocks: Vec<(String, usize)>,
    pub alternatives: Vec<String>,
}

impl EncodedSchema {
    pub fn from_manifest(m: &SchemaManifest) -> Self {
        let mut att_columns = Vec::new();
        let mut likert_blocks = Vec::new();
        for (name, levels) in m.likert_items() {
            for l in 1..=levels {
                att_columns.push(EncodedColumn {
                    name: format!("{name}={l}"),
                    role: ColumnRole::LikertLevel,
                    block_id: Some(name.to_string()),
                    block_size: levels,
                });
            }
            likert_blocks.push((name.to_string(), levels));
        }
        let likert_range = (0, att_columns.len());
        let mut topic_blocks = Vec::new();
        for b in m.topic_blocks() {
            for c in &b.columns {
                att_columns.push(EncodedColumn {
                    name: c.clone(),
                    role: ColumnRole::TopicProp,
                    block_id: Some(b.id.clone()),
                    block_size: b.columns.len(),
                });
            }
            topic_blocks.push((b.id.clone(), b.columns.len()));
        }
        let topic_range = (likert_range.1, att_columns.len());
        let covariate_columns = m
            .covariates()
            .into_iter()
            .map(|c| EncodedColumn {
                name: c.name.clone(),
                role: c.role,
                block_id: c.block_id.clone(),
                block_size: 1,
            })
            .collect();
        Self {
            att_columns,
            covariate_columns,
            likert_range,
            topic_range,
            likert_blocks,
            topic_blocks,
            alternatives: m.alternatives.clone(),
        }
    }

    pub fn topic_column_names(&self) -> Vec<&str> {
        self.att_columns[self.topic_range.0..self.topic_range.1].iter().map(|c| c.name.as_str()).collect()
    }
}
