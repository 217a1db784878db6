//! Latent-attitude choice models: per-instrument heads map instrument
//! features to a latent attitude vector, which enters a multinomial logit
//! alongside covariates. Fitted by mean-field variational inference.

mod mnl;
mod model;
mod vi;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::survey::{DesignMatrix, EncodedSchema, Version};

pub use mnl::{fit_indicator_mnl, version_design, MnlFit};
pub use model::{
    attitude_matrix, attitude_mean, combined_attitude_mean, log_likelihood, softmax, standardize_columns, utilities,
};
pub use vi::{
    elbo, elbo_fixed_noise, fit, predict, ElboEval, FitResult, LatentAttitudes, OptConfig, Prediction,
    VariationalPosterior,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttitudeError {
    #[error("invalid model: {0}")]
    Spec(String),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("row {row} has version {version}, which this model does not cover")]
    Version { row: usize, version: Version },
    #[error("ELBO became non-finite at step {step}")]
    Divergence { step: usize, trace: Vec<(usize, f64)> },
    #[error("invalid optimiser config: {0}")]
    Config(String),
    #[error("MNL estimation failed: {0}")]
    Mnl(String),
    #[error("perfect or quasi-complete separation: coefficient {name} diverges")]
    Separation { name: String },
}

/// Which instrument heads a model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    /// One head, fitted on rows of a single version.
    Individual(Version),
    /// All three heads; each row uses the head of its version.
    Combined,
}

impl ModelMode {
    pub fn heads(self) -> Vec<Version> {
        match self {
            ModelMode::Individual(v) => vec![v],
            ModelMode::Combined => Version::ALL.to_vec(),
        }
    }

    pub fn covers(self, v: Version) -> bool {
        match self {
            ModelMode::Individual(m) => m == v,
            ModelMode::Combined => true,
        }
    }
}

impl fmt::Display for ModelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelMode::Individual(v) => write!(f, "individual-{}", v.name().to_ascii_lowercase()),
            ModelMode::Combined => f.write_str("combined"),
        }
    }
}

impl FromStr for ModelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "combined" => Ok(ModelMode::Combined),
            "individual-lk" => Ok(ModelMode::Individual(Version::Lk)),
            "individual-lkoe" => Ok(ModelMode::Individual(Version::Lkoe)),
            "individual-oe" => Ok(ModelMode::Individual(Version::Oe)),
            _ => Err(format!("unknown model {s:?}; expected individual-lk, individual-lkoe, individual-oe or combined")),
        }
    }
}

/// Column ranges `[start, end)` into `x_att` for each instrument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentBlocks {
    pub lk: (usize, usize),
    pub lkoe: (usize, usize),
    pub oe: (usize, usize),
}

impl InstrumentBlocks {
    pub fn get(&self, v: Version) -> (usize, usize) {
        match v {
            Version::Lk => self.lk,
            Version::Lkoe => self.lkoe,
            Version::Oe => self.oe,
        }
    }

    /// LK and LKOE read the Likert columns, OE reads the topic columns.
    pub fn from_schema(schema: &EncodedSchema) -> Self {
        Self { lk: schema.likert_range, lkoe: schema.likert_range, oe: schema.topic_range }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub k_att: usize,
    pub n_alternatives: usize,
    pub base_alternative: usize,
    pub blocks: InstrumentBlocks,
    pub covariate_count: usize,
    pub mode: ModelMode,
    /// Standardise latent attitudes over the batch before they enter utilities.
    pub standardize_attitudes: bool,
}

impl ModelSpec {
    pub fn from_schema(schema: &EncodedSchema, mode: ModelMode, k_att: usize) -> Result<Self, AttitudeError> {
        let spec = Self {
            k_att,
            n_alternatives: schema.alternatives.len(),
            base_alternative: 0,
            blocks: InstrumentBlocks::from_schema(schema),
            covariate_count: schema.covariate_columns.len(),
            mode,
            standardize_attitudes: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), AttitudeError> {
        let bad = |m: String| Err(AttitudeError::Spec(m));
        if self.k_att < 1 {
            return bad("k_att must be at least 1".into());
        }
        if self.n_alternatives < 2 {
            return bad("need at least two alternatives".into());
        }
        if self.base_alternative >= self.n_alternatives {
            return bad(format!("base alternative {} outside 0..{}", self.base_alternative, self.n_alternatives));
        }
        for v in self.mode.heads() {
            let (s, e) = self.blocks.get(v);
            if e <= s {
                return bad(format!("instrument {v} has an empty column block"));
            }
        }
        Ok(())
    }

    pub fn block_len(&self, v: Version) -> usize {
        let (s, e) = self.blocks.get(v);
        e - s
    }

    /// Number of free coefficients, the K in adjusted goodness-of-fit measures.
    pub fn parameter_count(&self) -> usize {
        ParamLayout::new(self).len()
    }

    /// Index of alternative `c` among the non-base columns.
    pub(crate) fn free_index(&self, c: usize) -> Option<usize> {
        match c.cmp(&self.base_alternative) {
            std::cmp::Ordering::Less => Some(c),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(c - 1),
        }
    }

    pub fn check_data<T: Scalar>(&self, data: &DesignMatrix<T>) -> Result<(), AttitudeError> {
        self.validate()?;
        let need_att = self.mode.heads().iter().map(|&v| self.blocks.get(v).1).max().unwrap_or(0);
        if data.x_att.cols() < need_att {
            return Err(AttitudeError::Dimension { what: "x_att columns", expected: need_att, got: data.x_att.cols() });
        }
        if data.x_s.cols() != self.covariate_count {
            return Err(AttitudeError::Dimension {
                what: "covariate columns",
                expected: self.covariate_count,
                got: data.x_s.cols(),
            });
        }
        for (row, (&v, &y)) in data.version.iter().zip(&data.y).enumerate() {
            if !self.mode.covers(v) {
                return Err(AttitudeError::Version { row, version: v });
            }
            if y >= self.n_alternatives {
                return Err(AttitudeError::Dimension { what: "choice label", expected: self.n_alternatives, got: y });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttitudeHead<T> {
    /// Intercepts, one per attitude dimension.
    pub alpha: Vec<T>,
    /// Loadings, `P_block x K_att`.
    pub gamma: Matrix<T>,
}

impl<T: Scalar> AttitudeHead<T> {
    pub fn zeros(p_block: usize, k_att: usize) -> Self {
        Self { alpha: vec![T::zero(); k_att], gamma: Matrix::zeros(p_block, k_att) }
    }
}

/// Choice constants and coefficients over all `C` alternatives; the base
/// alternative's entry and column are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceParams<T> {
    pub alpha: Vec<T>,
    /// `(P_s + K_att) x C`; rows are covariates first, then attitudes.
    pub beta: Matrix<T>,
}

impl<T: Scalar> ChoiceParams<T> {
    pub fn zeros(p_s: usize, k_att: usize, c: usize) -> Self {
        Self { alpha: vec![T::zero(); c], beta: Matrix::zeros(p_s + k_att, c) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub heads: Vec<(Version, AttitudeHead<T>)>,
    pub choice: ChoiceParams<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            heads: spec
                .mode
                .heads()
                .into_iter()
                .map(|v| (v, AttitudeHead::zeros(spec.block_len(v), spec.k_att)))
                .collect(),
            choice: ChoiceParams::zeros(spec.covariate_count, spec.k_att, spec.n_alternatives),
        }
    }

    pub fn head(&self, v: Version) -> Option<&AttitudeHead<T>> {
        self.heads.iter().find(|(hv, _)| *hv == v).map(|(_, h)| h)
    }

    pub fn head_mut(&mut self, v: Version) -> Option<&mut AttitudeHead<T>> {
        self.heads.iter_mut().find(|(hv, _)| *hv == v).map(|(_, h)| h)
    }
}

/// What a flat parameter group holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    HeadAlpha(Version),
    HeadGamma(Version),
    ChoiceAlpha,
    ChoiceBeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub kind: GroupKind,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamGroup {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat ordering of the free coefficients: per head `alpha_<V>` then
/// `gamma_<V>`, then `alpha_choice` and `beta_choice` over non-base
/// alternatives. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub groups: Vec<ParamGroup>,
}

impl ParamLayout {
    pub fn new(spec: &ModelSpec) -> Self {
        let mut groups = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, kind, rows, cols| {
            groups.push(ParamGroup { name, kind, rows, cols, offset });
            offset += rows * cols;
        };
        let k = spec.k_att;
        for v in spec.mode.heads() {
            push(format!("alpha_{v}"), GroupKind::HeadAlpha(v), 1, k);
            push(format!("gamma_{v}"), GroupKind::HeadGamma(v), spec.block_len(v), k);
        }
        let free = spec.n_alternatives - 1;
        push("alpha_choice".into(), GroupKind::ChoiceAlpha, 1, free);
        push("beta_choice".into(), GroupKind::ChoiceBeta, spec.covariate_count + k, free);
        Self { groups }
    }

    pub fn len(&self) -> usize {
        self.groups.last().map_or(0, |g| g.offset + g.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn group(&self, name: &str) -> Option<&ParamGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn group_of(&self, kind: GroupKind) -> Option<&ParamGroup> {
        self.groups.iter().find(|g| g.kind == kind)
    }

    /// Names of every entry, e.g. `gamma_LK[3,1]`.
    pub fn entry_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len());
        for g in &self.groups {
            for r in 0..g.rows {
                for c in 0..g.cols {
                    if g.rows == 1 {
                        out.push(format!("{}[{c}]", g.name));
                    } else {
                        out.push(format!("{}[{r},{c}]", g.name));
                    }
                }
            }
        }
        out
    }

    pub fn unpack<T: Scalar>(&self, spec: &ModelSpec, theta: &[T]) -> ModelParams<T> {
        let mut p = ModelParams::zeros(spec);
        for g in &self.groups {
            let vals = &theta[g.range()];
            match g.kind {
                GroupKind::HeadAlpha(v) => p.head_mut(v).expect("head in layout").alpha.copy_from_slice(vals),
                GroupKind::HeadGamma(v) => {
                    p.head_mut(v).expect("head in layout").gamma.as_mut_slice().copy_from_slice(vals)
                }
                GroupKind::ChoiceAlpha | GroupKind::ChoiceBeta => {
                    for r in 0..g.rows {
                        for c in 0..spec.n_alternatives {
                            if let Some(fc) = spec.free_index(c) {
                                let v = vals[r * g.cols + fc];
                                match g.kind {
                                    GroupKind::ChoiceAlpha => p.choice.alpha[c] = v,
                                    _ => p.choice.beta.row_mut(r)[c] = v,
                                }
                            }
                        }
                    }
                }
            }
        }
        p
    }

    pub fn pack<T: Scalar>(&self, spec: &ModelSpec, params: &ModelParams<T>) -> Vec<T> {
        let mut theta = vec![T::zero(); self.len()];
        for g in &self.groups {
            let out = &mut theta[g.range()];
            match g.kind {
                GroupKind::HeadAlpha(v) => out.copy_from_slice(&params.head(v).expect("head in params").alpha),
                GroupKind::HeadGamma(v) => {
                    out.copy_from_slice(params.head(v).expect("head in params").gamma.as_slice())
                }
                GroupKind::ChoiceAlpha | GroupKind::ChoiceBeta => {
                    for r in 0..g.rows {
                        for c in 0..spec.n_alternatives {
                            if let Some(fc) = spec.free_index(c) {
                                out[r * g.cols + fc] = match g.kind {
                                    GroupKind::ChoiceAlpha => params.choice.alpha[c],
                                    _ => params.choice.beta[(r, c)],
                                };
                            }
                        }
                    }
                }
            }
        }
        theta
    }
}
