//! Counterfactual instrument mapping: given latent attitudes, sample the
//! simplex-valued responses (Likert level distributions or topic proportions)
//! an instrument head would need to produce them.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attitude::{softmax, utilities, AttitudeHead, ChoiceParams};
use crate::linalg::{invert, Matrix};
use crate::rng;
use crate::scalar::Scalar;
use crate::survey::{EncodedSchema, LIKERT_LEVEL_LABELS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CounterfactualError {
    #[error("block {block:?} loadings are rank deficient; gamma gamma^T is singular")]
    RankDeficient { block: String },
    #[error("block {block:?} has {size} columns but {k} attitude dimensions; need size >= k")]
    TooNarrow { block: String, size: usize, k: usize },
    #[error("invalid block structure: {0}")]
    Structure(String),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("invalid sampler config: {0}")]
    Config(String),
    #[error("attitudes contain non-finite values (row {0})")]
    NonFinite(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStructure {
    pub blocks: Vec<(String, usize)>,
}

impl BlockStructure {
    pub fn new(blocks: Vec<(String, usize)>) -> Result<Self, CounterfactualError> {
        if blocks.is_empty() {
            return Err(CounterfactualError::Structure("no blocks".into()));
        }
        if let Some((name, size)) = blocks.iter().find(|(_, s)| *s < 2) {
            return Err(CounterfactualError::Structure(format!("block {name:?} has size {size}; need at least 2")));
        }
        Ok(Self { blocks })
    }

    pub fn likert(schema: &EncodedSchema) -> Result<Self, CounterfactualError> {
        Self::new(schema.likert_blocks.clone())
    }

    pub fn topics(schema: &EncodedSchema) -> Result<Self, CounterfactualError> {
        Self::new(schema.topic_blocks.clone())
    }

    pub fn total(&self) -> usize {
        self.blocks.iter().map(|b| b.1).sum()
    }

    /// `[start, end)` column range of each block.
    pub fn ranges(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.blocks
            .iter()
            .map(|&(_, s)| {
                off += s;
                (off - s, off)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GibbsConfig {
    /// Total sweeps.
    pub n_iter: usize,
    /// Leading sweeps discarded before averaging.
    pub n_warm: usize,
    pub seed: u64,
    /// Multiplier on the normalised Dirichlet parameter. 1 reproduces the
    /// reference sampler; larger values give lower-variance draws.
    pub concentration: f64,
    /// Keep every sweep's state (memory: rows x sweeps x columns).
    pub record_trace: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self { n_iter: 2000, n_warm: 400, seed: 0, concentration: 1.0, record_trace: false }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<(), CounterfactualError> {
        if self.n_warm >= self.n_iter {
            return Err(CounterfactualError::Config(format!(
                "n_warm ({}) must be below n_iter ({})",
                self.n_warm, self.n_iter
            )));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(CounterfactualError::Config("concentration must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsMapResult<T> {
    pub structure: BlockStructure,
    /// Per row, the post-warmup mean of every column (blocks concatenated).
    pub row_means: Matrix<T>,
    /// Block updates whose residual solve was all zeros and fell back to a uniform parameter.
    pub degeneracies: usize,
    /// Largest `|gamma_b x* - r|` over every inner solve.
    pub max_inner_residual: T,
    /// Largest deviation of any single block draw from the simplex
    /// (negative entry or sum away from 1).
    pub max_draw_simplex_error: T,
    /// Per row, the state after each sweep, when requested.
    pub trace: Option<Vec<Matrix<T>>>,
}

impl<T: Scalar> GibbsMapResult<T> {
    pub fn block_mean(&self, row: usize, block: usize) -> &[T] {
        let (s, e) = self.structure.ranges()[block];
        &self.row_means.row(row)[s..e]
    }

    /// Column means over rows.
    pub fn averaged(&self) -> Vec<T> {
        let n = T::count(self.row_means.rows().max(1));
        (0..self.row_means.cols()).map(|j| self.row_means.column(j).into_iter().sum::<T>() / n).collect()
    }
}

/// Right pseudo-inverse `gamma^T (gamma gamma^T)^-1` of a `K x B` block.
pub fn block_pinv<T: Scalar>(gamma: &Matrix<T>, block: &str) -> Result<Matrix<T>, CounterfactualError> {
    let (k, b) = (gamma.rows(), gamma.cols());
    if b < k {
        return Err(CounterfactualError::TooNarrow { block: block.to_string(), size: b, k });
    }
    let gt = gamma.transpose();
    let ggt = gamma.matmul(&gt);
    let inv = invert(&ggt, T::epsilon().sqrt() * T::of(1e-4))
        .ok_or_else(|| CounterfactualError::RankDeficient { block: block.to_string() })?;
    Ok(gt.matmul(&inv))
}

/// Draws from Dirichlet(`alpha`) via log-Gamma variates so that very small
/// parameters do not underflow. Zero parameters give zero components.
pub fn sample_dirichlet<R: Rng>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            if a <= 0.0 {
                return f64::NEG_INFINITY;
            }
            // G(a) = G(a + 1) * U^(1/a)
            let g = Gamma::new(a + 1.0, 1.0).expect("positive shape").sample(rng);
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            g.ln() + u.ln() / a
        })
        .collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logs.iter().map(|&l| if l.is_finite() { (l - m).exp() } else { 0.0 }).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

struct RowOutcome<T> {
    means: Vec<T>,
    degeneracies: usize,
    max_residual: T,
    max_simplex_error: T,
    trace: Option<Matrix<T>>,
}

/// Modified Gibbs sampler. For each row, every block starts at a random
/// one-hot vector; each sweep visits the blocks in order, solves
/// `gamma_b x = y - alpha - sum_{b' != b} gamma_b' x_b'` by least norm,
/// and replaces `x_b` with a Dirichlet draw parameterised by the normalised
/// absolute solution. Post-warmup sweeps are averaged per row.
pub fn gibbs_map<T: Scalar>(
    y_att: &Matrix<T>,
    head: &AttitudeHead<T>,
    structure: &BlockStructure,
    cfg: &GibbsConfig,
) -> Result<GibbsMapResult<T>, CounterfactualError> {
    cfg.validate()?;
    let k = head.alpha.len();
    let p = structure.total();
    if head.gamma.rows() != p {
        return Err(CounterfactualError::Dimension { what: "head loadings rows", expected: p, got: head.gamma.rows() });
    }
    if head.gamma.cols() != k {
        return Err(CounterfactualError::Dimension { what: "head loadings columns", expected: k, got: head.gamma.cols() });
    }
    if y_att.cols() != k {
        return Err(CounterfactualError::Dimension { what: "attitude columns", expected: k, got: y_att.cols() });
    }
    if let Some(i) = (0..y_att.rows()).find(|&i| y_att.row(i).iter().any(|v| !v.is_finite())) {
        return Err(CounterfactualError::NonFinite(i));
    }
    let ranges = structure.ranges();
    // gamma_b is K x B: the block's rows of the head loadings, transposed.
    let gammas: Vec<Matrix<T>> =
        ranges.iter().map(|&(s, e)| Matrix::from_fn(k, e - s, |r, c| head.gamma[(s + c, r)])).collect();
    let pinvs = gammas
        .iter()
        .zip(&structure.blocks)
        .map(|(g, (name, _))| block_pinv(g, name))
        .collect::<Result<Vec<_>, _>>()?;

    let outcomes: Vec<RowOutcome<T>> = (0..y_att.rows())
        .into_par_iter()
        .map(|i| gibbs_row(y_att.row(i), head, &gammas, &pinvs, &ranges, cfg, i))
        .collect();

    let mut row_means = Matrix::zeros(y_att.rows(), p);
    let mut degeneracies = 0;
    let mut max_inner_residual = T::zero();
    let mut max_draw_simplex_error = T::zero();
    let mut trace = cfg.record_trace.then(Vec::new);
    for (i, o) in outcomes.into_iter().enumerate() {
        row_means.row_mut(i).copy_from_slice(&o.means);
        degeneracies += o.degeneracies;
        max_inner_residual = max_inner_residual.max(o.max_residual);
        max_draw_simplex_error = max_draw_simplex_error.max(o.max_simplex_error);
        if let (Some(t), Some(ot)) = (trace.as_mut(), o.trace) {
            t.push(ot);
        }
    }
    Ok(GibbsMapResult {
        structure: structure.clone(),
        row_means,
        degeneracies,
        max_inner_residual,
        max_draw_simplex_error,
        trace,
    })
}

fn gibbs_row<T: Scalar>(
    y: &[T],
    head: &AttitudeHead<T>,
    gammas: &[Matrix<T>],
    pinvs: &[Matrix<T>],
    ranges: &[(usize, usize)],
    cfg: &GibbsConfig,
    row: usize,
) -> RowOutcome<T> {
    let k = head.alpha.len();
    let p = ranges.last().map_or(0, |r| r.1);
    let mut x = vec![T::zero(); p];
    for (b, &(s, e)) in ranges.iter().enumerate() {
        x[s + rng::keyed_index(cfg.seed, "gibbs-init", &[row as u64, b as u64], e - s)] = T::one();
    }
    // contrib[b] = gamma_b x_b, kept in sync with x.
    let mut contrib: Vec<Vec<T>> = gammas.iter().zip(ranges).map(|(g, &(s, e))| g.mul_vec(&x[s..e])).collect();
    let mut sums = vec![T::zero(); p];
    let mut out = RowOutcome {
        means: vec![T::zero(); p],
        degeneracies: 0,
        max_residual: T::zero(),
        max_simplex_error: T::zero(),
        trace: cfg.record_trace.then(|| Matrix::zeros(cfg.n_iter, p)),
    };
    let conc = cfg.concentration;
    let mut r = vec![T::zero(); k];
    for sweep in 0..cfg.n_iter {
        for (b, &(s, e)) in ranges.iter().enumerate() {
            for d in 0..k {
                let others: T = contrib.iter().enumerate().filter(|&(bb, _)| bb != b).map(|(_, c)| c[d]).sum();
                r[d] = y[d] - head.alpha[d] - others;
            }
            let x_star = pinvs[b].mul_vec(&r);
            let check = gammas[b].mul_vec(&x_star);
            let resid = check.iter().zip(&r).map(|(&a, &bv)| (a - bv) * (a - bv)).sum::<T>().sqrt();
            out.max_residual = out.max_residual.max(resid);

            let abs: Vec<f64> = x_star.iter().map(|v| v.abs().f64()).collect();
            let total: f64 = abs.iter().sum();
            let param: Vec<f64> = if total > 0.0 && total.is_finite() {
                abs.iter().map(|a| conc * a / total).collect()
            } else {
                out.degeneracies += 1;
                vec![conc / (e - s) as f64; e - s]
            };
            let mut rng = rng::stream(cfg.seed, "gibbs", &[row as u64, sweep as u64, b as u64]);
            let draw = sample_dirichlet(&mut rng, &param);
            let sum: f64 = draw.iter().sum();
            let neg = draw.iter().fold(0.0f64, |m, &v| m.max(-v));
            out.max_simplex_error = out.max_simplex_error.max(T::of((sum - 1.0).abs().max(neg)));
            for (xi, &v) in x[s..e].iter_mut().zip(&draw) {
                *xi = T::of(v);
            }
            contrib[b] = gammas[b].mul_vec(&x[s..e]);
        }
        if let Some(t) = out.trace.as_mut() {
            t.row_mut(sweep).copy_from_slice(&x);
        }
        if sweep >= cfg.n_warm {
            for (acc, &v) in sums.iter_mut().zip(&x) {
                *acc += v;
            }
        }
    }
    let kept = T::count(cfg.n_iter - cfg.n_warm);
    out.means = sums.into_iter().map(|v| v / kept).collect();
    out
}

/// A percentage table: one row per statement or topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionTable {
    pub title: String,
    pub row_header: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl ProportionTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{},{}", self.row_header, self.columns.join(","));
        for (label, vals) in &self.rows {
            let cells: Vec<String> = vals.iter().map(|v| format!("{v:.2}")).collect();
            let _ = writeln!(s, "{label},{}", cells.join(","));
        }
        s
    }
}

fn level_labels(size: usize) -> Vec<String> {
    if size == LIKERT_LEVEL_LABELS.len() {
        LIKERT_LEVEL_LABELS.iter().map(|s| s.to_string()).collect()
    } else {
        (1..=size).map(|l| format!("L{l}")).collect()
    }
}

/// Likert table from per-column averages: rows are statements, columns levels.
pub fn likert_table(title: &str, structure: &BlockStructure, avg: &[f64]) -> ProportionTable {
    let width = structure.blocks.iter().map(|b| b.1).max().unwrap_or(0);
    let rows = structure
        .blocks
        .iter()
        .zip(structure.ranges())
        .map(|((name, _), (s, e))| (name.clone(), avg[s..e].iter().map(|v| 100.0 * v).collect()))
        .collect();
    ProportionTable { title: title.to_string(), row_header: "Statement".into(), columns: level_labels(width), rows }
}

/// Topic table from per-column averages: one row per topic.
pub fn topic_table(title: &str, topic_names: &[String], avg: &[f64]) -> ProportionTable {
    ProportionTable {
        title: title.to_string(),
        row_header: "Top #".into(),
        columns: vec!["Top Prop (%)".into()],
        rows: topic_names.iter().zip(avg).map(|(n, v)| (n.clone(), vec![100.0 * v])).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingOutput<T> {
    pub table: ProportionTable,
    pub result: GibbsMapResult<T>,
}

/// Generated Likert-level distributions for the given attitudes.
pub fn map_to_likert<T: Scalar>(
    y_att: &Matrix<T>,
    lk_head: &AttitudeHead<T>,
    structure: &BlockStructure,
    cfg: &GibbsConfig,
) -> Result<MappingOutput<T>, CounterfactualError> {
    let result = gibbs_map(y_att, lk_head, structure, cfg)?;
    let avg: Vec<f64> = result.averaged().iter().map(|v| v.f64()).collect();
    Ok(MappingOutput { table: likert_table("Generated Averages", structure, &avg), result })
}

/// Generated topic proportions for the given attitudes.
pub fn map_to_topics<T: Scalar>(
    y_att: &Matrix<T>,
    oe_head: &AttitudeHead<T>,
    structure: &BlockStructure,
    topic_names: &[String],
    cfg: &GibbsConfig,
) -> Result<MappingOutput<T>, CounterfactualError> {
    if topic_names.len() != structure.total() {
        return Err(CounterfactualError::Dimension {
            what: "topic names",
            expected: structure.total(),
            got: topic_names.len(),
        });
    }
    let result = gibbs_map(y_att, oe_head, structure, cfg)?;
    let avg: Vec<f64> = result.averaged().iter().map(|v| v.f64()).collect();
    Ok(MappingOutput { table: topic_table("Generated Topic Proportions", topic_names, &avg), result })
}

/// Choice shares (percent) for an "average person": mean covariates and the
/// given attitudes.
pub fn predict_shares<T: Scalar>(
    choice: &ChoiceParams<T>,
    mean_covariates: &[T],
    att: &[T],
) -> Result<Vec<T>, crate::attitude::AttitudeError> {
    let u = utilities(choice, mean_covariates, att)?;
    Ok(softmax(&u).into_iter().map(|p| p * T::of(100.0)).collect())
}

/// Column means over `rows` of `x[.., start..end]`, the observed counterpart
/// of [`GibbsMapResult::averaged`].
pub fn observed_averages<T: Scalar>(x: &Matrix<T>, rows: &[usize], (start, end): (usize, usize)) -> Vec<f64> {
    let n = rows.len().max(1) as f64;
    (start..end).map(|j| rows.iter().map(|&i| x[(i, j)].f64()).sum::<f64>() / n).collect()
}

/// Places tables side by side: a title line, a column-header line, then rows
/// padded with empty cells where a table is shorter.
pub fn side_by_side(tables: &[&ProportionTable]) -> String {
    let widths: Vec<usize> = tables.iter().map(|t| 1 + t.columns.len()).collect();
    let mut s = String::new();
    let titles: Vec<String> = tables
        .iter()
        .zip(&widths)
        .map(|(t, &w)| std::iter::once(t.title.clone()).chain(std::iter::repeat_n(String::new(), w - 1)).collect::<Vec<_>>().join(","))
        .collect();
    let _ = writeln!(s, "{}", titles.join(","));
    let headers: Vec<String> =
        tables.iter().map(|t| std::iter::once(t.row_header.clone()).chain(t.columns.iter().cloned()).collect::<Vec<_>>().join(",")).collect();
    let _ = writeln!(s, "{}", headers.join(","));
    let n = tables.iter().map(|t| t.rows.len()).max().unwrap_or(0);
    for i in 0..n {
        let cells: Vec<String> = tables
            .iter()
            .zip(&widths)
            .map(|(t, &w)| match t.rows.get(i) {
                Some((label, vals)) => std::iter::once(label.clone())
                    .chain(vals.iter().map(|v| format!("{v:.2}")))
                    .chain(std::iter::repeat_n(String::new(), w - 1 - vals.len()))
                    .collect::<Vec<_>>()
                    .join(","),
                None => vec![String::new(); w].join(","),
            })
            .collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}
