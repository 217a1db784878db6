//! Goodness-of-fit measures for discrete-choice models and the classical
//! statistics used to validate survey instruments.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("null log-likelihood must be negative, got {0}")]
    NullLogLikelihood(f64),
    #[error("label {label} outside 0..{classes}")]
    Label { label: usize, classes: usize },
    #[error("prediction and truth lengths differ ({0} vs {1})")]
    Length(usize, usize),
    #[error("need at least {needed} {what}, got {got}")]
    TooSmall { what: &'static str, needed: usize, got: usize },
    #[error("total-score variance is zero; alpha is undefined")]
    ZeroVariance,
}

/// Counts indexed `[truth][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { counts: vec![vec![0; classes]; classes] }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let c = counts.len();
        if let Some(row) = counts.iter().find(|r| r.len() != c) {
            return Err(MetricsError::Length(row.len(), c));
        }
        Ok(Self { counts })
    }

    pub fn from_labels(truth: &[usize], pred: &[usize], classes: usize) -> Result<Self, MetricsError> {
        if truth.len() != pred.len() {
            return Err(MetricsError::Length(pred.len(), truth.len()));
        }
        let mut cm = Self::new(classes);
        for (&t, &p) in truth.iter().zip(pred) {
            for label in [t, p] {
                if label >= classes {
                    return Err(MetricsError::Label { label, classes });
                }
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth][pred]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn truth_marginal(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn pred_marginal(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullLogLikelihoods<T> {
    /// Equal shares.
    pub ll_init: T,
    /// Alternative-specific constants only (empirical shares).
    pub ll_constants: T,
}

pub fn ll_null<T: Scalar>(y: &[usize], classes: usize) -> Result<NullLogLikelihoods<T>, MetricsError> {
    if y.is_empty() {
        return Err(MetricsError::TooSmall { what: "observations", needed: 1, got: 0 });
    }
    let mut counts = vec![0usize; classes];
    for &c in y {
        if c >= classes {
            return Err(MetricsError::Label { label: c, classes });
        }
        counts[c] += 1;
    }
    let n = T::count(y.len());
    let ll_init = n * (T::one() / T::count(classes)).ln();
    let ll_constants = counts
        .iter()
        .filter(|&&k| k > 0)
        .map(|&k| T::count(k) * (T::count(k) / n).ln())
        .sum();
    Ok(NullLogLikelihoods { ll_init, ll_constants })
}

/// McFadden's rho-squared and its parameter-adjusted form.
pub fn mcfadden<T: Scalar>(ll_full: T, ll_null: T, k_params: usize) -> Result<(T, T), MetricsError> {
    if !(ll_null < T::zero()) {
        return Err(MetricsError::NullLogLikelihood(ll_null.f64()));
    }
    let rho2 = T::one() - ll_full / ll_null;
    let adj = T::one() - (ll_full - T::count(k_params)) / ll_null;
    Ok((rho2, adj))
}

/// Count R-squared in percent and the adjusted count R-squared (gain over
/// always predicting the most frequent true class), absent when undefined.
pub fn count_r2<T: Scalar>(cm: &ConfusionMatrix) -> Result<(T, Option<T>), MetricsError> {
    let n = cm.total();
    if n == 0 {
        return Err(MetricsError::TooSmall { what: "observations", needed: 1, got: 0 });
    }
    let hundred = T::of(100.0);
    let trace = cm.trace();
    let count = hundred * T::of(trace as f64) / T::of(n as f64);
    let modal = (0..cm.classes()).map(|c| cm.truth_marginal(c)).max().unwrap_or(0);
    let adj = (n != modal)
        .then(|| hundred * (T::of(trace as f64) - T::of(modal as f64)) / T::of((n - modal) as f64));
    Ok((count, adj))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    Macro,
    Micro,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub accuracy: T,
}

/// Precision, recall and F1 over classes (one-vs-rest), plus accuracy.
/// Under macro averaging a class with a zero denominator contributes 0, and
/// F1 is the harmonic mean of the averaged precision and recall.
pub fn prf<T: Scalar>(cm: &ConfusionMatrix, averaging: Averaging) -> Result<Prf<T>, MetricsError> {
    let n = cm.total();
    if n == 0 {
        return Err(MetricsError::TooSmall { what: "observations", needed: 1, got: 0 });
    }
    let c = cm.classes();
    let ratio = |num: u64, den: u64| if den == 0 { T::zero() } else { T::of(num as f64) / T::of(den as f64) };
    let accuracy = ratio(cm.trace(), n);
    let (precision, recall) = match averaging {
        Averaging::Macro => {
            let k = T::count(c);
            let p = (0..c).map(|i| ratio(cm.get(i, i), cm.pred_marginal(i))).sum::<T>() / k;
            let r = (0..c).map(|i| ratio(cm.get(i, i), cm.truth_marginal(i))).sum::<T>() / k;
            (p, r)
        }
        Averaging::Micro => (accuracy, accuracy),
    };
    let f1 = if precision + recall == T::zero() {
        T::zero()
    } else {
        T::of(2.0) * precision * recall / (precision + recall)
    };
    Ok(Prf { precision, recall, f1, accuracy })
}

fn sample_variance<T: Scalar>(xs: impl Iterator<Item = T> + Clone) -> T {
    let n = T::count(xs.clone().count());
    let mean = xs.clone().sum::<T>() / n;
    xs.map(|x| (x - mean) * (x - mean)).sum::<T>() / (n - T::one())
}

/// Cronbach's alpha of an N x k item matrix (rows are respondents).
pub fn cronbach_alpha<T: Scalar>(items: &Matrix<T>) -> Result<T, MetricsError> {
    let (n, k) = (items.rows(), items.cols());
    if k < 2 {
        return Err(MetricsError::TooSmall { what: "items", needed: 2, got: k });
    }
    if n < 2 {
        return Err(MetricsError::TooSmall { what: "respondents", needed: 2, got: n });
    }
    let item_var: T = (0..k).map(|j| sample_variance((0..n).map(|i| items[(i, j)]))).sum();
    let totals: Vec<T> = (0..n).map(|i| items.row(i).iter().copied().sum()).collect();
    let total_var = sample_variance(totals.iter().copied());
    if total_var == T::zero() {
        return Err(MetricsError::ZeroVariance);
    }
    let kf = T::count(k);
    Ok(kf / (kf - T::one()) * (T::one() - item_var / total_var))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p_two_sided: f64,
    pub method: PValueMethod,
}

/// Largest combined sample size for which the exact null distribution is used.
pub const MANN_WHITNEY_EXACT_MAX: usize = 16;

/// Midranks (1-based) of `values`, and the tie-correction term sum(t^3 - t).
pub fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

/// Number of arrangements giving each U value for sample sizes (m, n), for
/// U in 0..=m*n.
pub fn mann_whitney_null_counts(m: usize, n: usize) -> Vec<u128> {
    // f[i][j][u]: arrangements of i first-sample and j second-sample items.
    let max_u = m * n;
    let mut prev: Vec<Vec<u128>> = vec![vec![0; max_u + 1]; n + 1];
    for j in 0..=n {
        prev[j][0] = 1;
    }
    for _i in 1..=m {
        let mut cur: Vec<Vec<u128>> = vec![vec![0; max_u + 1]; n + 1];
        cur[0][0] = 1;
        for j in 1..=n {
            for u in 0..=max_u {
                // Largest item is from the first sample: it beats all j second-sample items.
                let a = if u >= j { prev[j][u - j] } else { 0 };
                cur[j][u] = a + cur[j - 1][u];
            }
        }
        prev = cur;
    }
    prev[n].clone()
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::TooSmall { what: "observations per sample", needed: 1, got: 0 });
    }
    let (m, n) = (a.len(), b.len());
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&all);
    let r_a: f64 = ranks[..m].iter().sum();
    let u = r_a - (m * (m + 1)) as f64 / 2.0;
    let mn = (m * n) as f64;

    if m + n <= MANN_WHITNEY_EXACT_MAX && ties == 0.0 {
        let counts = mann_whitney_null_counts(m, n);
        let total: u128 = counts.iter().sum();
        let lo = u.min(mn - u).round() as usize;
        let tail: u128 = counts[..=lo].iter().sum();
        let p = (2.0 * tail as f64 / total as f64).min(1.0);
        return Ok(MannWhitney { u, p_two_sided: p, method: PValueMethod::Exact });
    }
    let big_n = (m + n) as f64;
    let var = mn / 12.0 * ((big_n + 1.0) - ties / (big_n * (big_n - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = (((u - mn / 2.0).abs() - 0.5) / var.sqrt()).max(0.0);
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(MannWhitney { u, p_two_sided: p, method: PValueMethod::Normal })
}

/// Welch two-sample t statistic for the mean difference `mean(a) - mean(b)`.
pub fn two_group_t<T: Scalar>(a: &[T], b: &[T]) -> Result<T, MetricsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(MetricsError::TooSmall { what: "observations per group", needed: 2, got: s.len() });
        }
    }
    let mean = |s: &[T]| s.iter().copied().sum::<T>() / T::count(s.len());
    let se2 = sample_variance(a.iter().copied()) / T::count(a.len())
        + sample_variance(b.iter().copied()) / T::count(b.len());
    Ok((mean(a) - mean(b)) / se2.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n: usize,
    pub k_params: usize,
    pub ll_init: f64,
    pub ll_constants: f64,
    pub ll_final: Option<f64>,
    pub rho2: Option<f64>,
    pub rho2_c: Option<f64>,
    pub adj_rho2: Option<f64>,
    pub count_r2: f64,
    pub adj_count_r2: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub averaging: Averaging,
}

/// Assembles the full report. `ll_final` may be absent when only labels are
/// available; the rho-squared family is then absent too.
pub fn fit_report(
    ll_init: f64,
    ll_constants: f64,
    ll_final: Option<f64>,
    cm: &ConfusionMatrix,
    k_params: usize,
    averaging: Averaging,
) -> Result<FitReport, MetricsError> {
    let (rho2, adj_rho2, rho2_c) = match ll_final {
        Some(llf) => {
            let (r, a) = mcfadden(llf, ll_init, k_params)?;
            let rc = (ll_constants < 0.0).then(|| 1.0 - llf / ll_constants);
            (Some(r), Some(a), rc)
        }
        None => (None, None, None),
    };
    let (count, adj_count) = count_r2::<f64>(cm)?;
    let p = prf::<f64>(cm, averaging)?;
    Ok(FitReport {
        n: cm.total() as usize,
        k_params,
        ll_init,
        ll_constants,
        ll_final,
        rho2,
        rho2_c,
        adj_rho2,
        count_r2: count,
        adj_count_r2: adj_count,
        precision: p.precision,
        recall: p.recall,
        f1: p.f1,
        accuracy: p.accuracy,
        averaging,
    })
}

impl FitReport {
    pub const TABLE_HEADER: &'static str =
        "model,LL_I,LL_C,LL_F,K,rho2,rho2_c,adj_rho2,count_r2,adj_count_r2,precision,recall,f1,accuracy";

    /// One row in the goodness-of-fit table layout; absent values are blank.
    pub fn table_row(&self, label: &str) -> String {
        let opt = |v: Option<f64>, d: usize| v.map(|x| format!("{x:.d$}")).unwrap_or_default();
        format!(
            "{label},{:.2},{:.2},{},{},{},{},{},{:.2},{},{:.2},{:.2},{:.2},{:.2}",
            self.ll_init,
            self.ll_constants,
            opt(self.ll_final, 2),
            self.k_params,
            opt(self.rho2, 2),
            opt(self.rho2_c, 2),
            opt(self.adj_rho2, 2),
            self.count_r2,
            opt(self.adj_count_r2, 2),
            self.precision,
            self.recall,
            self.f1,
            self.accuracy,
        )
    }
}
