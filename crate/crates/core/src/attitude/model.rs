use super::{AttitudeError, AttitudeHead, ChoiceParams, ModelParams, ModelSpec};
use crate::linalg::Matrix;
use crate::scalar::{log_sum_exp, Scalar};
use crate::survey::{DesignMatrix, Version};

/// `alpha + gamma^T x`: the mean of the latent attitude given instrument features.
pub fn attitude_mean<T: Scalar>(head: &AttitudeHead<T>, x_block: &[T]) -> Result<Vec<T>, AttitudeError> {
    if x_block.len() != head.gamma.rows() {
        return Err(AttitudeError::Dimension { what: "instrument block", expected: head.gamma.rows(), got: x_block.len() });
    }
    if head.alpha.len() != head.gamma.cols() {
        return Err(AttitudeError::Dimension { what: "head intercepts", expected: head.gamma.cols(), got: head.alpha.len() });
    }
    let mut out = head.alpha.clone();
    for (p, &x) in x_block.iter().enumerate() {
        if x != T::zero() {
            for (o, &g) in out.iter_mut().zip(head.gamma.row(p)) {
                *o += g * x;
            }
        }
    }
    Ok(out)
}

/// Attitude mean for a full `x_att` row: only the head of the row's version
/// contributes, applied to that instrument's block.
pub fn combined_attitude_mean<T: Scalar>(
    params: &ModelParams<T>,
    spec: &ModelSpec,
    x_att: &[T],
    version: Version,
) -> Result<Vec<T>, AttitudeError> {
    let head = params
        .head(version)
        .ok_or(AttitudeError::Spec(format!("model has no head for version {version}")))?;
    let (s, e) = spec.blocks.get(version);
    if x_att.len() < e {
        return Err(AttitudeError::Dimension { what: "x_att row", expected: e, got: x_att.len() });
    }
    attitude_mean(head, &x_att[s..e])
}

/// `u_c = alpha_c + beta_c^T [x_s; att]`.
pub fn utilities<T: Scalar>(params: &ChoiceParams<T>, x_s: &[T], att: &[T]) -> Result<Vec<T>, AttitudeError> {
    let rows = params.beta.rows();
    if x_s.len() + att.len() != rows {
        return Err(AttitudeError::Dimension { what: "utility inputs", expected: rows, got: x_s.len() + att.len() });
    }
    let mut u = params.alpha.clone();
    for (j, &x) in x_s.iter().chain(att).enumerate() {
        if x != T::zero() {
            for (uc, &b) in u.iter_mut().zip(params.beta.row(j)) {
                *uc += b * x;
            }
        }
    }
    Ok(u)
}

pub fn softmax<T: Scalar>(u: &[T]) -> Vec<T> {
    let m = u.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = u.iter().map(|&x| (x - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// `sum_n log softmax(u_n)[y_n]` with the given per-row attitudes.
pub fn log_likelihood<T: Scalar>(
    params: &ChoiceParams<T>,
    att: &Matrix<T>,
    data: &DesignMatrix<T>,
) -> Result<T, AttitudeError> {
    if att.rows() != data.len() {
        return Err(AttitudeError::Dimension { what: "attitude rows", expected: data.len(), got: att.rows() });
    }
    let mut ll = T::zero();
    for i in 0..data.len() {
        let u = utilities(params, data.x_s.row(i), att.row(i))?;
        let y = data.y[i];
        if y >= u.len() {
            return Err(AttitudeError::Dimension { what: "choice label", expected: u.len(), got: y });
        }
        ll += u[y] - log_sum_exp(&u);
    }
    Ok(ll)
}

/// Raw attitude means for every row.
pub fn attitude_matrix<T: Scalar>(
    params: &ModelParams<T>,
    spec: &ModelSpec,
    data: &DesignMatrix<T>,
) -> Result<Matrix<T>, AttitudeError> {
    let mut a = Matrix::zeros(data.len(), spec.k_att);
    for i in 0..data.len() {
        let m = combined_attitude_mean(params, spec, data.x_att.row(i), data.version[i])?;
        a.row_mut(i).copy_from_slice(&m);
    }
    Ok(a)
}

/// Column-wise standardisation with the sample (N-1) standard deviation.
/// A column with zero spread (or a single row) maps to zeros and reports sd 0.
pub fn standardize_columns<T: Scalar>(a: &Matrix<T>) -> (Matrix<T>, Vec<T>, Vec<T>) {
    let (n, k) = (a.rows(), a.cols());
    let mut mean = vec![T::zero(); k];
    let mut sd = vec![T::zero(); k];
    let mut t = Matrix::zeros(n, k);
    if n == 0 {
        return (t, mean, sd);
    }
    let nf = T::count(n);
    for j in 0..k {
        let m = (0..n).map(|i| a[(i, j)]).sum::<T>() / nf;
        mean[j] = m;
        if n < 2 {
            continue;
        }
        let var = (0..n).map(|i| (a[(i, j)] - m) * (a[(i, j)] - m)).sum::<T>() / T::count(n - 1);
        let s = var.sqrt();
        if s > T::zero() {
            sd[j] = s;
            for i in 0..n {
                t.row_mut(i)[j] = (a[(i, j)] - m) / s;
            }
        }
    }
    (t, mean, sd)
}
