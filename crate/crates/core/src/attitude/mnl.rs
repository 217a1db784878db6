use serde::{Deserialize, Serialize};

use super::AttitudeError;
use crate::linalg::{invert, Matrix};
use crate::scalar::{log_sum_exp, Scalar};
use crate::survey::Version;

/// Maximum-likelihood MNL estimates. Columns follow the non-base alternatives
/// in index order (`alternatives`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnlFit<T> {
    pub alternatives: Vec<usize>,
    pub coef: Matrix<T>,
    pub std_err: Matrix<T>,
    pub t_stat: Matrix<T>,
    pub log_likelihood: T,
    pub iterations: usize,
    pub grad_norm: T,
}

/// Intercept plus LKOE and OE indicators (LK is the reference level).
pub fn version_design<T: Scalar>(versions: &[Version]) -> (Matrix<T>, Vec<String>) {
    let x = Matrix::from_fn(versions.len(), 3, |i, j| match j {
        0 => T::one(),
        1 if versions[i] == Version::Lkoe => T::one(),
        2 if versions[i] == Version::Oe => T::one(),
        _ => T::zero(),
    });
    (x, vec!["const".into(), "Ver_LKOE".into(), "Ver_OE".into()])
}

const MAX_ITER: usize = 100;
// A log-odds beyond this needs millions of observations per cell; reaching it
// means the likelihood has no finite maximiser.
const DIVERGENCE_BOUND: f64 = 15.0;
const SE_BOUND: f64 = 1e3;

fn loglik_grad_hess<T: Scalar>(
    x: &Matrix<T>,
    y: &[usize],
    alts: &[usize],
    base: usize,
    theta: &[T],
    want_hess: bool,
) -> (T, Vec<T>, Matrix<T>) {
    let (p, f) = (x.cols(), alts.len());
    let d = p * f;
    let c_all = f + 1;
    let mut ll = T::zero();
    let mut g = vec![T::zero(); d];
    let mut h = Matrix::zeros(if want_hess { d } else { 0 }, if want_hess { d } else { 0 });
    let mut u = vec![T::zero(); c_all];
    let mut prob = vec![T::zero(); f];
    for (i, &yi) in y.iter().enumerate() {
        let xi = x.row(i);
        // u[0] is the base alternative; u[1 + a] the a-th free alternative.
        u[0] = T::zero();
        for a in 0..f {
            u[1 + a] = (0..p).map(|j| xi[j] * theta[j * f + a]).sum();
        }
        let lse = log_sum_exp(&u);
        ll += if yi == base { -lse } else { u[1 + alts.iter().position(|&c| c == yi).unwrap()] - lse };
        for a in 0..f {
            prob[a] = (u[1 + a] - lse).exp();
            let r = if alts[a] == yi { T::one() } else { T::zero() } - prob[a];
            for j in 0..p {
                g[j * f + a] += xi[j] * r;
            }
        }
        if want_hess {
            for a in 0..f {
                for b in 0..f {
                    let w = if a == b { prob[a] * (T::one() - prob[a]) } else { -prob[a] * prob[b] };
                    for j in 0..p {
                        if xi[j] == T::zero() {
                            continue;
                        }
                        for l in 0..p {
                            h.row_mut(j * f + a)[l * f + b] += w * xi[j] * xi[l];
                        }
                    }
                }
            }
        }
    }
    (ll, g, h)
}

/// Newton-Raphson MNL fit of `y` on design `x` (include an intercept column
/// yourself). Converges when the gradient norm drops below `1e-8` (looser for
/// single precision); standard errors come from the inverse observed information.
pub fn fit_indicator_mnl<T: Scalar>(
    x: &Matrix<T>,
    y: &[usize],
    n_alternatives: usize,
    base: usize,
) -> Result<MnlFit<T>, AttitudeError> {
    if x.rows() != y.len() {
        return Err(AttitudeError::Dimension { what: "MNL rows", expected: x.rows(), got: y.len() });
    }
    if n_alternatives < 2 || base >= n_alternatives {
        return Err(AttitudeError::Spec(format!("base {base} invalid for {n_alternatives} alternatives")));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_alternatives) {
        return Err(AttitudeError::Dimension { what: "choice label", expected: n_alternatives, got: bad });
    }
    let alts: Vec<usize> = (0..n_alternatives).filter(|&c| c != base).collect();
    let (p, f) = (x.cols(), alts.len());
    let d = p * f;
    let tol = if T::epsilon().f64() < 1e-10 { 1e-8 } else { 1e-2 };
    let name = |k: usize| format!("x{}:alt{}", k / f, alts[k % f]);

    let mut theta = vec![T::zero(); d];
    let (mut ll, mut g, mut h) = loglik_grad_hess(x, y, &alts, base, &theta, true);
    let mut iterations = 0;
    loop {
        let gnorm = g.iter().map(|&v| v * v).sum::<T>().sqrt();
        if gnorm.f64() < tol {
            break;
        }
        if iterations >= MAX_ITER {
            let k = (0..d).max_by(|&a, &b| theta[a].abs().f64().total_cmp(&theta[b].abs().f64())).unwrap_or(0);
            return Err(AttitudeError::Separation { name: name(k) });
        }
        let Some(inv) = invert(&h, T::epsilon()) else {
            if iterations == 0 {
                return Err(AttitudeError::Mnl("information matrix is singular".into()));
            }
            let k = (0..d).max_by(|&a, &b| theta[a].abs().f64().total_cmp(&theta[b].abs().f64())).unwrap_or(0);
            return Err(AttitudeError::Separation { name: name(k) });
        };
        let step = inv.mul_vec(&g);
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<T> = theta.iter().zip(&step).map(|(&a, &s)| a + t * s).collect();
            let (ll_c, _, _) = loglik_grad_hess(x, y, &alts, base, &cand, false);
            if ll_c.is_finite() && ll_c >= ll - T::of(1e-12) * ll.abs().max(T::one()) {
                theta = cand;
                accepted = true;
                break;
            }
            t *= T::of(0.5);
        }
        if !accepted {
            return Err(AttitudeError::Mnl("line search failed to improve the log-likelihood".into()));
        }
        iterations += 1;
        if let Some(k) = (0..d).find(|&k| theta[k].abs().f64() > DIVERGENCE_BOUND) {
            return Err(AttitudeError::Separation { name: name(k) });
        }
        (ll, g, h) = loglik_grad_hess(x, y, &alts, base, &theta, true);
    }
    let inv = invert(&h, T::epsilon())
        .ok_or_else(|| AttitudeError::Mnl("information matrix is singular at the optimum".into()))?;
    let coef = Matrix::from_vec(p, f, theta.clone()).expect("shape");
    let std_err = Matrix::from_fn(p, f, |j, a| inv[(j * f + a, j * f + a)].sqrt());
    if let Some(k) = (0..d).find(|&k| {
        theta[k].abs().f64() > DIVERGENCE_BOUND || !(std_err.as_slice()[k].f64() < SE_BOUND)
    }) {
        return Err(AttitudeError::Separation { name: name(k) });
    }
    let t_stat = Matrix::from_fn(p, f, |j, a| coef[(j, a)] / std_err[(j, a)]);
    let grad_norm = g.iter().map(|&v| v * v).sum::<T>().sqrt();
    Ok(MnlFit { alternatives: alts, coef, std_err, t_stat, log_likelihood: ll, iterations, grad_norm })
}
