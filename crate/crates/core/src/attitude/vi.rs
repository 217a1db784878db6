use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{attitude_matrix, log_likelihood, softmax, standardize_columns, utilities};
use super::{AttitudeError, GroupKind, ModelParams, ModelSpec, ParamLayout};
use crate::linalg::Matrix;
use crate::rng;
use crate::scalar::{log_sum_exp, Scalar};
use crate::survey::DesignMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptConfig {
    pub lr: f64,
    pub steps: usize,
    /// Global gradient-norm clip.
    pub clip: f64,
    pub n_particles: usize,
    pub seed: u64,
    pub trace_every: usize,
    /// Initial posterior standard deviation of every coefficient.
    pub init_scale: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self { lr: 0.01, steps: 4000, clip: 10.0, n_particles: 3, seed: 0, trace_every: 100, init_scale: 0.1 }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<(), AttitudeError> {
        let bad = |m: &str| Err(AttitudeError::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if self.n_particles == 0 {
            return bad("n_particles must be at least 1");
        }
        if self.trace_every == 0 {
            return bad("trace_every must be at least 1");
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be positive");
        }
        Ok(())
    }
}

/// Diagonal Gaussian over the flat coefficient vector of a [`ParamLayout`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalPosterior<T> {
    pub layout: ParamLayout,
    pub loc: Vec<T>,
    pub scale: Vec<T>,
    pub fitted: bool,
    pub elbo_trace: Vec<(usize, T)>,
}

impl<T: Scalar> VariationalPosterior<T> {
    pub fn new(spec: &ModelSpec, init_scale: T) -> Self {
        let layout = ParamLayout::new(spec);
        let d = layout.len();
        Self { layout, loc: vec![T::zero(); d], scale: vec![init_scale; d], fitted: false, elbo_trace: Vec::new() }
    }

    /// Posterior means as structured parameters.
    pub fn posterior_mean(&self, spec: &ModelSpec) -> ModelParams<T> {
        self.layout.unpack(spec, &self.loc)
    }

    /// `(name, loc, scale)` per coefficient.
    pub fn entries(&self) -> Vec<(String, T, T)> {
        self.layout
            .entry_names()
            .into_iter()
            .zip(self.loc.iter().zip(&self.scale))
            .map(|(n, (&l, &s))| (n, l, s))
            .collect()
    }

    pub fn log_scale(&self) -> Vec<T> {
        self.scale.iter().map(|s| s.ln()).collect()
    }
}

/// Standardised latent attitudes of the fitting batch, with the statistics used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentAttitudes<T> {
    pub att: Matrix<T>,
    pub mean: Vec<T>,
    pub sd: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    pub posterior: VariationalPosterior<T>,
    pub attitudes: LatentAttitudes<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElboEval<T> {
    pub value: T,
    pub grad_loc: Vec<T>,
    pub grad_log_scale: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction<T> {
    pub probs: Matrix<T>,
    pub labels: Vec<usize>,
    /// Raw (unstandardised) attitude means.
    pub attitudes: Matrix<T>,
    pub log_likelihood: T,
}

struct HeadSlot {
    alpha_off: usize,
    gamma_off: usize,
    start: usize,
    end: usize,
}

/// Log-likelihood of the flat coefficient vector with its gradient.
struct Objective<'a, T> {
    spec: &'a ModelSpec,
    data: &'a DesignMatrix<T>,
    heads: Vec<HeadSlot>,
    head_of_row: Vec<usize>,
    alpha_off: usize,
    beta_off: usize,
    dim: usize,
}

impl<'a, T: Scalar> Objective<'a, T> {
    fn new(spec: &'a ModelSpec, layout: &ParamLayout, data: &'a DesignMatrix<T>) -> Result<Self, AttitudeError> {
        spec.check_data(data)?;
        let versions = spec.mode.heads();
        let heads = versions
            .iter()
            .map(|&v| {
                let (start, end) = spec.blocks.get(v);
                HeadSlot {
                    alpha_off: layout.group_of(GroupKind::HeadAlpha(v)).expect("layout head").offset,
                    gamma_off: layout.group_of(GroupKind::HeadGamma(v)).expect("layout head").offset,
                    start,
                    end,
                }
            })
            .collect();
        let head_of_row = data
            .version
            .iter()
            .map(|v| versions.iter().position(|h| h == v).expect("checked version"))
            .collect();
        Ok(Self {
            spec,
            data,
            heads,
            head_of_row,
            alpha_off: layout.group_of(GroupKind::ChoiceAlpha).expect("layout choice").offset,
            beta_off: layout.group_of(GroupKind::ChoiceBeta).expect("layout choice").offset,
            dim: layout.len(),
        })
    }

    fn eval(&self, theta: &[T], grad: &mut [T]) -> T {
        let (spec, data) = (self.spec, self.data);
        let n = data.len();
        let k = spec.k_att;
        let c_all = spec.n_alternatives;
        let free = c_all - 1;
        let p_s = spec.covariate_count;
        grad.iter_mut().for_each(|g| *g = T::zero());

        let mut a = Matrix::zeros(n, k);
        for i in 0..n {
            let h = &self.heads[self.head_of_row[i]];
            let row = a.row_mut(i);
            row.copy_from_slice(&theta[h.alpha_off..h.alpha_off + k]);
            for (p, &x) in data.x_att.row(i)[h.start..h.end].iter().enumerate() {
                if x != T::zero() {
                    let g = &theta[h.gamma_off + p * k..h.gamma_off + (p + 1) * k];
                    for (r, &gv) in row.iter_mut().zip(g) {
                        *r += gv * x;
                    }
                }
            }
        }
        let (t, sd) = if spec.standardize_attitudes {
            let (t, _, sd) = standardize_columns(&a);
            (t, sd)
        } else {
            (a, vec![T::one(); k])
        };

        let beta = |j: usize, fc: usize| theta[self.beta_off + j * free + fc];
        let mut gt = Matrix::zeros(n, k);
        let mut u = vec![T::zero(); c_all];
        let mut ll = T::zero();
        for i in 0..n {
            let xs = data.x_s.row(i);
            let ti = t.row(i);
            for (c, uc) in u.iter_mut().enumerate() {
                *uc = match spec.free_index(c) {
                    None => T::zero(),
                    Some(fc) => {
                        let mut s = theta[self.alpha_off + fc];
                        for (j, &x) in xs.iter().enumerate() {
                            s += x * beta(j, fc);
                        }
                        for (kk, &tv) in ti.iter().enumerate() {
                            s += tv * beta(p_s + kk, fc);
                        }
                        s
                    }
                };
            }
            let lse = log_sum_exp(&u);
            let y = data.y[i];
            ll += u[y] - lse;
            for c in 0..c_all {
                let Some(fc) = spec.free_index(c) else { continue };
                let ind = if c == y { T::one() } else { T::zero() };
                let r = ind - (u[c] - lse).exp();
                grad[self.alpha_off + fc] += r;
                for (j, &x) in xs.iter().enumerate() {
                    grad[self.beta_off + j * free + fc] += r * x;
                }
                for (kk, &tv) in ti.iter().enumerate() {
                    grad[self.beta_off + (p_s + kk) * free + fc] += r * tv;
                    gt.row_mut(i)[kk] += r * beta(p_s + kk, fc);
                }
            }
        }

        // Backpropagate through the batch standardisation.
        let da = if spec.standardize_attitudes {
            let mut da = Matrix::zeros(n, k);
            if n >= 2 {
                let nf = T::count(n);
                let nm1 = T::count(n - 1);
                for kk in 0..k {
                    if sd[kk] == T::zero() {
                        continue;
                    }
                    let mean_g = (0..n).map(|i| gt[(i, kk)]).sum::<T>() / nf;
                    let dot = (0..n).map(|i| gt[(i, kk)] * t[(i, kk)]).sum::<T>();
                    for i in 0..n {
                        da.row_mut(i)[kk] = (gt[(i, kk)] - mean_g - t[(i, kk)] * dot / nm1) / sd[kk];
                    }
                }
            }
            da
        } else {
            gt
        };

        for i in 0..n {
            let h = &self.heads[self.head_of_row[i]];
            let d = da.row(i);
            for (kk, &dv) in d.iter().enumerate() {
                grad[h.alpha_off + kk] += dv;
            }
            for (p, &x) in data.x_att.row(i)[h.start..h.end].iter().enumerate() {
                if x != T::zero() {
                    for (kk, &dv) in d.iter().enumerate() {
                        grad[h.gamma_off + p * k + kk] += x * dv;
                    }
                }
            }
        }
        ll
    }

    /// Reparameterised ELBO with standard-normal priors on every coefficient,
    /// averaged over the supplied noise draws.
    fn elbo(&self, loc: &[T], log_scale: &[T], noise: &[Vec<T>]) -> ElboEval<T> {
        let d = self.dim;
        let scale: Vec<T> = log_scale.iter().map(|s| s.exp()).collect();
        let half = T::of(0.5);
        let per: Vec<(T, Vec<T>, Vec<T>)> = noise
            .par_iter()
            .map(|eps| {
                let theta: Vec<T> = (0..d).map(|j| loc[j] + scale[j] * eps[j]).collect();
                let mut g = vec![T::zero(); d];
                let ll = self.eval(&theta, &mut g);
                let mut value = ll;
                let mut gl = vec![T::zero(); d];
                let mut gs = vec![T::zero(); d];
                for j in 0..d {
                    // log N(theta|0,1) - log q(theta), constants cancelled
                    value += log_scale[j] + half * (eps[j] * eps[j] - theta[j] * theta[j]);
                    let gth = g[j] - theta[j];
                    gl[j] = gth;
                    gs[j] = gth * scale[j] * eps[j] + T::one();
                }
                (value, gl, gs)
            })
            .collect();
        let s = T::count(noise.len());
        let mut out = ElboEval { value: T::zero(), grad_loc: vec![T::zero(); d], grad_log_scale: vec![T::zero(); d] };
        for (v, gl, gs) in per {
            out.value += v / s;
            for j in 0..d {
                out.grad_loc[j] += gl[j] / s;
                out.grad_log_scale[j] += gs[j] / s;
            }
        }
        out
    }
}

fn draw_noise<T: Scalar, R: Rng>(rng: &mut R, particles: usize, d: usize) -> Vec<Vec<T>> {
    (0..particles)
        .map(|_| (0..d).map(|_| T::of(rng.sample::<f64, _>(StandardNormal))).collect())
        .collect()
}

/// ELBO and its gradients with caller-supplied noise (one vector of standard
/// normals per particle), for finite-difference checks with common random numbers.
pub fn elbo_fixed_noise<T: Scalar>(
    spec: &ModelSpec,
    data: &DesignMatrix<T>,
    loc: &[T],
    log_scale: &[T],
    noise: &[Vec<T>],
) -> Result<ElboEval<T>, AttitudeError> {
    let layout = ParamLayout::new(spec);
    let obj = Objective::new(spec, &layout, data)?;
    let d = layout.len();
    for (what, len) in [("loc", loc.len()), ("log_scale", log_scale.len())] {
        if len != d {
            return Err(AttitudeError::Dimension { what, expected: d, got: len });
        }
    }
    if let Some(e) = noise.iter().find(|e| e.len() != d) {
        return Err(AttitudeError::Dimension { what: "noise", expected: d, got: e.len() });
    }
    if noise.is_empty() {
        return Err(AttitudeError::Config("need at least one noise draw".into()));
    }
    Ok(obj.elbo(loc, log_scale, noise))
}

/// Monte Carlo ELBO of `posterior`, deterministic given `seed`.
pub fn elbo<T: Scalar>(
    posterior: &VariationalPosterior<T>,
    spec: &ModelSpec,
    data: &DesignMatrix<T>,
    n_particles: usize,
    seed: u64,
) -> Result<T, AttitudeError> {
    let mut r = rng::stream(seed, "elbo", &[]);
    let noise = draw_noise(&mut r, n_particles, posterior.loc.len());
    let e = elbo_fixed_noise(spec, data, &posterior.loc, &posterior.log_scale(), &noise)?;
    if !e.value.is_finite() {
        return Err(AttitudeError::Divergence { step: 0, trace: Vec::new() });
    }
    Ok(e.value)
}

/// Stochastic gradient ascent on the ELBO with Adam and global-norm clipping.
pub fn fit<T: Scalar>(
    spec: &ModelSpec,
    data: &DesignMatrix<T>,
    cfg: &OptConfig,
) -> Result<FitResult<T>, AttitudeError> {
    cfg.validate()?;
    let mut post = VariationalPosterior::new(spec, T::of(cfg.init_scale));
    let obj = Objective::new(spec, &post.layout, data)?;
    let d = post.layout.len();
    let mut loc = vec![T::zero(); d];
    let mut log_scale = vec![T::of(cfg.init_scale.ln()); d];
    let mut noise_rng = rng::stream(cfg.seed, "vi-noise", &[]);

    let (b1, b2, eps) = (T::of(0.9), T::of(0.999), T::of(1e-8));
    let lr = T::of(cfg.lr);
    let clip = T::of(cfg.clip);
    let mut m = vec![T::zero(); 2 * d];
    let mut v = vec![T::zero(); 2 * d];
    let (mut b1t, mut b2t) = (T::one(), T::one());
    let mut trace: Vec<(usize, T)> = Vec::new();
    let diverged = |step: usize, trace: &[(usize, T)]| AttitudeError::Divergence {
        step,
        trace: trace.iter().map(|&(s, v)| (s, v.f64())).collect(),
    };

    for step in 0..cfg.steps {
        let noise = draw_noise(&mut noise_rng, cfg.n_particles, d);
        let e = obj.elbo(&loc, &log_scale, &noise);
        if !e.value.is_finite() {
            return Err(diverged(step, &trace));
        }
        if step % cfg.trace_every == 0 {
            trace.push((step, e.value));
        }
        let mut g: Vec<T> = e.grad_loc.into_iter().chain(e.grad_log_scale).collect();
        if g.iter().any(|x| !x.is_finite()) {
            return Err(diverged(step, &trace));
        }
        let norm = g.iter().map(|&x| x * x).sum::<T>().sqrt();
        if norm > clip {
            let f = clip / norm;
            g.iter_mut().for_each(|x| *x *= f);
        }
        b1t *= b1;
        b2t *= b2;
        for j in 0..2 * d {
            m[j] = b1 * m[j] + (T::one() - b1) * g[j];
            v[j] = b2 * v[j] + (T::one() - b2) * g[j] * g[j];
            let mh = m[j] / (T::one() - b1t);
            let vh = v[j] / (T::one() - b2t);
            let delta = lr * mh / (vh.sqrt() + eps);
            if j < d {
                loc[j] += delta;
            } else {
                log_scale[j - d] += delta;
            }
        }
    }
    let final_noise = draw_noise(&mut noise_rng, cfg.n_particles, d);
    let last = obj.elbo(&loc, &log_scale, &final_noise).value;
    if !last.is_finite() {
        return Err(diverged(cfg.steps, &trace));
    }
    trace.push((cfg.steps, last));

    post.loc = loc;
    post.scale = log_scale.iter().map(|s| s.exp()).collect();
    post.fitted = true;
    post.elbo_trace = trace;

    let params = post.posterior_mean(spec);
    let raw = attitude_matrix(&params, spec, data)?;
    let attitudes = if spec.standardize_attitudes {
        let (att, mean, sd) = standardize_columns(&raw);
        LatentAttitudes { att, mean, sd }
    } else {
        LatentAttitudes { att: raw, mean: vec![T::zero(); spec.k_att], sd: vec![T::one(); spec.k_att] }
    };
    Ok(FitResult { posterior: post, attitudes })
}

/// Plug-in prediction at the posterior means with raw head-mean attitudes.
/// Labels are the argmax, ties going to the lowest index.
pub fn predict<T: Scalar>(
    posterior: &VariationalPosterior<T>,
    spec: &ModelSpec,
    data: &DesignMatrix<T>,
) -> Result<Prediction<T>, AttitudeError> {
    spec.check_data(data)?;
    if posterior.layout != ParamLayout::new(spec) {
        return Err(AttitudeError::Spec("posterior layout does not match the model".into()));
    }
    let params = posterior.posterior_mean(spec);
    let att = attitude_matrix(&params, spec, data)?;
    let mut probs = Matrix::zeros(data.len(), spec.n_alternatives);
    let mut labels = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let p = softmax(&utilities(&params.choice, data.x_s.row(i), att.row(i))?);
        let mut best = 0;
        for (c, &pc) in p.iter().enumerate() {
            if pc > p[best] {
                best = c;
            }
        }
        labels.push(best);
        probs.row_mut(i).copy_from_slice(&p);
    }
    let ll = log_likelihood(&params.choice, &att, data)?;
    Ok(Prediction { probs, labels, attitudes: att, log_likelihood: ll })
}
