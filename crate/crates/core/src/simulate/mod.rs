//! Forward simulators for the topic model and the survey, returning every
//! latent so each estimator can be checked against known truth.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attitude::{attitude_mean, softmax, utilities, AttitudeHead, ChoiceParams, ModelParams};
use crate::corpus::{QuestionId, RawResponse};
use crate::counterfactual::sample_dirichlet;
use crate::linalg::Matrix;
use crate::rng;
use crate::survey::{ColumnRole, ColumnSpec, SchemaManifest, SurveyRecord, Version};

#[derive(Debug, thiserror::Error)]
pub enum SimulateError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Survey(#[from] crate::survey::SurveyError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Closed-ended statements in questionnaire order.
pub const STATEMENTS: [&str; 9] = [
    "AV_LeaEa", "AV_WrkEa", "AV_SklEa", "AV_UseEa", "AV_TrNed", "AV_OthAc", "AV_DeAcc", "AV_ReStr", "AV_UsImp",
];

/// Words inserted between generated content words so responses pass the
/// short-response filter. All are in the default stopword list.
const FILLERS: [&str; 6] = ["the", "and", "it", "is", "to", "of"];

/// Pseudo-word for vocabulary slot `index`: consonant-vowel syllables ending
/// in a stop, a shape the stemmer leaves untouched.
pub fn pseudo_word(index: usize) -> String {
    const C: &[u8] = b"bdfgklmprstvz";
    const V: &[u8] = b"aou";
    const F: &[u8] = b"kmpt";
    let mut s = String::new();
    let mut n = index;
    for _ in 0..3 {
        let syl = n % (C.len() * V.len());
        n /= C.len() * V.len();
        s.push(C[syl / V.len()] as char);
        s.push(V[syl % V.len()] as char);
    }
    s.push(F[n % F.len()] as char);
    s
}

/// Topic-word matrix in which topic `t` puts `separation` of its mass
/// uniformly on its own contiguous slice of the vocabulary and the rest
/// uniformly on all words. `separation = 1` gives disjoint supports.
pub fn planted_phi(k: usize, vocab_size: usize, separation: f64) -> Matrix<f64> {
    let own = |w: usize| w * k / vocab_size;
    let slice = |t: usize| (0..vocab_size).filter(|&w| own(w) == t).count() as f64;
    Matrix::from_fn(k, vocab_size, |t, w| {
        let base = (1.0 - separation) / vocab_size as f64;
        if own(w) == t {
            base + separation / slice(t)
        } else {
            base
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaSimConfig {
    pub n_docs: usize,
    pub k: usize,
    pub vocab_size: usize,
    /// Symmetric Dirichlet parameter of the document mixtures.
    pub alpha: f64,
    /// Poisson mean document length.
    pub xi: f64,
    /// Used with [`planted_phi`] when `phi` is absent.
    pub separation: f64,
    pub phi: Option<Matrix<f64>>,
    pub seed: u64,
}

impl Default for LdaSimConfig {
    fn default() -> Self {
        Self { n_docs: 1000, k: 4, vocab_size: 200, alpha: 0.1, xi: 12.0, separation: 0.9, phi: None, seed: 0 }
    }
}

impl LdaSimConfig {
    pub fn validate(&self) -> Result<(), SimulateError> {
        if self.k < 1 || self.vocab_size < 1 {
            return Err(SimulateError::Config("k and vocab_size must be positive".into()));
        }
        if !(self.alpha > 0.0) || !(self.xi > 0.0) || !(0.0..=1.0).contains(&self.separation) {
            return Err(SimulateError::Config("need alpha > 0, xi > 0, separation in [0, 1]".into()));
        }
        if let Some(phi) = &self.phi {
            if phi.rows() != self.k || phi.cols() != self.vocab_size {
                return Err(SimulateError::Config(format!(
                    "phi is {}x{}, expected {}x{}",
                    phi.rows(),
                    phi.cols(),
                    self.k,
                    self.vocab_size
                )));
            }
            for t in 0..self.k {
                let row = phi.row(t);
                if row.iter().any(|&p| !(p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(SimulateError::Config(format!("phi row {t} is not a distribution")));
                }
            }
        }
        Ok(())
    }

    pub fn phi(&self) -> Matrix<f64> {
        self.phi.clone().unwrap_or_else(|| planted_phi(self.k, self.vocab_size, self.separation))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCorpus {
    pub phi: Matrix<f64>,
    pub theta: Matrix<f64>,
    pub docs: Vec<Vec<usize>>,
    pub z: Vec<Vec<usize>>,
}

struct TopicSampler {
    words: Vec<WeightedIndex<f64>>,
}

impl TopicSampler {
    fn new(phi: &Matrix<f64>) -> Self {
        Self { words: (0..phi.rows()).map(|t| WeightedIndex::new(phi.row(t)).expect("phi rows are distributions")).collect() }
    }

    /// Draws `N ~ Poisson(xi)` tokens from the mixture `theta`.
    fn document(&self, rng: &mut ChaCha8Rng, theta: &[f64], xi: f64) -> (Vec<usize>, Vec<usize>) {
        let n = Poisson::new(xi).expect("positive rate").sample(rng) as usize;
        let topic = WeightedIndex::new(theta).expect("theta is a distribution");
        let z: Vec<usize> = (0..n).map(|_| topic.sample(rng)).collect();
        let w = z.iter().map(|&t| self.words[t].sample(rng)).collect();
        (w, z)
    }
}

/// Forward simulation of the topic model: per document a mixture from the
/// Dirichlet prior, a Poisson length, then a topic and a word per token.
pub fn simulate_lda_corpus(cfg: &LdaSimConfig) -> Result<SimCorpus, SimulateError> {
    cfg.validate()?;
    let phi = cfg.phi();
    let sampler = TopicSampler::new(&phi);
    let mut theta = Matrix::zeros(cfg.n_docs, cfg.k);
    let mut docs = Vec::with_capacity(cfg.n_docs);
    let mut z = Vec::with_capacity(cfg.n_docs);
    for d in 0..cfg.n_docs {
        let mut rng = rng::stream(cfg.seed, "sim-lda", &[d as u64]);
        let th = sample_dirichlet(&mut rng, &vec![cfg.alpha; cfg.k]);
        let (w, zd) = sampler.document(&mut rng, &th, cfg.xi);
        theta.row_mut(d).copy_from_slice(&th);
        docs.push(w);
        z.push(zd);
    }
    Ok(SimCorpus { phi, theta, docs, z })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum CovariateDist {
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSim {
    pub name: String,
    #[serde(flatten)]
    pub dist: CovariateDist,
}

/// Simulator-only Likert response model: each statement's level is a latent
/// Normal (a shared respondent factor plus noise, shifted per statement) cut
/// at fixed thresholds. No such reverse model is part of the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LikertSim {
    pub statements: Vec<String>,
    pub cutpoints: Vec<f64>,
    pub factor_loading: f64,
    /// Per-statement shifts; drawn in [-0.5, 0.5] when empty.
    pub shifts: Vec<f64>,
}

impl Default for LikertSim {
    fn default() -> Self {
        Self {
            statements: STATEMENTS.iter().map(|s| s.to_string()).collect(),
            cutpoints: vec![-1.2, -0.4, 0.4, 1.2],
            factor_loading: 0.6,
            shifts: Vec::new(),
        }
    }
}

impl LikertSim {
    pub fn levels(&self) -> usize {
        self.cutpoints.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicQuestionSim {
    pub question: QuestionId,
    pub topics: Vec<String>,
    pub vocab_size: usize,
    pub separation: f64,
    /// Symmetric Dirichlet parameter of the respondents' topic proportions.
    pub alpha: f64,
    pub xi: f64,
}

impl TopicQuestionSim {
    fn default_for(question: QuestionId, prefix: &str, k: usize) -> Self {
        Self {
            question,
            topics: (1..=k).map(|t| format!("{prefix}{t}")).collect(),
            vocab_size: 40 * k,
            separation: 0.9,
            alpha: 0.5,
            xi: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_per_version: usize,
    pub versions: Vec<Version>,
    pub k_att: usize,
    pub seed: u64,
    pub alternatives: Vec<String>,
    pub likert: LikertSim,
    pub topics: Vec<TopicQuestionSim>,
    pub covariates: Vec<CovariateSim>,
    /// Known parameters; drawn from the seed when absent (see [`default_truth`]).
    pub truth: Option<ModelParams<f64>>,
    /// Generate open-ended text for rows that carry topic proportions.
    pub generate_text: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_per_version: 1000,
            versions: Version::ALL.to_vec(),
            k_att: 2,
            seed: 0,
            alternatives: vec!["RegularCar".into(), "PrivateAV".into(), "SharedAV".into()],
            likert: LikertSim::default(),
            topics: vec![
                TopicQuestionSim::default_for(QuestionId::PeouOpen, "Top1", 4),
                TopicQuestionSim::default_for(QuestionId::PuOpen, "Top2", 7),
            ],
            covariates: vec![
                CovariateSim { name: "age".into(), dist: CovariateDist::Normal { mean: 0.0, sd: 1.0 } },
                CovariateSim { name: "income".into(), dist: CovariateDist::Normal { mean: 0.0, sd: 1.0 } },
                CovariateSim { name: "male".into(), dist: CovariateDist::Bernoulli { p: 0.5 } },
            ],
            truth: None,
            generate_text: true,
        }
    }
}

impl SimConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, SimulateError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Schema manifest describing the simulated dataset.
    pub fn manifest(&self) -> SchemaManifest {
        let mut columns: Vec<ColumnSpec> =
            self.likert.statements.iter().map(|s| ColumnSpec::likert(s, self.likert.levels())).collect();
        for q in &self.topics {
            for t in &q.topics {
                columns.push(ColumnSpec::topic(t, q.question.as_str(), q.topics.len()));
            }
        }
        for c in &self.covariates {
            let role = match c.dist {
                CovariateDist::Normal { .. } => ColumnRole::Continuous,
                CovariateDist::Bernoulli { .. } => ColumnRole::Indicator,
            };
            columns.push(ColumnSpec::new(&c.name, role));
        }
        SchemaManifest { columns, alternatives: self.alternatives.clone(), standardize_topic_props: false }
    }

    fn likert_width(&self) -> usize {
        self.likert.statements.len() * self.likert.levels()
    }

    fn topic_width(&self) -> usize {
        self.topics.iter().map(|q| q.topics.len()).sum()
    }

    fn head_width(&self, v: Version) -> usize {
        if v == Version::Oe {
            self.topic_width()
        } else {
            self.likert_width()
        }
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        let bad = |m: String| Err(SimulateError::Config(m));
        if self.n_per_version < 2 || self.versions.is_empty() || self.k_att < 1 {
            return bad("need n_per_version >= 2, at least one version, k_att >= 1".into());
        }
        if self.alternatives.len() < 2 {
            return bad("need at least two alternatives".into());
        }
        let needs_likert = self.versions.iter().any(|v| v.has_likert());
        let needs_topics = self.versions.iter().any(|v| v.has_topics());
        if needs_likert && self.likert.statements.is_empty() {
            return bad("Likert versions requested without statements".into());
        }
        if needs_topics && self.topics.is_empty() {
            return bad("open-ended versions requested without topic questions".into());
        }
        if self.likert.cutpoints.windows(2).any(|w| !(w[0] < w[1])) || self.likert.cutpoints.is_empty() {
            return bad("cutpoints must be non-empty and strictly increasing".into());
        }
        if !self.likert.shifts.is_empty() && self.likert.shifts.len() != self.likert.statements.len() {
            return bad("one shift per statement".into());
        }
        if !(0.0..=1.0).contains(&self.likert.factor_loading) {
            return bad("factor_loading must lie in [0, 1]".into());
        }
        for q in &self.topics {
            if q.topics.len() < 2 || q.vocab_size < q.topics.len() || !(q.alpha > 0.0) || !(q.xi > 0.0) {
                return bad(format!("topic question {} is invalid", q.question));
            }
            if !(0.0..=1.0).contains(&q.separation) {
                return bad(format!("separation of {} must lie in [0, 1]", q.question));
            }
        }
        for c in &self.covariates {
            match c.dist {
                CovariateDist::Normal { sd, .. } if !(sd > 0.0) => return bad(format!("{}: sd must be > 0", c.name)),
                CovariateDist::Bernoulli { p } if !(0.0..=1.0).contains(&p) => {
                    return bad(format!("{}: p must lie in [0, 1]", c.name))
                }
                _ => {}
            }
        }
        if let Some(t) = &self.truth {
            let c = self.alternatives.len();
            if t.choice.alpha.len() != c
                || t.choice.beta.rows() != self.covariates.len() + self.k_att
                || t.choice.beta.cols() != c
            {
                return bad("truth choice parameters do not match covariates, k_att and alternatives".into());
            }
            for &v in &self.versions {
                let h = t.head(v).ok_or_else(|| SimulateError::Config(format!("truth has no head for {v}")))?;
                if h.alpha.len() != self.k_att || h.gamma.cols() != self.k_att || h.gamma.rows() != self.head_width(v) {
                    return bad(format!("truth head for {v} has the wrong shape"));
                }
            }
        }
        self.manifest().validate()?;
        Ok(())
    }
}

/// Known parameters drawn from `seed`: head intercepts in [-0.5, 0.5], head
/// loadings and covariate coefficients in [-1, 1], attitude coefficients and
/// choice intercepts in [-0.5, 0.5]. Alternative 0 is the base (all zeros).
pub fn default_truth(cfg: &SimConfig) -> ModelParams<f64> {
    let mut rng = rng::stream(cfg.seed, "sim-truth", &[]);
    let k = cfg.k_att;
    let heads = Version::ALL
        .iter()
        .map(|&v| {
            let p = cfg.head_width(v);
            let alpha = (0..k).map(|_| rng.random_range(-0.5..=0.5)).collect();
            let gamma = Matrix::from_fn(p, k, |_, _| rng.random_range(-1.0..=1.0));
            (v, AttitudeHead { alpha, gamma })
        })
        .collect();
    let (ps, c) = (cfg.covariates.len(), cfg.alternatives.len());
    let alpha = (0..c).map(|j| if j == 0 { 0.0 } else { rng.random_range(-0.5..=0.5) }).collect();
    let beta = Matrix::from_fn(ps + k, c, |r, j| match (r < ps, j) {
        (_, 0) => 0.0,
        (true, _) => rng.random_range(-1.0..=1.0),
        (false, _) => rng.random_range(-0.5..=0.5),
    });
    ModelParams { heads, choice: ChoiceParams { alpha, beta } }
}

/// Everything the survey simulator produced, latents included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSurvey {
    pub records: Vec<SurveyRecord>,
    /// Latent attitudes `Att ~ Normal(head mean, I)`, one row per record.
    pub att: Matrix<f64>,
    pub responses: Vec<RawResponse>,
    pub truth: SimTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub config: SimConfig,
    pub params: ModelParams<f64>,
    pub likert_shifts: Vec<f64>,
    pub topic_phi: Vec<(QuestionId, Matrix<f64>)>,
    pub vocabularies: Vec<(QuestionId, Vec<String>)>,
}

fn likert_shifts(cfg: &SimConfig) -> Vec<f64> {
    if !cfg.likert.shifts.is_empty() {
        return cfg.likert.shifts.clone();
    }
    let mut rng = rng::stream(cfg.seed, "sim-likert-shift", &[]);
    cfg.likert.statements.iter().map(|_| rng.random_range(-0.5..=0.5)).collect()
}

fn question_vocabulary(q_index: usize, cfg: &SimConfig) -> Vec<String> {
    let offset: usize = cfg.topics[..q_index].iter().map(|q| q.vocab_size).sum();
    (0..cfg.topics[q_index].vocab_size).map(|w| pseudo_word(offset + w)).collect()
}

/// Joins generated words with fillers after every second word and pads
/// with fillers to `min_words`.
fn render_text(rng: &mut ChaCha8Rng, words: &[&str], min_words: usize) -> String {
    let mut out: Vec<&str> = Vec::new();
    for (i, w) in words.iter().enumerate() {
        out.push(w);
        if i % 2 == 1 {
            out.push(FILLERS[rng.random_range(0..FILLERS.len())]);
        }
    }
    while out.len() < min_words {
        out.push(FILLERS[rng.random_range(0..FILLERS.len())]);
    }
    out.join(" ")
}

/// Forward simulation of the survey. Rows are in version order (all LK,
/// then LKOE, then OE); each row draws its instrument features, then
/// `Att ~ Normal(alpha_V + gamma_V^T x_V, I)`, then a choice from the softmax
/// of the utilities.
pub fn simulate_survey(cfg: &SimConfig) -> Result<SimSurvey, SimulateError> {
    cfg.validate()?;
    let params = cfg.truth.clone().unwrap_or_else(|| default_truth(cfg));
    let shifts = likert_shifts(cfg);
    let levels = cfg.likert.levels();
    let phis: Vec<Matrix<f64>> = cfg.topics.iter().map(|q| planted_phi(q.topics.len(), q.vocab_size, q.separation)).collect();
    let samplers: Vec<TopicSampler> = phis.iter().map(TopicSampler::new).collect();
    let vocabularies: Vec<Vec<String>> = (0..cfg.topics.len()).map(|q| question_vocabulary(q, cfg)).collect();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let lambda = cfg.likert.factor_loading;

    let n = cfg.n_per_version * cfg.versions.len();
    let mut records = Vec::with_capacity(n);
    let mut att = Matrix::zeros(n, cfg.k_att);
    let mut responses = Vec::new();
    for i in 0..n {
        let version = cfg.versions[i / cfg.n_per_version];
        let mut rng = rng::stream(cfg.seed, "sim-survey", &[i as u64]);
        let respondent_id = format!("R{:05}", i + 1);
        let covariates: Vec<f64> = cfg
            .covariates
            .iter()
            .map(|c| match c.dist {
                CovariateDist::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
                CovariateDist::Bernoulli { p } => f64::from(u8::from(rng.random_bool(p))),
            })
            .collect();
        let likert = version.has_likert().then(|| {
            let f: f64 = unit.sample(&mut rng);
            shifts
                .iter()
                .map(|&s| {
                    let z = lambda * f + (1.0 - lambda * lambda).sqrt() * unit.sample(&mut rng) + s;
                    1 + cfg.likert.cutpoints.iter().filter(|&&c| c < z).count() as u8
                })
                .collect::<Vec<u8>>()
        });
        let topic_props = version.has_topics().then(|| {
            cfg.topics.iter().flat_map(|q| sample_dirichlet(&mut rng, &vec![q.alpha; q.topics.len()])).collect::<Vec<f64>>()
        });

        let x_block: Vec<f64> = match version {
            Version::Oe => topic_props.clone().expect("OE rows carry topics"),
            _ => {
                let lv = likert.as_ref().expect("Likert rows carry levels");
                lv.iter().flat_map(|&l| (1..=levels).map(move |j| f64::from(u8::from(j == usize::from(l))))).collect()
            }
        };
        let head = params.head(version).expect("validated truth");
        let mean = attitude_mean(head, &x_block).expect("validated shapes");
        let a: Vec<f64> = mean.iter().map(|m| m + unit.sample(&mut rng)).collect();
        let u = utilities(&params.choice, &covariates, &a).expect("validated shapes");
        let choice = WeightedIndex::new(softmax(&u)).expect("softmax is a distribution").sample(&mut rng);
        att.row_mut(i).copy_from_slice(&a);

        if cfg.generate_text {
            if let Some(props) = &topic_props {
                let mut off = 0;
                for (q, sim) in cfg.topics.iter().enumerate() {
                    let theta = &props[off..off + sim.topics.len()];
                    off += sim.topics.len();
                    let (w, _) = samplers[q].document(&mut rng, theta, sim.xi);
                    let words: Vec<&str> = w.iter().map(|&w| vocabularies[q][w].as_str()).collect();
                    responses.push(RawResponse {
                        respondent_id: respondent_id.clone(),
                        question_id: sim.question,
                        text: render_text(&mut rng, &words, 8),
                    });
                }
            }
        }
        records.push(SurveyRecord { respondent_id, version, choice, likert, topic_props, covariates });
    }
    let truth = SimTruth {
        config: cfg.clone(),
        params,
        likert_shifts: shifts,
        topic_phi: cfg.topics.iter().zip(phis).map(|(q, p)| (q.question, p)).collect(),
        vocabularies: cfg.topics.iter().zip(vocabularies).map(|(q, v)| (q.question, v)).collect(),
    };
    Ok(SimSurvey { records, att, responses, truth })
}

impl SimSurvey {
    /// Writes `survey.csv`, `schema.json`, `responses.csv` (when text was
    /// generated) and `truth.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>, SimulateError> {
        std::fs::create_dir_all(dir)?;
        let manifest = self.truth.config.manifest();
        let mut written = Vec::new();
        let p = dir.join("survey.csv");
        crate::survey::write_dataset(std::fs::File::create(&p)?, &manifest, &self.records)?;
        written.push(p);
        let p = dir.join("schema.json");
        std::fs::write(&p, serde_json::to_string_pretty(&manifest)?)?;
        written.push(p);
        if !self.responses.is_empty() {
            let p = dir.join("responses.csv");
            crate::corpus::write_responses_csv(&p, &self.responses)?;
            written.push(p);
        }
        let p = dir.join("truth.json");
        std::fs::write(&p, serde_json::to_string_pretty(&self.truth)?)?;
        written.push(p);
        Ok(written)
    }
}

#[cfg(test)]
mod tests;
