//! Two-subspace PLDA: `x = μ + V·h + U·w + ε` with `ε ~ N(0, diag(σ))`.
//!
//! Training is EM over the joint posterior of the speaker factor and the
//! per-session channel factors. Scoring collapses the channel and residual
//! terms into a within-speaker covariance and evaluates the two-covariance
//! log-likelihood ratio.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{mean_vector, spd_inverse, spd_log_det, sym_eigen_desc, symmetrized};
use crate::precondition::length_normalize;
use crate::trials::{ScoreSet, Trial};
use crate::{EmTrace, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PldaModel {
    pub mu: DVector<f64>,
    /// m × r_spk
    pub v: DMatrix<f64>,
    /// m × r_ch
    pub u: DMatrix<f64>,
    /// Diagonal residual variances.
    pub sigma: DVector<f64>,
}

impl PldaModel {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn between_covariance(&self) -> DMatrix<f64> {
        &self.v * self.v.transpose()
    }

    pub fn within_covariance(&self) -> DMatrix<f64> {
        &self.u * self.u.transpose() + DMatrix::from_diagonal(&self.sigma)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.dim();
        if self.v.nrows() != m || self.u.nrows() != m || self.sigma.len() != m {
            return Err(Error::Shape("plda: parameter shapes disagree".into()));
        }
        if self.sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Numerical("plda: residual variances must be positive".into()));
        }
        Ok(())
    }

    /// Marginal log-likelihood of speaker-grouped data.
    pub fn log_likelihood<S: AsRef<str>>(&self, vectors: &[DVector<f64>], labels: &[S]) -> Result<f64> {
        let groups = group_centered(vectors, labels, &self.mu);
        let cache = EmCache::new(self)?;
        let mut total = 0.0;
        for sessions in groups.values() {
            total += cache.speaker_log_likelihood(sessions)?;
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PldaTrainConfig {
    pub speaker_rank: usize,
    pub channel_rank: usize,
    pub n_iters: usize,
    pub seed: u64,
    pub sigma_floor: f64,
    /// Re-whiten the latent priors after each M-step.
    pub min_divergence: bool,
}

impl Default for PldaTrainConfig {
    fn default() -> Self {
        Self {
            speaker_rank: 200,
            channel_rank: 100,
            n_iters: 10,
            seed: 0,
            sigma_floor: 1e-6,
            min_divergence: true,
        }
    }
}

fn group_centered<S: AsRef<str>>(
    vectors: &[DVector<f64>],
    labels: &[S],
    mu: &DVector<f64>,
) -> BTreeMap<String, Vec<DVector<f64>>> {
    let mut groups: BTreeMap<String, Vec<DVector<f64>>> = BTreeMap::new();
    for (v, l) in vectors.iter().zip(labels) {
        groups.entry(l.as_ref().to_string()).or_default().push(v - mu);
    }
    groups
}

/// Per-iteration quantities shared by all speakers.
struct EmCache {
    m: usize,
    r_spk: usize,
    /// W⁻¹ with W = U·Uᵀ + diag(σ)
    w_inv: DMatrix<f64>,
    log_det_w: f64,
    /// Vᵀ W⁻¹, r_spk × m
    vt_winv: DMatrix<f64>,
    vt_winv_v: DMatrix<f64>,
    /// (I + Uᵀ Σ⁻¹ U)⁻¹
    j_inv: DMatrix<f64>,
    /// J⁻¹ Uᵀ Σ⁻¹, r_ch × m
    k: DMatrix<f64>,
    /// J⁻¹ Uᵀ Σ⁻¹ V, r_ch × r_spk
    g: DMatrix<f64>,
}

impl EmCache {
    fn new(model: &PldaModel) -> Result<Self> {
        model.validate()?;
        let m = model.dim();
        let (r_spk, r_ch) = (model.v.ncols(), model.u.ncols());
        let sigma_inv = model.sigma.map(|s| 1.0 / s);
        let mut ut_sinv = model.u.transpose();
        for j in 0..m {
            ut_sinv.column_mut(j).scale_mut(sigma_inv[j]);
        }
        let jmat = DMatrix::identity(r_ch, r_ch) + &ut_sinv * &model.u;
        let j_inv = spd_inverse(&jmat, "plda channel precision")?;
        let k = &j_inv * &ut_sinv;
        let g = &k * &model.v;
        // Woodbury: W⁻¹ = Σ⁻¹ − Σ⁻¹ U J⁻¹ Uᵀ Σ⁻¹
        let w_inv = symmetrized(&(DMatrix::from_diagonal(&sigma_inv) - ut_sinv.transpose() * &k));
        let log_det_w = model.sigma.iter().map(|s| s.ln()).sum::<f64>()
            + spd_log_det(&jmat, "plda channel precision")?;
        let vt_winv = model.v.transpose() * &w_inv;
        let vt_winv_v = symmetrized(&(&vt_winv * &model.v));
        Ok(Self {
            m,
            r_spk,
            w_inv,
            log_det_w,
            vt_winv,
            vt_winv_v,
            j_inv,
            k,
            g,
        })
    }

    fn speaker_precision(&self, n: usize) -> DMatrix<f64> {
        DMatrix::identity(self.r_spk, self.r_spk) + &self.vt_winv_v * n as f64
    }

    fn speaker_log_likelihood(&self, sessions: &[DVector<f64>]) -> Result<f64> {
        let n = sessions.len();
        let p = self.speaker_precision(n);
        let mut sum = DVector::zeros(self.m);
        let mut quad = 0.0;
        for x in sessions {
            sum += x;
            quad += x.dot(&(&self.w_inv * x));
        }
        let s = &self.vt_winv * sum;
        let p_inv = spd_inverse(&p, "plda speaker precision")?;
        let explained = s.dot(&(&p_inv * &s));
        let log_det = n as f64 * self.log_det_w + spd_log_det(&p, "plda speaker precision")?;
        Ok(-0.5 * (n as f64 * self.m as f64 * LN_2PI + log_det + quad - explained))
    }
}

/// EM training. The trace holds the marginal data log-likelihood before each
/// M-step and after the last one.
pub fn train_plda<S: AsRef<str>>(
    vectors: &[DVector<f64>],
    labels: &[S],
    cfg: &PldaTrainConfig,
) -> Result<(PldaModel, EmTrace)> {
    if vectors.len() != labels.len() || vectors.is_empty() {
        return Err(Error::Shape("plda: vectors and labels must be nonempty and aligned".into()));
    }
    let m = vectors[0].len();
    if cfg.speaker_rank + cfg.channel_rank > m {
        return Err(Error::Config(format!(
            "plda: speaker_rank {} + channel_rank {} exceeds dimension {m}",
            cfg.speaker_rank, cfg.channel_rank
        )));
    }
    let mu = mean_vector(vectors).unwrap();
    let groups = group_centered(vectors, labels, &mu);
    if groups.values().filter(|s| s.len() >= 2).count() < 2 {
        return Err(Error::Input("plda: need at least two speakers with two or more sessions".into()));
    }
    let mut model = init_plda(&groups, mu, cfg);
    let n_total = vectors.len() as f64;
    let r = cfg.speaker_rank + cfg.channel_rank;
    let mut sxx = DVector::<f64>::zeros(m);
    for sessions in groups.values() {
        for x in sessions {
            sxx += x.component_mul(x);
        }
    }

    let mut trace = EmTrace::default();
    for _ in 0..cfg.n_iters {
        let cache = EmCache::new(&model)?;
        let mut rzz = DMatrix::<f64>::zeros(r, r);
        let mut cxz = DMatrix::<f64>::zeros(m, r);
        let mut h_moment = DMatrix::<f64>::zeros(cfg.speaker_rank, cfg.speaker_rank);
        let mut w_moment = DMatrix::<f64>::zeros(cfg.channel_rank, cfg.channel_rank);
        let mut ll = 0.0;
        let mut precision_cache: HashMap<usize, DMatrix<f64>> = HashMap::new();
        for sessions in groups.values() {
            let n = sessions.len();
            ll += cache.speaker_log_likelihood(sessions)?;
            let cov_h = match precision_cache.get(&n) {
                Some(c) => c.clone(),
                None => {
                    let c = spd_inverse(&cache.speaker_precision(n), "plda speaker precision")?;
                    precision_cache.insert(n, c.clone());
                    c
                }
            };
            let mut sum = DVector::zeros(m);
            for x in sessions {
                sum += x;
            }
            let e_h = &cov_h * (&cache.vt_winv * sum);
            let hh = &cov_h + &e_h * e_h.transpose();
            h_moment += &hh;
            let g_cov = -(&cache.g * &cov_h);
            let ww_base = &cache.j_inv + &cache.g * &cov_h * cache.g.transpose();
            for x in sessions {
                let e_w = &cache.k * x - &cache.g * &e_h;
                let mut ez = DVector::zeros(r);
                ez.rows_mut(0, cfg.speaker_rank).copy_from(&e_h);
                ez.rows_mut(cfg.speaker_rank, cfg.channel_rank).copy_from(&e_w);
                let wh = &g_cov + &e_w * e_h.transpose();
                let ww = &ww_base + &e_w * e_w.transpose();
                w_moment += &ww;
                let (rs, rc) = (cfg.speaker_rank, cfg.channel_rank);
                {
                    let mut blk = rzz.view_mut((0, 0), (rs, rs));
                    blk += &hh;
                }
                {
                    let mut blk = rzz.view_mut((rs, 0), (rc, rs));
                    blk += &wh;
                }
                {
                    let mut blk = rzz.view_mut((0, rs), (rs, rc));
                    blk += wh.transpose();
                }
                {
                    let mut blk = rzz.view_mut((rs, rs), (rc, rc));
                    blk += &ww;
                }
                cxz += x * ez.transpose();
            }
        }
        trace.objective.push(ll);

        let rzz = symmetrized(&rzz);
        let f = if r == 0 {
            DMatrix::zeros(m, 0)
        } else {
            let chol = crate::linalg::cholesky(&rzz, "plda latent second moment")?;
            chol.solve(&cxz.transpose()).transpose()
        };
        let explained = (&f * cxz.transpose()).diagonal();
        let sigma = DVector::from_iterator(
            m,
            (0..m).map(|j| ((sxx[j] - explained[j]) / n_total).max(cfg.sigma_floor)),
        );
        let mut v = f.columns(0, cfg.speaker_rank).into_owned();
        let mut u = f.columns(cfg.speaker_rank, cfg.channel_rank).into_owned();
        if cfg.min_divergence {
            let n_spk = groups.len() as f64;
            if cfg.speaker_rank > 0 {
                let chol = crate::linalg::cholesky(&symmetrized(&(h_moment / n_spk)), "plda speaker moment")?;
                v = v * chol.l();
            }
            if cfg.channel_rank > 0 {
                let chol = crate::linalg::cholesky(&symmetrized(&(w_moment / n_total)), "plda channel moment")?;
                u = u * chol.l();
            }
        }
        model = PldaModel {
            mu: model.mu,
            v,
            u,
            sigma,
        };
    }
    let cache = EmCache::new(&model)?;
    let mut ll = 0.0;
    for sessions in groups.values() {
        ll += cache.speaker_log_likelihood(sessions)?;
    }
    trace.objective.push(ll);
    Ok((model, trace))
}

/// Initialize from the leading eigenvectors of the between- and within-speaker
/// scatter, with a small seeded perturbation.
fn init_plda(groups: &BTreeMap<String, Vec<DVector<f64>>>, mu: DVector<f64>, cfg: &PldaTrainConfig) -> PldaModel {
    let m = mu.len();
    let mut between = DMatrix::zeros(m, m);
    let mut within = DMatrix::zeros(m, m);
    let mut n = 0usize;
    for sessions in groups.values() {
        let mean = mean_vector(sessions).unwrap();
        between += &mean * mean.transpose();
        for x in sessions {
            let d = x - &mean;
            within += &d * d.transpose();
        }
        n += sessions.len();
    }
    let between = between / groups.len() as f64;
    let within = within / n as f64;
    let (bv, be) = sym_eigen_desc(&between);
    let (wv, we) = sym_eigen_desc(&within);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut factor = |vals: &DVector<f64>, vecs: &DMatrix<f64>, rank: usize| {
        let mut out = DMatrix::zeros(m, rank);
        for j in 0..rank {
            let scale = vals[j].max(1e-12).sqrt();
            for i in 0..m {
                let jitter: f64 = rng.sample(StandardNormal);
                out[(i, j)] = vecs[(i, j)] * scale + 1e-3 * scale * jitter;
            }
        }
        out
    };
    let v = factor(&bv, &be, cfg.speaker_rank);
    let u = factor(&wv, &we, cfg.channel_rank);
    let residual = (within.diagonal() - (&u * u.transpose()).diagonal()).map(|s| s.abs());
    let mean_res = within.diagonal().mean().max(cfg.sigma_floor);
    let sigma = residual.map(|s| s.max(0.1 * mean_res).max(cfg.sigma_floor));
    PldaModel { mu, v, u, sigma }
}

/// An enrolled speaker: the (re-normalized) average of its enrollment vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerModel {
    pub model_id: String,
    pub embedding: DVector<f64>,
    pub n_sessions: usize,
}

/// Enroll by i-vector averaging followed by length normalization.
pub fn enroll(model_id: &str, vectors: &[DVector<f64>]) -> Result<SpeakerModel> {
    enroll_with(model_id, vectors, true)
}

pub fn enroll_with(model_id: &str, vectors: &[DVector<f64>], renormalize: bool) -> Result<SpeakerModel> {
    let mean = mean_vector(vectors)
        .ok_or_else(|| Error::Input(format!("enroll: no vectors for model {model_id}")))?;
    let embedding = if vectors.len() == 1 {
        vectors[0].clone()
    } else if renormalize {
        length_normalize(&mean)?
    } else {
        mean
    };
    Ok(SpeakerModel {
        model_id: model_id.to_string(),
        embedding,
        n_sessions: vectors.len(),
    })
}

/// Precomputed two-covariance LLR:
/// `s(e, t) = ½ ẽᵀQẽ + ½ t̃ᵀQt̃ + ẽᵀΛt̃ + k` with `ẽ = e − μ`.
#[derive(Debug, Clone)]
pub struct PldaScorer {
    mu: DVector<f64>,
    q: DMatrix<f64>,
    lambda: DMatrix<f64>,
    k: f64,
}

/// One side of a trial with its cached products.
#[derive(Debug, Clone)]
pub struct PreparedSide {
    /// `Λ·x̃`
    lx: DVector<f64>,
    /// `½ x̃ᵀQx̃`
    half_quad: f64,
    centered: DVector<f64>,
}

impl PldaScorer {
    pub fn new(model: &PldaModel) -> Result<Self> {
        model.validate()?;
        let b = model.between_covariance();
        let t = &b + model.within_covariance();
        let t_inv = spd_inverse(&t, "plda total covariance")?;
        let schur = symmetrized(&(&t - &b * &t_inv * &b));
        let p1 = spd_inverse(&schur, "plda conditional covariance")?;
        let q = symmetrized(&(&t_inv - &p1));
        let lambda = symmetrized(&(&t_inv * &b * &p1));
        let k = 0.5 * spd_log_det(&t, "plda total covariance")?
            - 0.5 * spd_log_det(&schur, "plda conditional covariance")?;
        Ok(Self {
            mu: model.mu.clone(),
            q,
            lambda,
            k,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn prepare(&self, x: &DVector<f64>) -> Result<PreparedSide> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "plda: vector of dim {} vs model dim {}",
                x.len(),
                self.dim()
            )));
        }
        let centered = x - &self.mu;
        let lx = &self.lambda * &centered;
        let half_quad = 0.5 * centered.dot(&(&self.q * &centered));
        Ok(PreparedSide {
            lx,
            half_quad,
            centered,
        })
    }

    pub fn score_prepared(&self, e: &PreparedSide, t: &PreparedSide) -> f64 {
        e.half_quad + t.half_quad + e.lx.dot(&t.centered) + self.k
    }

    pub fn score(&self, e: &DVector<f64>, t: &DVector<f64>) -> Result<f64> {
        let s = self.score_prepared(&self.prepare(e)?, &self.prepare(t)?);
        if !s.is_finite() {
            return Err(Error::Numerical("non-finite PLDA score".into()));
        }
        Ok(s)
    }
}

/// Verification LLR of a test vector against an enrolled model.
pub fn score_llr(plda: &PldaModel, model: &SpeakerModel, test: &DVector<f64>) -> Result<f64> {
    PldaScorer::new(plda)?.score(&model.embedding, test)
}

pub fn cosine_score(model: &SpeakerModel, test: &DVector<f64>) -> f64 {
    crate::linalg::cosine(&model.embedding, test)
}

/// Score every trial. Unknown ids abort with the full list; duplicate trials
/// are rejected. With `parallel`, trials are scored on the rayon pool with
/// identical results.
pub fn score_trials(
    scorer: &PldaScorer,
    models: &BTreeMap<String, SpeakerModel>,
    tests: &BTreeMap<String, DVector<f64>>,
    trials: &[Trial],
    parallel: bool,
) -> Result<ScoreSet> {
    let mut unknown: Vec<String> = Vec::new();
    for t in trials {
        if !models.contains_key(&t.model_id) {
            unknown.push(format!("model:{}", t.model_id));
        }
        if !tests.contains_key(&t.test_id) {
            unknown.push(format!("test:{}", t.test_id));
        }
    }
    if !unknown.is_empty() {
        unknown.sort();
        unknown.dedup();
        return Err(Error::UnknownIds(unknown));
    }
    let prepared_models = models
        .iter()
        .map(|(id, m)| Ok((id.as_str(), scorer.prepare(&m.embedding)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let prepared_tests = tests
        .iter()
        .map(|(id, v)| Ok((id.as_str(), scorer.prepare(v)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let score_one = |t: &Trial| {
        scorer.score_prepared(
            &prepared_models[t.model_id.as_str()],
            &prepared_tests[t.test_id.as_str()],
        )
    };
    let scores: Vec<f64> = if parallel {
        trials.par_iter().map(score_one).collect()
    } else {
        trials.iter().map(score_one).collect()
    };
    let mut out = ScoreSet::new();
    for (t, s) in trials.iter().zip(scores) {
        out.insert(t.clone(), s)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_model(v: f64, u: f64, s: f64) -> PldaModel {
        PldaModel {
            mu: DVector::from_element(1, 0.0),
            v: DMatrix::from_element(1, 1, v),
            u: DMatrix::from_element(1, 1, u),
            sigma: DVector::from_element(1, s),
        }
    }

    #[test]
    fn zero_speaker_loading_gives_zero_llr() {
        let mut model = scalar_model(0.0, 0.7, 0.4);
        model.v = DMatrix::zeros(1, 1);
        let scorer = PldaScorer::new(&model).unwrap();
        for (e, t) in [(0.3, -1.2), (2.0, 2.0), (-0.5, 0.1)] {
            let s = scorer
                .score(&DVector::from_element(1, e), &DVector::from_element(1, t))
                .unwrap();
            assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn enrollment_examples() {
        let x = DVector::from_vec(vec![0.6, 0.8]);
        let single = enroll("m", std::slice::from_ref(&x)).unwrap();
        assert_eq!(single.embedding, x);
        assert_eq!(single.n_sessions, 1);
        let triple = enroll("m", &[x.clone(), x.clone(), x.clone()]).unwrap();
        assert!((triple.embedding - &x).amax() < 1e-15);
        assert_eq!(triple.n_sessions, 3);
        assert!(matches!(enroll("m", &[]), Err(Error::Input(_))));
    }

    #[test]
    fn rank_too_large_rejected() {
        let vectors = vec![DVector::from_element(2, 0.0); 4];
        let labels = ["a", "a", "b", "b"];
        let cfg = PldaTrainConfig { speaker_rank: 2, channel_rank: 1, ..Default::default() };
        assert!(matches!(train_plda(&vectors, &labels, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn trial_scoring_errors() {
        let scorer = PldaScorer::new(&scalar_model(1.0, 0.5, 0.2)).unwrap();
        let models = BTreeMap::from([(
            "m".to_string(),
            SpeakerModel { model_id: "m".into(), embedding: DVector::from_element(1, 0.5), n_sessions: 1 },
        )]);
        let tests = BTreeMap::from([("t".to_string(), DVector::from_element(1, 0.1))]);
        assert!(score_trials(&scorer, &models, &tests, &[], false).unwrap().is_empty());
        let dup = vec![Trial::new("m", "t"), Trial::new("m", "t")];
        assert!(matches!(
            score_trials(&scorer, &models, &tests, &dup, false),
            Err(Error::DuplicateTrial(..))
        ));
        let unknown = vec![Trial::new("x", "t"), Trial::new("m", "y")];
        match score_trials(&scorer, &models, &tests, &unknown, false) {
            Err(Error::UnknownIds(ids)) => assert_eq!(ids, vec!["model:x", "test:y"]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
