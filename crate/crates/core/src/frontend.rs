//! GMM-UBM training, relevance-MAP mean adaptation, Baum-Welch statistics,
//! total-variability training and i-vector extraction.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{cholesky, spd_log_det};
use crate::{EmTrace, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Frames of one utterance, one column per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet(DMatrix<f64>);

impl FrameSet {
    /// `data` is `dim × n_frames`.
    pub fn new(data: DMatrix<f64>) -> Self {
        Self(data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        Self(DMatrix::from_fn(dim, rows.len(), |k, t| rows[t][k]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.0.ncols()
    }

    pub fn frame(&self, t: usize) -> nalgebra::DVectorView<'_, f64> {
        self.0.column(t)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn concat(&self, other: &FrameSet) -> FrameSet {
        let mut data = DMatrix::zeros(self.dim(), self.n_frames() + other.n_frames());
        data.columns_mut(0, self.n_frames()).copy_from(&self.0);
        data.columns_mut(self.n_frames(), other.n_frames()).copy_from(&other.0);
        FrameSet(data)
    }
}

/// Diagonal-covariance Gaussian mixture. `means` and `variances` are K × D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGmm {
    pub weights: DVector<f64>,
    pub means: DMatrix<f64>,
    pub variances: DMatrix<f64>,
}

impl DiagGmm {
    pub fn new(weights: DVector<f64>, means: DMatrix<f64>, variances: DMatrix<f64>) -> Result<Self> {
        let gmm = Self { weights, means, variances };
        gmm.validate()?;
        Ok(gmm)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.nrows() != k || self.variances.shape() != self.means.shape() {
            return Err(Error::Shape(format!(
                "gmm: {} weights, means {:?}, variances {:?}",
                k,
                self.means.shape(),
                self.variances.shape()
            )));
        }
        if (self.weights.sum() - 1.0).abs() > 1e-10 || self.weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Input("gmm: weights must be a probability vector".into()));
        }
        if self.variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Input("gmm: variances must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    fn log_consts(&self) -> Vec<f64> {
        (0..self.n_components())
            .map(|c| {
                let log_det: f64 = self.variances.row(c).iter().map(|v| v.ln()).sum();
                self.weights[c].ln() - 0.5 * (self.dim() as f64 * LN_2PI + log_det)
            })
            .collect()
    }

    /// Per-frame log joint densities `log w_c + log N(x; m_c, v_c)` into `out`,
    /// returning the frame log-likelihood.
    fn frame_log_joint(&self, consts: &[f64], x: nalgebra::DVectorView<'_, f64>, out: &mut [f64]) -> f64 {
        let d = self.dim();
        let mut max = f64::NEG_INFINITY;
        for (c, slot) in out.iter_mut().enumerate() {
            let mut q = 0.0;
            for k in 0..d {
                let diff = x[k] - self.means[(c, k)];
                q += diff * diff / self.variances[(c, k)];
            }
            *slot = consts[c] - 0.5 * q;
            max = max.max(*slot);
        }
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + out.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
    }

    /// Posterior responsibilities of every component for one frame.
    pub fn responsibilities(&self, x: &DVector<f64>) -> DVector<f64> {
        let consts = self.log_consts();
        let mut buf = vec![0.0; self.n_components()];
        let ll = self.frame_log_joint(&consts, x.as_view(), &mut buf);
        DVector::from_iterator(buf.len(), buf.iter().map(|l| (l - ll).exp()))
    }

    /// Total log-likelihood of a frame collection.
    pub fn log_likelihood(&self, frames: &[FrameSet]) -> f64 {
        let consts = self.log_consts();
        let mut buf = vec![0.0; self.n_components()];
        frames
            .iter()
            .flat_map(|fs| (0..fs.n_frames()).map(move |t| (fs, t)))
            .map(|(fs, t)| self.frame_log_joint(&consts, fs.frame(t), &mut buf))
            .sum()
    }
}

/// Zeroth- and first-order Baum-Welch statistics of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct BwStats {
    /// Occupancy per component, length K.
    pub zeroth: DVector<f64>,
    /// Posterior-weighted frame sums, K × D.
    pub first: DMatrix<f64>,
}

impl BwStats {
    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            zeroth: DVector::zeros(k),
            first: DMatrix::zeros(k, d),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            zeroth: &self.zeroth * factor,
            first: &self.first * factor,
        }
    }

    pub fn total_frames(&self) -> f64 {
        self.zeroth.sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmTrainConfig {
    pub n_components: usize,
    pub n_iters: usize,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub variance_floor: f64,
    /// Seed for the k-means++ style initialization.
    pub seed: u64,
}

impl Default for GmmTrainConfig {
    fn default() -> Self {
        Self {
            n_components: 16,
            n_iters: 10,
            variance_floor: 1e-4,
            seed: 0,
        }
    }
}

struct GlobalMoments {
    n: usize,
    mean: DVector<f64>,
    var: DVector<f64>,
}

fn global_moments(frames: &[FrameSet], d: usize) -> GlobalMoments {
    let mut n = 0usize;
    let mut sum = DVector::zeros(d);
    for fs in frames {
        for t in 0..fs.n_frames() {
            sum += fs.frame(t);
        }
        n += fs.n_frames();
    }
    let mean = sum / n as f64;
    let mut sq = DVector::zeros(d);
    for fs in frames {
        for t in 0..fs.n_frames() {
            let diff = fs.frame(t) - &mean;
            sq += diff.component_mul(&diff);
        }
    }
    GlobalMoments {
        n,
        mean,
        var: sq / n as f64,
    }
}

fn check_frames(frames: &[FrameSet]) -> Result<usize> {
    let total: usize = frames.iter().map(FrameSet::n_frames).sum();
    if total == 0 {
        return Err(Error::Input("empty frame set".into()));
    }
    let d = frames.iter().find(|f| f.n_frames() > 0).map(FrameSet::dim).unwrap();
    if frames.iter().any(|f| f.n_frames() > 0 && f.dim() != d) {
        return Err(Error::Shape("frames with inconsistent dimension".into()));
    }
    Ok(d)
}

/// Accumulators for one EM pass: occupancy, first and (shifted) second moments.
struct GmmAccum {
    n: DVector<f64>,
    f: DMatrix<f64>,
    s: DMatrix<f64>,
    ll: f64,
}

fn gmm_e_step(gmm: &DiagGmm, frames: &[FrameSet]) -> GmmAccum {
    let (k, d) = (gmm.n_components(), gmm.dim());
    let consts = gmm.log_consts();
    let mut acc = GmmAccum {
        n: DVector::zeros(k),
        f: DMatrix::zeros(k, d),
        s: DMatrix::zeros(k, d),
        ll: 0.0,
    };
    let mut buf = vec![0.0; k];
    for fs in frames {
        for t in 0..fs.n_frames() {
            let x = fs.frame(t);
            let ll = gmm.frame_log_joint(&consts, x, &mut buf);
            acc.ll += ll;
            for c in 0..k {
                let g = (buf[c] - ll).exp();
                if g == 0.0 {
                    continue;
                }
                acc.n[c] += g;
                // moments around the current mean keep the variance update stable
                for j in 0..d {
                    let diff = x[j] - gmm.means[(c, j)];
                    acc.f[(c, j)] += g * diff;
                    acc.s[(c, j)] += g * diff * diff;
                }
            }
        }
    }
    acc
}

fn kmeanspp_init(frames: &[FrameSet], k: usize, seed: u64) -> DMatrix<f64> {
    let all: Vec<_> = frames
        .iter()
        .flat_map(|fs| (0..fs.n_frames()).map(move |t| fs.frame(t)))
        .collect();
    let d = all[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = DMatrix::zeros(k, d);
    let first = rng.random_range(0..all.len());
    centers.row_mut(0).copy_from(&all[first].transpose());
    let mut dist: Vec<f64> = all
        .iter()
        .map(|x| (x - centers.row(0).transpose()).norm_squared())
        .collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = all.len() - 1;
            for (i, w) in dist.iter().enumerate() {
                if u < *w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..all.len())
        };
        centers.row_mut(c).copy_from(&all[pick].transpose());
        for (i, x) in all.iter().enumerate() {
            let dd = (x - centers.row(c).transpose()).norm_squared();
            if dd < dist[i] {
                dist[i] = dd;
            }
        }
    }
    centers
}

/// EM training of a diagonal GMM. The trace holds the data log-likelihood
/// before each M-step and after the last one.
pub fn train_gmm_em(frames: &[FrameSet], cfg: &GmmTrainConfig) -> Result<(DiagGmm, EmTrace)> {
    let d = check_frames(frames)?;
    let k = cfg.n_components;
    if k == 0 {
        return Err(Error::Config("gmm: n_components must be positive".into()));
    }
    if !(cfg.variance_floor > 0.0) {
        return Err(Error::Config("gmm: variance_floor must be positive".into()));
    }
    let moments = global_moments(frames, d);
    if moments.n < 10 * k {
        return Err(Error::Input(format!(
            "gmm: {} frames is fewer than 10 per component ({k} components)",
            moments.n
        )));
    }
    let floor = moments.var.map(|v| (v * cfg.variance_floor).max(f64::MIN_POSITIVE));

    let means = if k == 1 {
        DMatrix::from_row_slice(1, d, moments.mean.as_slice())
    } else {
        kmeanspp_init(frames, k, cfg.seed)
    };
    let mut variances = DMatrix::zeros(k, d);
    for c in 0..k {
        for j in 0..d {
            variances[(c, j)] = moments.var[j].max(floor[j]);
        }
    }
    let mut gmm = DiagGmm {
        weights: DVector::from_element(k, 1.0 / k as f64),
        means,
        variances,
    };

    let mut trace = EmTrace::default();
    for iter in 0..cfg.n_iters {
        let acc = gmm_e_step(&gmm, frames);
        trace.objective.push(acc.ll);
        let total: f64 = acc.n.sum();
        let best = acc.n.imax();
        let mut collapsed = Vec::new();
        for c in 0..k {
            if acc.n[c] < 1e-10 * total.max(1.0) {
                collapsed.push(c);
                continue;
            }
            for j in 0..d {
                let shift = acc.f[(c, j)] / acc.n[c];
                gmm.means[(c, j)] += shift;
                let var = acc.s[(c, j)] / acc.n[c] - shift * shift;
                gmm.variances[(c, j)] = var.max(floor[j]);
            }
            gmm.weights[c] = acc.n[c] / total;
        }
        for &c in &collapsed {
            // split the heaviest component in two along its standard deviation
            trace.warn(format!(
                "gmm: component {c} lost all occupancy at iteration {iter}; re-seeded from component {best}"
            ));
            let half = gmm.weights[best] / 2.0;
            gmm.weights[best] = half;
            gmm.weights[c] = half;
            for j in 0..d {
                let sd = gmm.variances[(best, j)].sqrt();
                gmm.means[(c, j)] = gmm.means[(best, j)] + 0.2 * sd;
                gmm.means[(best, j)] -= 0.2 * sd;
                gmm.variances[(c, j)] = gmm.variances[(best, j)];
            }
        }
        let wsum = gmm.weights.sum();
        gmm.weights /= wsum;
    }
    trace.objective.push(gmm.log_likelihood(frames));
    Ok((gmm, trace))
}

/// Relevance-MAP adaptation of the means only:
/// `m̂_c = (n_c·x̄_c + r·m_c) / (n_c + r)`.
pub fn map_adapt_means(ubm: &DiagGmm, frames: &[FrameSet], relevance_factor: f64) -> Result<DiagGmm> {
    ubm.validate()?;
    if !(relevance_factor > 0.0) || !relevance_factor.is_finite() {
        return Err(Error::Config("map: relevance_factor must be positive".into()));
    }
    let mut acc = BwStats::zeros(ubm.n_components(), ubm.dim());
    for fs in frames.iter().filter(|f| f.n_frames() > 0) {
        let s = accumulate_bw_stats(ubm, fs)?;
        acc.zeroth += s.zeroth;
        acc.first += s.first;
    }
    let mut adapted = ubm.clone();
    for c in 0..ubm.n_components() {
        let n = acc.zeroth[c];
        if n == 0.0 {
            continue;
        }
        for j in 0..ubm.dim() {
            adapted.means[(c, j)] =
                (acc.first[(c, j)] + relevance_factor * ubm.means[(c, j)]) / (n + relevance_factor);
        }
    }
    Ok(adapted)
}

/// Zeroth/first-order statistics of one utterance under `gmm`.
pub fn accumulate_bw_stats(gmm: &DiagGmm, frames: &FrameSet) -> Result<BwStats> {
    if frames.n_frames() == 0 {
        return Err(Error::Input("empty utterance".into()));
    }
    if frames.dim() != gmm.dim() {
        return Err(Error::Shape(format!(
            "frame dim {} vs gmm dim {}",
            frames.dim(),
            gmm.dim()
        )));
    }
    let (k, d) = (gmm.n_components(), gmm.dim());
    let consts = gmm.log_consts();
    let mut stats = BwStats::zeros(k, d);
    let mut buf = vec![0.0; k];
    for t in 0..frames.n_frames() {
        let x = frames.frame(t);
        let ll = gmm.frame_log_joint(&consts, x, &mut buf);
        for c in 0..k {
            let g = (buf[c] - ll).exp();
            stats.zeroth[c] += g;
            for j in 0..d {
                stats.first[(c, j)] += g * x[j];
            }
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsPool {
    /// Treat pooled sessions as one long utterance.
    #[default]
    Sum,
    Mean,
}

/// Pool the statistics of several utterances of one speaker.
pub fn pool_stats(stats: &[BwStats], mode: StatsPool) -> Result<BwStats> {
    let first = stats
        .first()
        .ok_or_else(|| Error::Input("pool_stats: empty list".into()))?;
    let mut acc = first.clone();
    for s in &stats[1..] {
        if s.zeroth.len() != acc.zeroth.len() || s.first.shape() != acc.first.shape() {
            return Err(Error::Shape("pool_stats: statistics shapes differ".into()));
        }
        acc.zeroth += &s.zeroth;
        acc.first += &s.first;
    }
    Ok(match mode {
        StatsPool::Sum => acc,
        StatsPool::Mean => acc.scaled(1.0 / stats.len() as f64),
    })
}

/// Total-variability model: `supervector = m + T·w`, `w ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvModel {
    /// (K·D) × R, component blocks of D rows.
    pub t: DMatrix<f64>,
    /// The (adapted) UBM used for alignment, centering and covariances.
    pub ubm: DiagGmm,
}

impl TvModel {
    pub fn new(t: DMatrix<f64>, ubm: DiagGmm) -> Result<Self> {
        let kd = ubm.n_components() * ubm.dim();
        if t.nrows() != kd {
            return Err(Error::Shape(format!("T has {} rows, expected {kd}", t.nrows())));
        }
        if t.ncols() == 0 || t.ncols() > kd {
            return Err(Error::Config(format!("i-vector dimension must be in 1..={kd}")));
        }
        if t.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("T has non-finite entries".into()));
        }
        Ok(Self { t, ubm })
    }

    pub fn rank(&self) -> usize {
        self.t.ncols()
    }

    pub fn extractor(&self) -> Extractor<'_> {
        Extractor::new(self)
    }
}

/// Per-component products cached for repeated extraction.
pub struct Extractor<'a> {
    model: &'a TvModel,
    /// `T_cᵀ Σ_c⁻¹`, R × D per component.
    t_sinv: Vec<DMatrix<f64>>,
    /// `T_cᵀ Σ_c⁻¹ T_c`, R × R per component.
    t_sinv_t: Vec<DMatrix<f64>>,
}

/// Posterior of the latent for one utterance.
pub struct LatentPosterior {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
    pub covariance: DMatrix<f64>,
    /// `Σ_c T_cᵀ Σ_c⁻¹ f̃_c`
    pub linear: DVector<f64>,
}

impl<'a> Extractor<'a> {
    pub fn new(model: &'a TvModel) -> Self {
        let d = model.ubm.dim();
        let mut t_sinv = Vec::with_capacity(model.ubm.n_components());
        let mut t_sinv_t = Vec::with_capacity(model.ubm.n_components());
        for c in 0..model.ubm.n_components() {
            let tc = model.t.rows(c * d, d);
            let mut scaled = tc.transpose();
            for j in 0..d {
                let inv = 1.0 / model.ubm.variances[(c, j)];
                scaled.column_mut(j).scale_mut(inv);
            }
            t_sinv_t.push(&scaled * tc);
            t_sinv.push(scaled);
        }
        Self { model, t_sinv, t_sinv_t }
    }

    pub fn posterior(&self, stats: &BwStats) -> Result<LatentPosterior> {
        let ubm = &self.model.ubm;
        if stats.zeroth.len() != ubm.n_components() || stats.first.ncols() != ubm.dim() {
            return Err(Error::Shape("statistics do not match the extractor's UBM".into()));
        }
        let r = self.model.rank();
        let mut precision = DMatrix::identity(r, r);
        let mut linear = DVector::zeros(r);
        for c in 0..ubm.n_components() {
            let n = stats.zeroth[c];
            if n != 0.0 {
                precision += &self.t_sinv_t[c] * n;
            }
            let centered = stats.first.row(c).transpose() - ubm.means.row(c).transpose() * n;
            linear += &self.t_sinv[c] * centered;
        }
        let precision = crate::linalg::symmetrized(&precision);
        let chol = cholesky(&precision, "i-vector posterior precision")?;
        let mean = chol.solve(&linear);
        let covariance = crate::linalg::symmetrized(&chol.inverse());
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite i-vector".into()));
        }
        Ok(LatentPosterior {
            mean,
            precision,
            covariance,
            linear,
        })
    }

    pub fn extract(&self, stats: &BwStats) -> Result<DVector<f64>> {
        Ok(self.posterior(stats)?.mean)
    }
}

/// Posterior mean `w = (I + Tᵀ Σ⁻¹ N T)⁻¹ Tᵀ Σ⁻¹ f̃`.
pub fn extract_ivector(tv: &TvModel, stats: &BwStats) -> Result<DVector<f64>> {
    tv.extractor().extract(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TvTrainConfig {
    pub rank: usize,
    pub n_iters: usize,
    pub seed: u64,
    /// Scale of the random initialization relative to the UBM standard deviations.
    pub init_scale: f64,
    pub min_divergence: bool,
}

impl Default for TvTrainConfig {
    fn default() -> Self {
        Self {
            rank: 16,
            n_iters: 10,
            seed: 0,
            init_scale: 0.5,
            min_divergence: true,
        }
    }
}

/// Train a total-variability matrix from random initialization.
pub fn train_tv(ubm: &DiagGmm, stats: &[BwStats], cfg: &TvTrainConfig) -> Result<(TvModel, EmTrace)> {
    ubm.validate()?;
    let (k, d) = (ubm.n_components(), ubm.dim());
    if cfg.rank == 0 || cfg.rank > k * d {
        return Err(Error::Config(format!(
            "tv: rank {} must be in 1..={} (K·D)",
            cfg.rank,
            k * d
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut t = DMatrix::zeros(k * d, cfg.rank);
    for c in 0..k {
        for j in 0..d {
            let sd = ubm.variances[(c, j)].sqrt();
            for r in 0..cfg.rank {
                let z: f64 = rng.sample(StandardNormal);
                t[(c * d + j, r)] = z * sd * cfg.init_scale;
            }
        }
    }
    train_tv_from(TvModel::new(t, ubm.clone())?, stats, cfg.n_iters, cfg.min_divergence)
}

/// Continue EM from a given model. An all-zero T is an EM fixed point and is rejected.
pub fn train_tv_from(
    init: TvModel,
    stats: &[BwStats],
    n_iters: usize,
    min_divergence: bool,
) -> Result<(TvModel, EmTrace)> {
    if stats.is_empty() {
        return Err(Error::Input("tv: no statistics".into()));
    }
    if init.t.iter().all(|x| *x == 0.0) {
        return Err(Error::Init("tv: zero T is a fixed point of EM".into()));
    }
    let (k, d, r) = (init.ubm.n_components(), init.ubm.dim(), init.rank());
    let mut model = init;
    let mut trace = EmTrace::default();
    for _ in 0..n_iters {
        let extractor = model.extractor();
        let mut c_acc = vec![DMatrix::<f64>::zeros(d, r); k];
        let mut a_acc = vec![DMatrix::<f64>::zeros(r, r); k];
        let mut h_acc = DMatrix::<f64>::zeros(r, r);
        let mut objective = 0.0;
        for s in stats {
            let post = extractor.posterior(s)?;
            objective += tv_utterance_objective(&post)?;
            let eww = &post.covariance + &post.mean * post.mean.transpose();
            for c in 0..k {
                let n = s.zeroth[c];
                let centered = s.first.row(c).transpose() - model.ubm.means.row(c).transpose() * n;
                c_acc[c] += centered * post.mean.transpose();
                if n != 0.0 {
                    a_acc[c] += &eww * n;
                }
            }
            h_acc += eww;
        }
        trace.objective.push(objective);

        let mut t = DMatrix::zeros(k * d, r);
        for c in 0..k {
            let a = crate::linalg::symmetrized(&a_acc[c]);
            let block = match cholesky(&a, "tv accumulator") {
                Ok(chol) => chol.solve(&c_acc[c].transpose()).transpose(),
                Err(_) => model.t.rows(c * d, d).into_owned(),
            };
            t.rows_mut(c * d, d).copy_from(&block);
        }
        if min_divergence {
            let h = crate::linalg::symmetrized(&(h_acc / stats.len() as f64));
            let chol = cholesky(&h, "tv latent second moment")?;
            t = t * chol.l();
        }
        model = TvModel::new(t, model.ubm)?;
    }
    let extractor = model.extractor();
    let mut objective = 0.0;
    for s in stats {
        objective += tv_utterance_objective(&extractor.posterior(s)?)?;
    }
    trace.objective.push(objective);
    Ok((model, trace))
}

/// T-dependent part of the utterance log-likelihood under fixed alignments:
/// `½ bᵀ L⁻¹ b − ½ log|L|`.
fn tv_utterance_objective(post: &LatentPosterior) -> Result<f64> {
    Ok(0.5 * post.linear.dot(&post.mean) - 0.5 * spd_log_det(&post.precision, "posterior precision")?)
}
