//! Linear logistic-regression fusion and calibration.
//!
//! The fused score `w·s + b` is trained as a log-likelihood ratio under the
//! prior-weighted cross-entropy
//!
//! ```text
//! L(w, b) = π/N_t Σ_tar softplus(-(f_i + logit π)) + (1-π)/N_n Σ_non softplus(f_j + logit π)
//! ```
//!
//! and minimized with damped Newton steps and a backtracking line search.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::trials::{ScoreSet, Trial, TrialKey};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub weights: Vec<f64>,
    pub offset: f64,
    pub prior: f64,
}

impl FusionModel {
    pub fn identity(n_systems: usize, prior: f64) -> Self {
        Self {
            weights: vec![1.0; n_systems],
            offset: 0.0,
            prior,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.weights.iter().chain([&self.offset]).any(|x| !x.is_finite()) {
            return Err(Error::Numerical("fusion: non-finite parameters".into()));
        }
        Ok(())
    }
}

/// Scores of several systems over a common ordered trial list.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub trials: Vec<Trial>,
    /// `n_trials × n_systems`.
    pub values: DMatrix<f64>,
}

impl ScoreMatrix {
    pub fn new(trials: Vec<Trial>, values: DMatrix<f64>) -> Result<Self> {
        if trials.len() != values.nrows() {
            return Err(Error::Shape(format!(
                "score matrix: {} trials but {} rows",
                trials.len(),
                values.nrows()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("score matrix: non-finite score".into()));
        }
        Ok(Self { trials, values })
    }

    /// Columns in the order given; all sets must cover the same trials.
    /// Rows follow the sorted trial order.
    pub fn from_score_sets(sets: &[&ScoreSet]) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::Input("score matrix: no systems".into()))?;
        for s in &sets[1..] {
            first.check_same_trials(s)?;
        }
        let trials: Vec<Trial> = first.iter().map(|(t, _)| t.clone()).collect();
        let values = DMatrix::from_fn(trials.len(), sets.len(), |i, j| {
            sets[j].get(&trials[i]).expect("checked same trials")
        });
        Self::new(trials, values)
    }

    pub fn n_systems(&self) -> usize {
        self.values.ncols()
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub prior: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            prior: 0.0075,
            max_iters: 100,
            grad_tol: 1e-9,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prior > 0.0 && self.prior < 1.0) {
            return Err(Error::Config(format!("fusion: prior {} outside (0, 1)", self.prior)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("fusion: max_iters must be positive".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config("fusion: grad_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusionTrace {
    /// Loss at the start and after every accepted step.
    pub loss: Vec<f64>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct Problem {
    /// Rows `[s_1 .. s_k, 1]`.
    z: DMatrix<f64>,
    /// +1 target, -1 nontarget.
    sign: Vec<f64>,
    weight: Vec<f64>,
    offset: f64,
}

impl Problem {
    fn new(scores: &ScoreMatrix, key: &TrialKey, prior: f64) -> Result<Self> {
        let labels: BTreeMap<&Trial, bool> = key.labels();
        let mut missing = Vec::new();
        let is_target: Vec<bool> = scores
            .trials
            .iter()
            .map(|t| match labels.get(t) {
                Some(&l) => l,
                None => {
                    missing.push(t.pair());
                    false
                }
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingTrials(missing));
        }
        let n_tar = is_target.iter().filter(|&&x| x).count();
        let n_non = is_target.len() - n_tar;
        if n_tar == 0 || n_non == 0 {
            return Err(Error::Input("fusion: need both target and nontarget trials".into()));
        }
        let k = scores.n_systems();
        let n = scores.len();
        let z = DMatrix::from_fn(n, k + 1, |i, j| if j < k { scores.values[(i, j)] } else { 1.0 });
        let sign = is_target.iter().map(|&t| if t { 1.0 } else { -1.0 }).collect();
        let weight = is_target
            .iter()
            .map(|&t| if t { prior / n_tar as f64 } else { (1.0 - prior) / n_non as f64 })
            .collect();
        Ok(Self {
            z,
            sign,
            weight,
            offset: (prior / (1.0 - prior)).ln(),
        })
    }

    fn margins(&self, theta: &DVector<f64>) -> DVector<f64> {
        let f = &self.z * theta;
        DVector::from_fn(f.len(), |i, _| self.sign[i] * (f[i] + self.offset))
    }

    fn loss(&self, theta: &DVector<f64>) -> f64 {
        self.margins(theta)
            .iter()
            .zip(&self.weight)
            .map(|(m, w)| w * softplus(-m))
            .sum()
    }

    fn gradient_hessian(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.margins(theta);
        let p = self.z.ncols();
        let mut g = DVector::zeros(p);
        let mut h = DMatrix::zeros(p, p);
        for i in 0..m.len() {
            let s = sigmoid(-m[i]);
            let row = self.z.row(i).transpose();
            g.axpy(-self.weight[i] * self.sign[i] * s, &row, 1.0);
            h.ger(self.weight[i] * s * (1.0 - s), &row, &row, 1.0);
        }
        (g, h)
    }

    fn separable(&self, theta: &DVector<f64>) -> bool {
        let f = &self.z * theta;
        let min_tar = (0..f.len()).filter(|&i| self.sign[i] > 0.0).map(|i| f[i]).fold(f64::INFINITY, f64::min);
        let max_non = (0..f.len()).filter(|&i| self.sign[i] < 0.0).map(|i| f[i]).fold(f64::NEG_INFINITY, f64::max);
        min_tar > max_non
    }
}

/// Newton direction; the Hessian gets a growing ridge if it is singular.
fn newton_step(g: &DVector<f64>, h: &DMatrix<f64>) -> Result<DVector<f64>> {
    let p = g.len();
    let scale = (h.trace() / p as f64).max(f64::MIN_POSITIVE);
    let mut ridge = 0.0;
    for _ in 0..30 {
        let damped = h + DMatrix::identity(p, p) * ridge;
        if let Some(chol) = damped.cholesky() {
            return Ok(-chol.solve(g));
        }
        ridge = if ridge == 0.0 { 1e-12 * scale } else { ridge * 10.0 };
    }
    Err(Error::Numerical("fusion: Hessian could not be regularized".into()))
}

pub fn train_fusion(scores: &ScoreMatrix, key: &TrialKey, cfg: &FusionConfig) -> Result<(FusionModel, FusionTrace)> {
    let init = FusionModel {
        weights: vec![0.0; scores.n_systems()],
        offset: 0.0,
        prior: cfg.prior,
    };
    train_fusion_from(&init, scores, key, cfg)
}

pub fn train_fusion_from(
    init: &FusionModel,
    scores: &ScoreMatrix,
    key: &TrialKey,
    cfg: &FusionConfig,
) -> Result<(FusionModel, FusionTrace)> {
    cfg.validate()?;
    init.validate()?;
    if scores.n_systems() == 0 {
        return Err(Error::Input("fusion: no systems".into()));
    }
    if init.weights.len() != scores.n_systems() {
        return Err(Error::Shape(format!(
            "fusion: initial model has {} weights for {} systems",
            init.weights.len(),
            scores.n_systems()
        )));
    }
    let problem = Problem::new(scores, key, cfg.prior)?;
    let k = scores.n_systems();
    let mut theta = DVector::from_fn(k + 1, |i, _| if i < k { init.weights[i] } else { init.offset });
    let mut loss = problem.loss(&theta);
    let mut trace = FusionTrace {
        loss: vec![loss],
        ..Default::default()
    };

    for _ in 0..cfg.max_iters {
        let (g, h) = problem.gradient_hessian(&theta);
        if g.amax() < cfg.grad_tol {
            trace.converged = true;
            break;
        }
        let step = newton_step(&g, &h)?;
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &theta + &step * t;
            let l = problem.loss(&cand);
            if l <= loss + 1e-4 * t * slope {
                accepted = Some((cand, l));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, l)) => {
                theta = cand;
                loss = l;
                trace.loss.push(loss);
            }
            None => {
                // No further decrease representable in floating point.
                trace.converged = true;
                break;
            }
        }
    }
    if !trace.converged {
        let (g, _) = problem.gradient_hessian(&theta);
        trace.converged = g.amax() < cfg.grad_tol;
    }
    if !trace.converged {
        let msg = format!("fusion: stopped at the iteration cap ({})", cfg.max_iters);
        log::warn!("{msg}");
        trace.warnings.push(msg);
    }
    if problem.separable(&theta) {
        let msg = "fusion: training trials are perfectly separable; weights are limited only by the stopping rule"
            .to_string();
        log::warn!("{msg}");
        trace.warnings.push(msg);
    }
    let model = FusionModel {
        weights: theta.rows(0, k).iter().copied().collect(),
        offset: theta[k],
        prior: cfg.prior,
    };
    model.validate()?;
    Ok((model, trace))
}

/// Prior-weighted cross-entropy of a model on labeled trials.
pub fn fusion_loss(model: &FusionModel, scores: &ScoreMatrix, key: &TrialKey) -> Result<f64> {
    if model.weights.len() != scores.n_systems() {
        return Err(Error::Shape("fusion: weight count does not match systems".into()));
    }
    let problem = Problem::new(scores, key, model.prior)?;
    let theta = DVector::from_iterator(
        model.weights.len() + 1,
        model.weights.iter().copied().chain([model.offset]),
    );
    Ok(problem.loss(&theta))
}

pub fn apply_fusion(scores: &ScoreMatrix, model: &FusionModel) -> Result<ScoreSet> {
    if model.weights.len() != scores.n_systems() {
        return Err(Error::Shape(format!(
            "fusion: model has {} weights but scores have {} systems",
            model.weights.len(),
            scores.n_systems()
        )));
    }
    let mut out = ScoreSet::new();
    for (i, trial) in scores.trials.iter().enumerate() {
        let mut s = model.offset;
        for (j, w) in model.weights.iter().enumerate() {
            s += w * scores.values[(i, j)];
        }
        out.insert(trial.clone(), s)?;
    }
    Ok(out)
}

/// Per-trial sum of two score sets over identical trials.
pub fn sum_systems(a: &ScoreSet, b: &ScoreSet) -> Result<ScoreSet> {
    a.check_same_trials(b)?;
    let mut out = ScoreSet::new();
    for (t, s) in a.iter() {
        out.insert(t.clone(), s + b.get(t).expect("checked same trials"))?;
    }
    Ok(out)
}
