//! Cohort-based score normalization.
//!
//! The trial-specific variant selects, once per model, the `n_nearest` cohort
//! vectors closest to the model and takes z-norm statistics over the model's
//! scores against them. At trial time the test vector is scored against the
//! same selection and t-norm statistics come from the `k_top` largest of
//! those scores. Because the selection depends on the model while the top-k
//! depends on the test, the result is not symmetric in (model, test).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::cosine;
use crate::plda::{PldaModel, PldaScorer, PreparedSide, SpeakerModel};
use crate::trials::ScoreSet;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Cohort {
    ids: Vec<String>,
    vectors: Vec<DVector<f64>>,
}

impl Cohort {
    pub fn new(ids: Vec<String>, vectors: Vec<DVector<f64>>) -> Result<Self> {
        if ids.len() != vectors.len() {
            return Err(Error::Shape("cohort: ids and vectors differ in length".into()));
        }
        if ids.len() < 2 {
            return Err(Error::Input("cohort: at least two vectors required".into()));
        }
        if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
            return Err(Error::Input("cohort: ids must be unique".into()));
        }
        let d = vectors[0].len();
        if vectors.iter().any(|v| v.len() != d) {
            return Err(Error::Shape("cohort: vectors differ in dimension".into()));
        }
        Ok(Self { ids, vectors })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortSelection {
    /// Cosine similarity to the model embedding.
    #[default]
    Cosine,
    /// PLDA score against the model.
    PldaScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdMode {
    #[default]
    Population,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnormConfig {
    pub n_nearest: usize,
    pub k_top: usize,
    pub sigma_floor: f64,
    pub selection: CohortSelection,
    pub std_mode: StdMode,
}

impl Default for SnormConfig {
    fn default() -> Self {
        Self {
            n_nearest: 10_000,
            k_top: 5_000,
            sigma_floor: 1e-6,
            selection: CohortSelection::Cosine,
            std_mode: StdMode::Population,
        }
    }
}

impl SnormConfig {
    /// Sizes as fractions of the cohort (at least one vector each).
    pub fn scaled_to(cohort_size: usize, nearest_ratio: f64, top_ratio: f64) -> Self {
        let n_nearest = ((cohort_size as f64 * nearest_ratio).round() as usize).clamp(1, cohort_size);
        let k_top = ((n_nearest as f64 * top_ratio).round() as usize).clamp(1, n_nearest);
        Self {
            n_nearest,
            k_top,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nearest == 0 || self.k_top == 0 || self.k_top > self.n_nearest {
            return Err(Error::Config("snorm: need 0 < k_top <= n_nearest".into()));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::Config("snorm: sigma_floor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelNormStats {
    pub model_id: String,
    /// Selected cohort indices, ascending.
    pub indices: Vec<usize>,
    pub mu_z: f64,
    pub sigma_z: f64,
    pub floored: bool,
}

/// Mean and (floored) standard deviation, summed in iteration order.
fn mean_std(values: &[f64], mode: StdMode, floor: f64) -> (f64, f64, bool) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|x| (x - mean) * (x - mean)).sum();
    let denom = match mode {
        StdMode::Population => n,
        StdMode::Sample => (n - 1.0).max(1.0),
    };
    let sd = (ss / denom).sqrt();
    if sd < floor {
        (mean, floor, true)
    } else {
        (mean, sd, false)
    }
}

/// Indices of the `k` largest values, ties broken by ascending cohort id,
/// returned in ascending index order.
fn top_k(candidates: &[usize], value: impl Fn(usize) -> f64, ids: &[String], k: usize) -> Vec<usize> {
    let mut order = candidates.to_vec();
    if k == 0 {
        return Vec::new();
    }
    if k < order.len() {
        // ids are unique, so this is a strict total order and the selected set is exact
        order.select_nth_unstable_by(k - 1, |&a, &b| {
            value(b)
                .partial_cmp(&value(a))
                .unwrap_or(Ordering::Equal)
                .then_with(|| ids[a].cmp(&ids[b]))
        });
        order.truncate(k);
    }
    order.sort_unstable();
    order
}

/// Normalized score plus whether any sigma hit the floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalized {
    pub score: f64,
    pub floored: bool,
}

fn combine(raw: f64, mu_z: f64, sigma_z: f64, mu_t: f64, sigma_t: f64) -> f64 {
    0.5 * ((raw - mu_z) / sigma_z + (raw - mu_t) / sigma_t)
}

/// Cohort with PLDA-prepared vectors, reusable across models and trials.
pub struct SnormContext<'a> {
    scorer: &'a PldaScorer,
    cohort: &'a Cohort,
    prepared: Vec<PreparedSide>,
    cfg: SnormConfig,
}

impl<'a> SnormContext<'a> {
    pub fn new(scorer: &'a PldaScorer, cohort: &'a Cohort, cfg: &SnormConfig) -> Result<Self> {
        cfg.validate()?;
        let prepared = cohort
            .vectors
            .iter()
            .map(|v| scorer.prepare(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scorer,
            cohort,
            prepared,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &SnormConfig {
        &self.cfg
    }

    /// Scores of `x` (as the model side) against every cohort vector.
    pub fn model_cohort_scores(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        let side = self.scorer.prepare(x)?;
        Ok(self
            .prepared
            .iter()
            .map(|c| self.scorer.score_prepared(&side, c))
            .collect())
    }

    /// Scores of every cohort vector (as the model side) against test `x`.
    pub fn test_cohort_scores(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        let side = self.scorer.prepare(x)?;
        Ok(self
            .prepared
            .iter()
            .map(|c| self.scorer.score_prepared(c, &side))
            .collect())
    }

    /// Nearest-cohort selection and z-norm statistics for one model.
    /// Returns any warning about clamping `n_nearest` to the cohort size.
    pub fn prepare_model_norm(&self, model: &SpeakerModel) -> Result<(ModelNormStats, Option<String>)> {
        let n = self.cohort.len();
        let mut warning = None;
        let n_nearest = if self.cfg.n_nearest > n {
            let msg = format!(
                "snorm: n_nearest {} exceeds cohort size {n}; using the full cohort",
                self.cfg.n_nearest
            );
            log::warn!("{msg}");
            warning = Some(msg);
            n
        } else {
            self.cfg.n_nearest
        };
        let scores = self.model_cohort_scores(&model.embedding)?;
        let similarity: Vec<f64> = match self.cfg.selection {
            CohortSelection::Cosine => self
                .cohort
                .vectors
                .iter()
                .map(|c| cosine(&model.embedding, c))
                .collect(),
            CohortSelection::PldaScore => scores.clone(),
        };
        let all: Vec<usize> = (0..n).collect();
        let indices = top_k(&all, |i| similarity[i], &self.cohort.ids, n_nearest);
        let selected: Vec<f64> = indices.iter().map(|&i| scores[i]).collect();
        let (mu_z, sigma_z, floored) = mean_std(&selected, self.cfg.std_mode, self.cfg.sigma_floor);
        Ok((
            ModelNormStats {
                model_id: model.model_id.clone(),
                indices,
                mu_z,
                sigma_z,
                floored,
            },
            warning,
        ))
    }

    /// Trial-specific s-norm given the test's scores against the whole cohort
    /// (from [`Self::test_cohort_scores`]).
    pub fn trial_specific(&self, raw: f64, stats: &ModelNormStats, test_scores: &[f64]) -> Normalized {
        let k = self.cfg.k_top.min(stats.indices.len());
        let chosen = top_k(&stats.indices, |i| test_scores[i], &self.cohort.ids, k);
        let values: Vec<f64> = chosen.iter().map(|&i| test_scores[i]).collect();
        let (mu_t, sigma_t, floored_t) = mean_std(&values, self.cfg.std_mode, self.cfg.sigma_floor);
        Normalized {
            score: combine(raw, stats.mu_z, stats.sigma_z, mu_t, sigma_t),
            floored: stats.floored || floored_t,
        }
    }

    /// Classic symmetric s-norm with both statistics over the full cohort.
    pub fn classic(&self, raw: f64, model_scores: &[f64], test_scores: &[f64]) -> Normalized {
        let (mu_z, sigma_z, fz) = mean_std(model_scores, self.cfg.std_mode, self.cfg.sigma_floor);
        let (mu_t, sigma_t, ft) = mean_std(test_scores, self.cfg.std_mode, self.cfg.sigma_floor);
        Normalized {
            score: combine(raw, mu_z, sigma_z, mu_t, sigma_t),
            floored: fz || ft,
        }
    }
}

pub fn prepare_model_norm(
    plda: &PldaModel,
    model: &SpeakerModel,
    cohort: &Cohort,
    cfg: &SnormConfig,
) -> Result<ModelNormStats> {
    let scorer = PldaScorer::new(plda)?;
    let ctx = SnormContext::new(&scorer, cohort, cfg)?;
    Ok(ctx.prepare_model_norm(model)?.0)
}

pub fn snorm_trial_specific(
    raw: f64,
    model_stats: &ModelNormStats,
    test: &DVector<f64>,
    plda: &PldaModel,
    cohort: &Cohort,
    cfg: &SnormConfig,
) -> Result<f64> {
    let scorer = PldaScorer::new(plda)?;
    let ctx = SnormContext::new(&scorer, cohort, cfg)?;
    let test_scores = ctx.test_cohort_scores(test)?;
    Ok(ctx.trial_specific(raw, model_stats, &test_scores).score)
}

pub fn snorm_classic(
    raw: f64,
    model_embedding: &DVector<f64>,
    test: &DVector<f64>,
    plda: &PldaModel,
    cohort: &Cohort,
    sigma_floor: f64,
) -> Result<f64> {
    let scorer = PldaScorer::new(plda)?;
    let cfg = SnormConfig {
        n_nearest: cohort.len(),
        k_top: cohort.len(),
        sigma_floor,
        ..SnormConfig::default()
    };
    let ctx = SnormContext::new(&scorer, cohort, &cfg)?;
    let model_scores = ctx.model_cohort_scores(model_embedding)?;
    let test_scores = ctx.test_cohort_scores(test)?;
    Ok(ctx.classic(raw, &model_scores, &test_scores).score)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnormVariant {
    #[default]
    TrialSpecific,
    Classic,
}

#[derive(Debug, Clone, Default)]
pub struct SnormOutcome {
    pub scores: ScoreSet,
    pub model_stats: BTreeMap<String, ModelNormStats>,
    pub floored_trials: usize,
    pub warnings: Vec<String>,
}

/// Normalize a whole score set. Model statistics are computed once per model
/// and test-side cohort scores once per test vector.
pub fn normalize_scores(
    ctx: &SnormContext<'_>,
    raw: &ScoreSet,
    models: &BTreeMap<String, SpeakerModel>,
    tests: &BTreeMap<String, DVector<f64>>,
    variant: SnormVariant,
) -> Result<SnormOutcome> {
    let mut used_models = BTreeSet::new();
    let mut used_tests = BTreeSet::new();
    for (t, _) in raw.iter() {
        used_models.insert(t.model_id.as_str());
        used_tests.insert(t.test_id.as_str());
    }
    let mut unknown: Vec<String> = used_models
        .iter()
        .filter(|m| !models.contains_key(**m))
        .map(|m| format!("model:{m}"))
        .chain(
            used_tests
                .iter()
                .filter(|t| !tests.contains_key(**t))
                .map(|t| format!("test:{t}")),
        )
        .collect();
    if !unknown.is_empty() {
        unknown.sort();
        return Err(Error::UnknownIds(unknown));
    }

    let mut outcome = SnormOutcome::default();
    let model_side: BTreeMap<&str, (ModelNormStats, Vec<f64>)> = used_models
        .par_iter()
        .map(|&m| {
            let model = &models[m];
            let (stats, warning) = ctx.prepare_model_norm(model)?;
            let scores = match variant {
                SnormVariant::Classic => ctx.model_cohort_scores(&model.embedding)?,
                SnormVariant::TrialSpecific => Vec::new(),
            };
            Ok((m, (stats, scores, warning)))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .map(|(m, (stats, scores, warning))| {
            if let Some(w) = warning {
                outcome.warnings.push(w);
            }
            (m, (stats, scores))
        })
        .collect();
    outcome.warnings.dedup();
    let test_side: BTreeMap<&str, Vec<f64>> = used_tests
        .par_iter()
        .map(|&t| Ok((t, ctx.test_cohort_scores(&tests[t])?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();

    for (trial, s) in raw.iter() {
        let (stats, model_scores) = &model_side[trial.model_id.as_str()];
        let test_scores = &test_side[trial.test_id.as_str()];
        let n = match variant {
            SnormVariant::TrialSpecific => ctx.trial_specific(s, stats, test_scores),
            SnormVariant::Classic => ctx.classic(s, model_scores, test_scores),
        };
        if n.floored {
            outcome.floored_trials += 1;
        }
        outcome.scores.insert(trial.clone(), n.score)?;
    }
    outcome.model_stats = model_side
        .into_iter()
        .map(|(m, (stats, _))| (m.to_string(), stats))
        .collect();
    Ok(outcome)
}
