//! In-memory back-end recipe for one system: preconditioning, PLDA, enrollment,
//! scoring and s-norm over a split synthetic corpus.

use std::collections::{BTreeMap, BTreeSet};

use ivec_core::plda::{enroll_with, score_trials, train_plda, PldaModel, PldaScorer, PldaTrainConfig, SpeakerModel};
use ivec_core::precondition::{fit_chain, ChainConfig, ChainData, PrecondChain};
use ivec_core::scorenorm::{normalize_scores, Cohort, CohortSelection, SnormConfig, SnormContext, SnormVariant, StdMode};
use ivec_core::synth::{LabeledIvector, Partition, Split, TrialList};
use ivec_core::{Error, Result, ScoreSet, Trial, TrialKey};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnormSettings {
    pub variant: SnormVariant,
    /// Absolute sizes; when absent they follow the ratios below.
    pub n_nearest: Option<usize>,
    pub k_top: Option<usize>,
    pub nearest_ratio: f64,
    pub top_ratio: f64,
    pub sigma_floor: f64,
    pub selection: CohortSelection,
    pub std_mode: StdMode,
}

impl Default for SnormSettings {
    fn default() -> Self {
        Self {
            variant: SnormVariant::TrialSpecific,
            n_nearest: None,
            k_top: None,
            nearest_ratio: 1.0,
            top_ratio: 0.5,
            sigma_floor: 1e-6,
            selection: CohortSelection::Cosine,
            std_mode: StdMode::Population,
        }
    }
}

impl SnormSettings {
    pub fn validate(&self) -> Result<()> {
        let ratio_ok = |r: f64| r.is_finite() && r > 0.0 && r <= 1.0;
        if !ratio_ok(self.nearest_ratio) || !ratio_ok(self.top_ratio) {
            return Err(Error::Config("snorm: ratios must be in (0, 1]".into()));
        }
        if self.n_nearest == Some(0) || self.k_top == Some(0) {
            return Err(Error::Config("snorm: n_nearest and k_top must be positive".into()));
        }
        if let (Some(n), Some(k)) = (self.n_nearest, self.k_top) {
            if k > n {
                return Err(Error::Config("snorm: k_top must not exceed n_nearest".into()));
            }
        }
        if !(self.sigma_floor > 0.0) || !self.sigma_floor.is_finite() {
            return Err(Error::Config("snorm: sigma_floor must be positive".into()));
        }
        Ok(())
    }

    /// Concrete sizes for a cohort. Returns a warning when the configured
    /// sizes exceed the cohort.
    pub fn resolve(&self, cohort_size: usize) -> (SnormConfig, Option<String>) {
        let scaled = SnormConfig::scaled_to(cohort_size, self.nearest_ratio, self.top_ratio);
        let mut n = self.n_nearest.unwrap_or(scaled.n_nearest);
        let mut warning = None;
        if n > cohort_size {
            warning = Some(format!("snorm: n_nearest {n} clamped to cohort size {cohort_size}"));
            n = cohort_size;
        }
        let k_wanted = self
            .k_top
            .unwrap_or_else(|| ((n as f64 * self.top_ratio).round() as usize).max(1));
        let k = if let (Some(_), Some(n_cfg)) = (self.k_top, self.n_nearest) {
            // keep the configured proportion when n was clamped
            let ratio = k_wanted as f64 / n_cfg as f64;
            ((n as f64 * ratio).round() as usize).clamp(1, n)
        } else {
            k_wanted.clamp(1, n)
        };
        (
            SnormConfig {
                n_nearest: n,
                k_top: k,
                sigma_floor: self.sigma_floor,
                selection: self.selection,
                std_mode: self.std_mode,
            },
            warning,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub chain: ChainConfig,
    pub plda: PldaTrainConfig,
    pub use_snorm: bool,
    pub snorm: SnormSettings,
    /// Re-normalize averaged enrollment vectors.
    pub enroll_renormalize: bool,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            chain: ChainConfig::default(),
            plda: PldaTrainConfig::default(),
            use_snorm: true,
            snorm: SnormSettings::default(),
            enroll_renormalize: true,
        }
    }
}

/// Which labeled populations train the back-end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingSet {
    /// Primary training languages only.
    Primary,
    /// Primary data plus the back-end half of the labeled dev speakers.
    PrimaryAndDev,
}

/// The dev speakers split into a half that may train the back-end and a
/// disjoint half whose trials train calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct DevRoles {
    pub backend_speakers: BTreeSet<String>,
    pub calibration: TrialList,
}

pub fn dev_roles(corpus: &[LabeledIvector], dev: &TrialList) -> Result<DevRoles> {
    let speakers: Vec<&String> = dev.model_speakers.values().collect();
    let half = speakers.len() / 2;
    let backend_speakers: BTreeSet<String> = speakers[..half].iter().map(|s| s.to_string()).collect();
    let speaker_of: BTreeMap<&str, &str> = corpus
        .iter()
        .filter_map(|u| u.speaker_id.as_deref().map(|s| (u.utt_id.as_str(), s)))
        .collect();
    let keep_test = |utt: &str| {
        speaker_of
            .get(utt)
            .is_some_and(|s| !backend_speakers.contains(*s))
    };
    let calibration = TrialList {
        enrollment: dev
            .enrollment
            .iter()
            .filter(|(m, _)| !backend_speakers.contains(&dev.model_speakers[*m]))
            .map(|(m, e)| (m.clone(), e.clone()))
            .collect(),
        model_speakers: dev
            .model_speakers
            .iter()
            .filter(|(_, s)| !backend_speakers.contains(*s))
            .map(|(m, s)| (m.clone(), s.clone()))
            .collect(),
        test_utts: dev.test_utts.iter().filter(|u| keep_test(u)).cloned().collect(),
        key: dev.key.filtered(|e| {
            !backend_speakers.contains(&dev.model_speakers[&e.trial.model_id]) && keep_test(&e.trial.test_id)
        }),
    };
    Ok(DevRoles {
        backend_speakers,
        calibration,
    })
}

/// Training populations drawn from a labeled corpus.
pub struct Populations {
    pub nap: (Vec<DVector<f64>>, Vec<String>),
    pub center: Vec<DVector<f64>>,
    pub speakers: (Vec<DVector<f64>>, Vec<String>),
    pub cohort: (Vec<String>, Vec<DVector<f64>>),
}

/// NAP classes are languages for labeled data and the partition name for the
/// unlabeled clusters. Centering and the s-norm cohort use the unlabeled data,
/// falling back to the speaker-labeled data when none exists.
pub fn populations(corpus: &[LabeledIvector], roles: &DevRoles, set: TrainingSet) -> Result<Populations> {
    let mut p = Populations {
        nap: (Vec::new(), Vec::new()),
        center: Vec::new(),
        speakers: (Vec::new(), Vec::new()),
        cohort: (Vec::new(), Vec::new()),
    };
    for u in corpus {
        let in_training = match u.partition {
            Partition::PrimaryTrain => true,
            Partition::DevLabeled => {
                set == TrainingSet::PrimaryAndDev
                    && u.speaker_id.as_ref().is_some_and(|s| roles.backend_speakers.contains(s))
            }
            _ => false,
        };
        if in_training {
            let spk = u
                .speaker_id
                .clone()
                .ok_or_else(|| Error::Input(format!("training utterance {} has no speaker", u.utt_id)))?;
            let lang = u
                .language_id
                .clone()
                .ok_or_else(|| Error::Input(format!("training utterance {} has no language", u.utt_id)))?;
            p.nap.0.push(u.vector.clone());
            p.nap.1.push(lang);
            p.speakers.0.push(u.vector.clone());
            p.speakers.1.push(spk);
        } else if u.partition.is_unlabeled() {
            p.nap.0.push(u.vector.clone());
            p.nap.1.push(u.partition.as_str().to_string());
            p.center.push(u.vector.clone());
            p.cohort.0.push(u.utt_id.clone());
            p.cohort.1.push(u.vector.clone());
        }
    }
    if p.speakers.0.is_empty() {
        return Err(Error::Input("no speaker-labeled training data".into()));
    }
    if p.center.is_empty() {
        p.center = p.speakers.0.clone();
    }
    Ok(p)
}

/// Trained back-end artifacts.
#[derive(Debug, Clone)]
pub struct Backend {
    pub chain: PrecondChain,
    pub plda: PldaModel,
    pub plda_objective: Vec<f64>,
    pub cohort: Option<Cohort>,
    pub warnings: Vec<String>,
}

pub fn fit_precondition(pop: &Populations, cfg: &ChainConfig) -> Result<(PrecondChain, Vec<String>)> {
    let data = ChainData {
        nap: (&pop.nap.0, &pop.nap.1),
        center: &pop.center,
        rlda: (&pop.speakers.0, &pop.speakers.1),
    };
    fit_chain(cfg, &data)
}

/// PLDA on the preconditioned speaker-labeled data. Returns the model, the
/// objective trace and warnings.
pub fn fit_plda(pop: &Populations, chain: &PrecondChain, cfg: &PldaTrainConfig) -> Result<(PldaModel, Vec<f64>, Vec<String>)> {
    let projected = pop
        .speakers
        .0
        .iter()
        .map(|v| chain.apply(v))
        .collect::<Result<Vec<_>>>()?;
    let (plda, trace) = train_plda(&projected, &pop.speakers.1, cfg)?;
    Ok((plda, trace.objective, trace.warnings))
}

/// The unlabeled cohort in the preconditioned space.
pub fn build_cohort(pop: &Populations, chain: &PrecondChain) -> Result<Cohort> {
    if pop.cohort.0.len() < 2 {
        return Err(Error::Input("snorm: the unlabeled cohort needs at least two vectors".into()));
    }
    let vectors = pop
        .cohort
        .1
        .iter()
        .map(|v| chain.apply(v))
        .collect::<Result<Vec<_>>>()?;
    Cohort::new(pop.cohort.0.clone(), vectors)
}

pub fn train_backend(pop: &Populations, cfg: &BackendConfig) -> Result<Backend> {
    let (chain, mut warnings) = fit_precondition(pop, &cfg.chain)?;
    let (plda, plda_objective, w) = fit_plda(pop, &chain, &cfg.plda)?;
    warnings.extend(w);
    let cohort = if cfg.use_snorm {
        Some(build_cohort(pop, &chain)?)
    } else {
        None
    };
    Ok(Backend {
        chain,
        plda,
        plda_objective,
        cohort,
        warnings,
    })
}

/// Raw PLDA scores with the enrolled models and preconditioned test vectors
/// they were computed from.
#[derive(Debug, Clone)]
pub struct Scored {
    pub raw: ScoreSet,
    pub models: BTreeMap<String, SpeakerModel>,
    pub tests: BTreeMap<String, DVector<f64>>,
}

/// Enroll models and score `trials`. `vectors` maps utterance ids to raw
/// i-vectors; every enrollment and test id must be present.
pub fn score_raw(
    chain: &PrecondChain,
    plda: &PldaModel,
    vectors: &BTreeMap<&str, &DVector<f64>>,
    enrollment: &BTreeMap<String, Vec<String>>,
    trials: &[Trial],
    renormalize: bool,
    parallel: bool,
) -> Result<Scored> {
    let mut missing = BTreeSet::new();
    let lookup = |id: &str, missing: &mut BTreeSet<String>| match vectors.get(id) {
        Some(v) => Some(chain.apply(v)),
        None => {
            missing.insert(format!("utt:{id}"));
            None
        }
    };
    let mut models = BTreeMap::new();
    for (model_id, utts) in enrollment {
        let mut enrolled = Vec::with_capacity(utts.len());
        for u in utts {
            if let Some(v) = lookup(u, &mut missing) {
                enrolled.push(v?);
            }
        }
        if enrolled.len() == utts.len() {
            models.insert(model_id.clone(), enroll_with(model_id, &enrolled, renormalize)?);
        }
    }
    let test_ids: BTreeSet<&str> = trials.iter().map(|t| t.test_id.as_str()).collect();
    let mut tests = BTreeMap::new();
    for id in test_ids {
        if let Some(v) = lookup(id, &mut missing) {
            tests.insert(id.to_string(), v?);
        }
    }
    if !missing.is_empty() {
        return Err(Error::UnknownIds(missing.into_iter().collect()));
    }
    let scorer = PldaScorer::new(plda)?;
    let raw = score_trials(&scorer, &models, &tests, trials, parallel)?;
    Ok(Scored { raw, models, tests })
}

/// Outcome of s-norm over a score set.
#[derive(Debug, Clone)]
pub struct Normed {
    pub scores: ScoreSet,
    pub floored_trials: usize,
    pub warnings: Vec<String>,
}

pub fn apply_snorm(plda: &PldaModel, cohort: &Cohort, settings: &SnormSettings, scored: &Scored) -> Result<Normed> {
    let scorer = PldaScorer::new(plda)?;
    let (snorm_cfg, warning) = settings.resolve(cohort.len());
    let ctx = SnormContext::new(&scorer, cohort, &snorm_cfg)?;
    let outcome = normalize_scores(&ctx, &scored.raw, &scored.models, &scored.tests, settings.variant)?;
    let mut warnings: Vec<String> = warning.into_iter().collect();
    warnings.extend(outcome.warnings);
    Ok(Normed {
        scores: outcome.scores,
        floored_trials: outcome.floored_trials,
        warnings,
    })
}

/// Scores of one trial list under a trained back-end.
#[derive(Debug, Clone)]
pub struct ListScores {
    pub raw: ScoreSet,
    /// s-normed scores, or a copy of `raw` when s-norm is disabled.
    pub scores: ScoreSet,
    pub floored_trials: usize,
    pub warnings: Vec<String>,
}

pub fn score_list(
    backend: &Backend,
    cfg: &BackendConfig,
    corpus: &[LabeledIvector],
    list: &TrialList,
    parallel: bool,
) -> Result<ListScores> {
    let vectors: BTreeMap<&str, &DVector<f64>> = corpus.iter().map(|u| (u.utt_id.as_str(), &u.vector)).collect();
    let trials: Vec<Trial> = list.key.trials().cloned().collect();
    let scored = score_raw(
        &backend.chain,
        &backend.plda,
        &vectors,
        &list.enrollment,
        &trials,
        cfg.enroll_renormalize,
        parallel,
    )?;
    let mut out = ListScores {
        scores: scored.raw.clone(),
        raw: scored.raw.clone(),
        floored_trials: 0,
        warnings: Vec::new(),
    };
    if let Some(cohort) = &backend.cohort {
        let normed = apply_snorm(&backend.plda, cohort, &cfg.snorm, &scored)?;
        out.scores = normed.scores;
        out.floored_trials = normed.floored_trials;
        out.warnings = normed.warnings;
    }
    Ok(out)
}

/// Eval and calibration scores of one system under one training set.
#[derive(Debug, Clone)]
pub struct SystemRun {
    pub backend: Backend,
    pub eval: ListScores,
    pub calibration: ListScores,
}

pub fn run_system(
    corpus: &[LabeledIvector],
    split: &Split,
    cfg: &BackendConfig,
    set: TrainingSet,
    parallel: bool,
) -> Result<SystemRun> {
    let roles = dev_roles(corpus, &split.dev)?;
    let pop = populations(corpus, &roles, set)?;
    let backend = train_backend(&pop, cfg)?;
    let eval = score_list(&backend, cfg, corpus, &split.eval, parallel)?;
    let calibration = score_list(&backend, cfg, corpus, &roles.calibration, parallel)?;
    Ok(SystemRun {
        backend,
        eval,
        calibration,
    })
}

/// Key restricted to models enrolled with `n` sessions.
pub fn key_for_sessions(list: &TrialList, n: usize) -> TrialKey {
    list.key.filtered(|e| list.model_sessions(&e.trial.model_id) == n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_keeps_proportion_when_clamped() {
        let s = SnormSettings { n_nearest: Some(10_000), k_top: Some(5_000), ..SnormSettings::default() };
        let (cfg, warning) = s.resolve(400);
        assert_eq!((cfg.n_nearest, cfg.k_top), (400, 200));
        assert!(warning.is_some());
        let ratios = SnormSettings { n_nearest: None, k_top: None, ..SnormSettings::default() };
        let (cfg, warning) = ratios.resolve(301);
        assert_eq!((cfg.n_nearest, cfg.k_top), (301, 151));
        assert!(warning.is_none());
    }

    #[test]
    fn validate_rejects_inverted_sizes() {
        let s = SnormSettings { n_nearest: Some(10), k_top: Some(11), ..SnormSettings::default() };
        assert!(s.validate().is_err());
        assert!(SnormSettings { top_ratio: 0.0, ..SnormSettings::default() }.validate().is_err());
    }
}
