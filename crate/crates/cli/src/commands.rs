//! Stage-level commands. `run` calls the same functions, so a stage executed
//! alone produces the same bytes as inside a pipeline run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ivec_core::fusion::{apply_fusion, sum_systems, train_fusion, FusionConfig, FusionModel, ScoreMatrix};
use ivec_core::metrics::{c_primary, det_points, CprimaryConfig};
use ivec_core::synth::LabeledIvector;
use ivec_core::{ScoreSet, Trial, TrialKey};
use nalgebra::DVector;

use crate::container::Container;
use crate::error::{CliError, CliResult};
use crate::formats::{
    format_det, format_scores, parse_enrollment, parse_key, parse_scores, parse_trials, read_archive, read_text,
    require_artifact, write_bytes,
};
use crate::recipe::{apply_snorm, score_raw};

pub fn load_scores(path: &Path) -> CliResult<ScoreSet> {
    require_artifact(path, "score")?;
    parse_scores(path, &read_text(path)?)
}

pub fn load_key(path: &Path) -> CliResult<TrialKey> {
    require_artifact(path, "synth")?;
    parse_key(path, &read_text(path)?)
}

/// Scores as they read back from a score file.
pub fn quantize(scores: &ScoreSet) -> CliResult<ScoreSet> {
    parse_scores(Path::new("<scores>"), &format_scores(scores))
}

/// Result of scoring a trial list with a stored back-end.
pub struct ScoreOutput {
    pub raw: ScoreSet,
    pub normalized: Option<ScoreSet>,
    pub warnings: Vec<String>,
}

impl ScoreOutput {
    pub fn emitted(&self) -> &ScoreSet {
        self.normalized.as_ref().unwrap_or(&self.raw)
    }
}

/// Score `trials` with the chain and PLDA in `backend`; with `snorm`, the
/// stored cohort and settings normalize the scores.
pub fn score_with_backend(
    backend: &Container,
    vectors: &[LabeledIvector],
    enrollment: &BTreeMap<String, Vec<String>>,
    trials: &[Trial],
    snorm: bool,
    parallel: bool,
) -> CliResult<ScoreOutput> {
    let chain = backend.chain()?;
    let plda = backend.plda()?;
    let index: BTreeMap<&str, &DVector<f64>> = vectors.iter().map(|u| (u.utt_id.as_str(), &u.vector)).collect();
    let scored = score_raw(&chain, &plda, &index, enrollment, trials, true, parallel)?;
    if !snorm {
        return Ok(ScoreOutput {
            raw: scored.raw,
            normalized: None,
            warnings: Vec::new(),
        });
    }
    let cohort = backend
        .cohort()?
        .ok_or_else(|| CliError::Config("s-norm requested but the back-end has no cohort (run the snorm stage)".into()))?;
    let settings = backend
        .snorm()?
        .ok_or_else(|| CliError::Config("s-norm requested but the back-end has no s-norm settings".into()))?;
    let normed = apply_snorm(&plda, &cohort, &settings, &scored)?;
    Ok(ScoreOutput {
        raw: scored.raw,
        normalized: Some(normed.scores),
        warnings: normed.warnings,
    })
}

pub struct ScoreArgs {
    pub backend: PathBuf,
    pub ivectors: PathBuf,
    pub enroll: PathBuf,
    pub trials: PathBuf,
    pub out: PathBuf,
    pub snorm: bool,
    pub parallel: bool,
}

pub fn cmd_score(a: &ScoreArgs) -> CliResult<Vec<String>> {
    let backend = Container::read(&a.backend, "plda")?;
    require_artifact(&a.ivectors, "synth")?;
    let vectors = read_archive(&a.ivectors)?;
    require_artifact(&a.enroll, "synth")?;
    let enrollment = parse_enrollment(&a.enroll, &read_text(&a.enroll)?)?;
    require_artifact(&a.trials, "synth")?;
    let trials = parse_trials(&a.trials, &read_text(&a.trials)?)?;
    let out = score_with_backend(&backend, &vectors, &enrollment, &trials, a.snorm, a.parallel)?;
    write_bytes(&a.out, format_scores(out.emitted()).as_bytes())?;
    Ok(out.warnings)
}

/// Full C_Primary report text for one score set.
pub fn evaluate_text(scores: &ScoreSet, key: &TrialKey, metrics: &CprimaryConfig) -> CliResult<String> {
    Ok(c_primary(scores, key, metrics)?.to_string())
}

pub fn cmd_evaluate(scores: &Path, key: &Path, out: Option<&Path>) -> CliResult<String> {
    let text = evaluate_text(&load_scores(scores)?, &load_key(key)?, &CprimaryConfig::default())?;
    if let Some(out) = out {
        write_bytes(out, text.as_bytes())?;
    }
    Ok(text)
}

/// Train fusion on `train` (one set per system, all over the key's trials)
/// and apply it to `apply`.
pub fn fuse(train: &[ScoreSet], key: &TrialKey, apply: &[ScoreSet], cfg: &FusionConfig) -> CliResult<(FusionModel, ScoreSet)> {
    if train.len() != apply.len() {
        return Err(CliError::Config(format!(
            "fusion: {} training systems but {} systems to apply",
            train.len(),
            apply.len()
        )));
    }
    let train_refs: Vec<&ScoreSet> = train.iter().collect();
    let (model, _trace) = train_fusion(&ScoreMatrix::from_score_sets(&train_refs)?, key, cfg)?;
    let fused = apply_model(apply, &model)?;
    Ok((model, fused))
}

pub fn apply_model(apply: &[ScoreSet], model: &FusionModel) -> CliResult<ScoreSet> {
    let refs: Vec<&ScoreSet> = apply.iter().collect();
    Ok(apply_fusion(&ScoreMatrix::from_score_sets(&refs)?, model)?)
}

pub struct FuseArgs {
    pub key: Option<PathBuf>,
    pub train: Vec<PathBuf>,
    pub apply: Vec<PathBuf>,
    pub out: PathBuf,
    pub model_out: Option<PathBuf>,
    pub identity: bool,
    pub prior: Option<f64>,
}

pub fn cmd_fuse(a: &FuseArgs) -> CliResult<()> {
    let mut cfg = FusionConfig::default();
    if let Some(p) = a.prior {
        cfg.prior = p;
    }
    cfg.validate()?;
    if a.apply.is_empty() {
        return Err(CliError::Config("fuse: --apply needs at least one score file".into()));
    }
    let apply = a.apply.iter().map(|p| load_scores(p)).collect::<CliResult<Vec<_>>>()?;
    let (model, fused) = if a.identity {
        let model = FusionModel::identity(apply.len(), cfg.prior);
        let fused = apply_model(&apply, &model)?;
        (model, fused)
    } else {
        let key_path = a
            .key
            .as_ref()
            .ok_or_else(|| CliError::Config("fuse: --key is required unless --identity".into()))?;
        let key = load_key(key_path)?;
        let train = a.train.iter().map(|p| load_scores(p)).collect::<CliResult<Vec<_>>>()?;
        fuse(&train, &key, &apply, &cfg)?
    };
    write_bytes(&a.out, format_scores(&fused).as_bytes())?;
    if let Some(path) = &a.model_out {
        let mut c = Container::new();
        c.put_fusion(&model);
        c.write(path)?;
    }
    Ok(())
}

pub fn cmd_sum(a: &Path, b: &Path, out: &Path) -> CliResult<()> {
    let summed = sum_systems(&load_scores(a)?, &load_scores(b)?)?;
    write_bytes(out, format_scores(&summed).as_bytes())
}

pub fn cmd_det(scores: &Path, key: &Path, out: &Path) -> CliResult<()> {
    let points = det_points(&load_scores(scores)?, &load_key(key)?)?;
    write_bytes(out, format_det(&points).as_bytes())
}
