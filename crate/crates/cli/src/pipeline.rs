//! `run`: the declared stages in dependency order, writing every artifact
//! under `io.out_dir` and a manifest at the end.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ivec_core::frontend::{accumulate_bw_stats, map_adapt_means, train_gmm_em, train_tv, BwStats, DiagGmm, FrameSet, GmmTrainConfig, TvModel, TvTrainConfig};
use ivec_core::fusion::sum_systems;
use ivec_core::metrics::{c_primary, CprimaryReport};
use ivec_core::synth::{split_corpus, synth_corpus, synth_frames, LabeledIvector, Partition, Split, TrialList};
use ivec_core::{ScoreSet, Trial};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::commands::{evaluate_text, fuse, quantize, score_with_backend};
use crate::config::{ArchiveFormat, PipelineConfig, Stage, SystemSpec};
use crate::container::Container;
use crate::error::{CliError, CliResult};
use crate::formats::{encode_archive, format_archive, format_enrollment, format_key, format_scores, format_trials, write_bytes};
use crate::manifest::RunManifest;
use crate::recipe::{build_cohort, dev_roles, fit_plda, fit_precondition, populations, DevRoles, TrainingSet};

pub const TRAINING_SETS: [(TrainingSet, &str); 2] = [
    (TrainingSet::Primary, "primary"),
    (TrainingSet::PrimaryAndDev, "primary_dev"),
];

/// Artifact paths below the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
    pub archive_format: ArchiveFormat,
}

impl Layout {
    pub fn new(root: &Path, archive_format: ArchiveFormat) -> Self {
        Self {
            root: root.to_path_buf(),
            archive_format,
        }
    }

    fn archive_name(&self) -> &'static str {
        match self.archive_format {
            ArchiveFormat::Text => "ivectors.txt",
            ArchiveFormat::Binary => "ivectors.bin",
        }
    }

    pub fn corpus_archive(&self) -> PathBuf {
        self.root.join("corpus").join(self.archive_name())
    }

    /// `list` is `eval`, `dev` or `calibration`; `kind` is `enroll`, `trials` or `key`.
    pub fn list_file(&self, list: &str, kind: &str) -> PathBuf {
        self.root.join("corpus").join(format!("{list}_{kind}.txt"))
    }

    pub fn system_dir(&self, system: &str) -> PathBuf {
        self.root.join("systems").join(system)
    }

    pub fn system_archive(&self, system: &SystemSpec) -> PathBuf {
        if system.frontend {
            self.system_dir(&system.name).join(self.archive_name())
        } else {
            self.corpus_archive()
        }
    }

    pub fn backend(&self, system: &str, set: &str) -> PathBuf {
        self.system_dir(system).join(set).join("backend.sutk")
    }

    /// Emitted scores for `list` (normalized when the snorm stage ran).
    pub fn scores(&self, system: &str, set: &str, list: &str) -> PathBuf {
        self.system_dir(system).join(set).join(format!("{list}_scores.txt"))
    }

    pub fn raw_scores(&self, system: &str, set: &str, list: &str) -> PathBuf {
        self.system_dir(system).join(set).join(format!("{list}_raw_scores.txt"))
    }

    pub fn fusion_model(&self, set: &str) -> PathBuf {
        self.root.join("fusion").join(set).join("fusion.sutk")
    }

    pub fn fused_scores(&self, set: &str) -> PathBuf {
        self.root.join("fusion").join(set).join("eval_scores.txt")
    }

    pub fn final_scores(&self) -> PathBuf {
        self.root.join("fusion").join("final_scores.txt")
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(format!("{name}.txt"))
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("reports").join("report.txt")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

fn write_archive(path: &Path, vectors: &[LabeledIvector], format: ArchiveFormat) -> CliResult<()> {
    match format {
        ArchiveFormat::Text => write_bytes(path, format_archive(vectors).as_bytes()),
        ArchiveFormat::Binary => write_bytes(path, &encode_archive(vectors)?),
    }
}

fn write_list(layout: &Layout, name: &str, list: &TrialList) -> CliResult<()> {
    write_bytes(&layout.list_file(name, "enroll"), format_enrollment(&list.enrollment).as_bytes())?;
    write_bytes(&layout.list_file(name, "trials"), format_trials(list.key.trials()).as_bytes())?;
    write_bytes(&layout.list_file(name, "key"), format_key(&list.key).as_bytes())
}

/// Sorted uniform sample of at most `max` indices.
fn subsample(indices: Vec<usize>, max: usize, seed: u64) -> Vec<usize> {
    if indices.len() <= max {
        return indices;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, indices.len(), max)
        .into_iter()
        .map(|i| indices[i])
        .collect();
    picked.sort_unstable();
    picked
}

fn map_maybe_par<T: Sync, U: Send>(items: &[T], parallel: bool, f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

fn stats_for(ubm: &DiagGmm, frames: &[FrameSet], idx: &[usize], parallel: bool) -> CliResult<Vec<BwStats>> {
    let stats: Vec<_> = map_maybe_par(idx, parallel, |&i| accumulate_bw_stats(ubm, &frames[i]));
    Ok(stats.into_iter().collect::<ivec_core::Result<Vec<_>>>()?)
}

/// UBM by EM on a subset of primary-train utterances, then relevance-MAP
/// mean adaptation to all primary-train frames.
fn ubm_stage(cfg: &PipelineConfig, corpus: &[LabeledIvector], frames: &[FrameSet]) -> CliResult<(DiagGmm, Vec<String>)> {
    let primary: Vec<usize> = (0..corpus.len())
        .filter(|&i| corpus[i].partition == Partition::PrimaryTrain)
        .collect();
    if primary.is_empty() {
        return Err(CliError::Core(ivec_core::Error::Input("ubm: no primary-train utterances".into())));
    }
    let subset = subsample(primary.clone(), cfg.ubm.max_utts, cfg.ubm.seed);
    let train: Vec<FrameSet> = subset.iter().map(|&i| frames[i].clone()).collect();
    let gmm_cfg = GmmTrainConfig {
        n_components: cfg.ubm.n_components,
        n_iters: cfg.ubm.n_iters,
        variance_floor: cfg.ubm.variance_floor,
        seed: cfg.ubm.seed,
    };
    let (ubm, trace) = train_gmm_em(&train, &gmm_cfg)?;
    drop(train);
    let all: Vec<FrameSet> = primary.iter().map(|&i| frames[i].clone()).collect();
    Ok((map_adapt_means(&ubm, &all, cfg.ubm.relevance_factor)?, trace.warnings))
}

/// TV training on primary-train and unlabeled utterances.
fn tv_stage(cfg: &PipelineConfig, corpus: &[LabeledIvector], frames: &[FrameSet], ubm: &DiagGmm, parallel: bool) -> CliResult<(TvModel, Vec<String>)> {
    let pool: Vec<usize> = (0..corpus.len())
        .filter(|&i| corpus[i].partition == Partition::PrimaryTrain || corpus[i].partition.is_unlabeled())
        .collect();
    let subset = subsample(pool, cfg.tv.max_utts, cfg.tv.seed);
    let stats = stats_for(ubm, frames, &subset, parallel)?;
    let tv_cfg = TvTrainConfig {
        rank: cfg.tv.rank,
        n_iters: cfg.tv.n_iters,
        seed: cfg.tv.seed,
        init_scale: cfg.tv.init_scale,
        min_divergence: cfg.tv.min_divergence,
    };
    let (tv, trace) = train_tv(ubm, &stats, &tv_cfg)?;
    Ok((tv, trace.warnings))
}

fn extract_stage(corpus: &[LabeledIvector], frames: &[FrameSet], tv: &TvModel, parallel: bool) -> CliResult<Vec<LabeledIvector>> {
    let extractor = tv.extractor();
    let idx: Vec<usize> = (0..corpus.len()).collect();
    let vectors: Vec<_> = map_maybe_par(&idx, parallel, |&i| {
        accumulate_bw_stats(&tv.ubm, &frames[i]).and_then(|s| extractor.extract(&s))
    });
    corpus
        .iter()
        .zip(vectors)
        .map(|(u, v)| {
            Ok(LabeledIvector {
                vector: v?,
                ..u.clone()
            })
        })
        .collect()
}

/// Scores of one system under one training set, as read back from disk.
struct SetScores {
    eval: ScoreSet,
    calibration: ScoreSet,
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    layout: Layout,
    parallel: bool,
    manifest: RunManifest,
}

impl Run<'_> {
    fn has(&self, s: Stage) -> bool {
        self.cfg.has_stage(s)
    }

    fn synth(&mut self) -> CliResult<(Vec<LabeledIvector>, Split, DevRoles)> {
        let (cfg, layout) = (self.cfg, self.layout.clone());
        self.manifest.time("synth", None, || {
            let mut corpus = synth_corpus(&cfg.synth)?.vectors;
            let split = split_corpus(&corpus, &cfg.split)?;
            split.apply(&mut corpus);
            let roles = dev_roles(&corpus, &split.dev)?;
            write_archive(&layout.corpus_archive(), &corpus, cfg.io.archive_format)?;
            write_list(&layout, "eval", &split.eval)?;
            write_list(&layout, "dev", &split.dev)?;
            write_list(&layout, "calibration", &roles.calibration)?;
            Ok((corpus, split, roles))
        })
    }

    /// I-vectors for a system: the corpus vectors, or front-end extractions.
    fn system_vectors(&mut self, sys: &SystemSpec, corpus: &[LabeledIvector]) -> CliResult<Option<Vec<LabeledIvector>>> {
        if !sys.frontend {
            return Ok(Some(corpus.to_vec()));
        }
        if !self.has(Stage::Ubm) {
            return Ok(None);
        }
        let (cfg, parallel) = (self.cfg, self.parallel);
        let dir = self.layout.system_dir(&sys.name);
        let scope = sys.name.clone();
        let synth_cfg = ivec_core::synth::SynthConfig {
            frame_seed: sys.frame_seed,
            ..cfg.synth.clone()
        };
        let (_, frames) = synth_frames(&synth_cfg, corpus)?;
        let mut warnings = Vec::new();
        let ubm = self.manifest.time("ubm", Some(&scope), || {
            let (ubm, w) = ubm_stage(cfg, corpus, &frames)?;
            warnings.extend(w);
            let mut c = Container::new();
            c.put_ubm(&ubm);
            c.write(&dir.join("ubm.sutk"))?;
            Ok(ubm)
        })?;
        self.manifest.warn(std::mem::take(&mut warnings));
        if !self.has(Stage::Tv) {
            return Ok(None);
        }
        let tv = self.manifest.time("tv", Some(&scope), || {
            let (tv, w) = tv_stage(cfg, corpus, &frames, &ubm, parallel)?;
            warnings.extend(w);
            let mut c = Container::new();
            c.put_tv(&tv);
            c.write(&dir.join("tv.sutk"))?;
            Ok(tv)
        })?;
        self.manifest.warn(std::mem::take(&mut warnings));
        if !self.has(Stage::Extract) {
            return Ok(None);
        }
        let path = self.layout.system_archive(sys);
        let vectors = self.manifest.time("extract", Some(&scope), || {
            let v = extract_stage(corpus, &frames, &tv, parallel)?;
            write_archive(&path, &v, cfg.io.archive_format)?;
            Ok(v)
        })?;
        Ok(Some(vectors))
    }

    fn backend_for_set(
        &mut self,
        sys: &SystemSpec,
        set: TrainingSet,
        set_name: &str,
        vectors: &[LabeledIvector],
        split: &Split,
        roles: &DevRoles,
    ) -> CliResult<Option<SetScores>> {
        let cfg = self.cfg;
        let layout = self.layout.clone();
        let parallel = self.parallel;
        let scope = format!("{}/{set_name}", sys.name);
        let mut warnings = Vec::new();
        let (pop, chain) = self.manifest.time("precondition", Some(&scope), || {
            let pop = populations(vectors, roles, set)?;
            let (chain, w) = fit_precondition(&pop, &cfg.precondition)?;
            warnings.extend(w);
            Ok((pop, chain))
        })?;
        self.manifest.warn(std::mem::take(&mut warnings));
        if !self.has(Stage::Plda) {
            let mut c = Container::new();
            c.put_chain(&chain);
            c.write(&layout.backend(&sys.name, set_name))?;
            return Ok(None);
        }
        let mut backend = self.manifest.time("plda", Some(&scope), || {
            let (plda, _objective, w) = fit_plda(&pop, &chain, &cfg.plda)?;
            warnings.extend(w);
            let mut c = Container::new();
            c.put_chain(&chain);
            c.put_plda(&plda);
            c.write(&layout.backend(&sys.name, set_name))?;
            Ok(c)
        })?;
        self.manifest.warn(std::mem::take(&mut warnings));
        if !self.has(Stage::Score) {
            return Ok(None);
        }
        let lists: [(&str, &TrialList); 2] = [("eval", &split.eval), ("calibration", &roles.calibration)];
        let trial_lists: Vec<Vec<Trial>> = lists.iter().map(|(_, l)| l.key.trials().cloned().collect()).collect();
        let snorm = self.has(Stage::Snorm);
        let raw_path = |list: &str| {
            if snorm {
                layout.raw_scores(&sys.name, set_name, list)
            } else {
                layout.scores(&sys.name, set_name, list)
            }
        };
        let mut emitted = self.manifest.time("score", Some(&scope), || {
            let mut out = Vec::new();
            for ((name, list), trials) in lists.iter().zip(&trial_lists) {
                let scored = score_with_backend(&backend, vectors, &list.enrollment, trials, false, parallel)?;
                write_bytes(&raw_path(name), format_scores(&scored.raw).as_bytes())?;
                out.push(quantize(&scored.raw)?);
            }
            Ok(out)
        })?;
        if snorm {
            emitted = self.manifest.time("snorm", Some(&scope), || {
                let cohort = build_cohort(&pop, &chain)?;
                backend.put_cohort(&cohort);
                backend.put_snorm(&cfg.snorm);
                backend.write(&layout.backend(&sys.name, set_name))?;
                let mut out = Vec::new();
                for ((name, list), trials) in lists.iter().zip(&trial_lists) {
                    let scored = score_with_backend(&backend, vectors, &list.enrollment, trials, true, parallel)?;
                    warnings.extend(scored.warnings.iter().map(|w| format!("{scope} {name}: {w}")));
                    write_bytes(&layout.scores(&sys.name, set_name, name), format_scores(scored.emitted()).as_bytes())?;
                    out.push(quantize(scored.emitted())?);
                }
                Ok(out)
            })?;
            self.manifest.warn(std::mem::take(&mut warnings));
        }
        let calibration = emitted.pop().unwrap();
        let eval = emitted.pop().unwrap();
        Ok(Some(SetScores { eval, calibration }))
    }

    fn execute(&mut self) -> CliResult<()> {
        let (corpus, split, roles) = self.synth()?;
        let mut by_set: BTreeMap<&str, Vec<(String, SetScores)>> = BTreeMap::new();
        for sys in &self.cfg.systems {
            let Some(vectors) = self.system_vectors(sys, &corpus)? else {
                continue;
            };
            if !self.has(Stage::Precondition) {
                continue;
            }
            for (set, set_name) in TRAINING_SETS {
                if let Some(s) = self.backend_for_set(sys, set, set_name, &vectors, &split, &roles)? {
                    by_set.entry(set_name).or_default().push((sys.name.clone(), s));
                }
            }
        }
        self.manifest.normalized = self.has(Stage::Snorm) && !by_set.is_empty();
        if by_set.is_empty() {
            return Ok(());
        }

        let mut fused: Vec<(String, ScoreSet)> = Vec::new();
        if self.has(Stage::Fuse) {
            let (cfg, layout) = (self.cfg, self.layout.clone());
            fused = self.manifest.time("fuse", None, || {
                let mut out = Vec::new();
                for (set_name, systems) in &by_set {
                    let train: Vec<ScoreSet> = systems.iter().map(|(_, s)| s.calibration.clone()).collect();
                    let apply: Vec<ScoreSet> = systems.iter().map(|(_, s)| s.eval.clone()).collect();
                    let (model, scores) = fuse(&train, &roles.calibration.key, &apply, &cfg.fusion)?;
                    let mut c = Container::new();
                    c.put_fusion(&model);
                    c.write(&layout.fusion_model(set_name))?;
                    write_bytes(&layout.fused_scores(set_name), format_scores(&scores).as_bytes())?;
                    out.push((format!("fusion_{set_name}"), quantize(&scores)?));
                }
                if out.len() == 2 {
                    let total = sum_systems(&out[0].1, &out[1].1)?;
                    write_bytes(&layout.final_scores(), format_scores(&total).as_bytes())?;
                    out.push(("final".to_string(), quantize(&total)?));
                }
                Ok(out)
            })?;
        }

        if self.has(Stage::Evaluate) {
            let (cfg, layout) = (self.cfg, self.layout.clone());
            self.manifest.time("evaluate", None, || {
                let mut rows: Vec<(String, &ScoreSet)> = Vec::new();
                for (set_name, systems) in &by_set {
                    for (sys, s) in systems {
                        rows.push((format!("{sys}.{set_name}"), &s.eval));
                    }
                }
                rows.extend(fused.iter().map(|(n, s)| (n.clone(), s)));
                let mut summary = format!("{}\n", CprimaryReport::header());
                for (name, scores) in rows {
                    write_bytes(&layout.report(&name), evaluate_text(scores, &split.eval.key, &cfg.metrics)?.as_bytes())?;
                    let report = c_primary(scores, &split.eval.key, &cfg.metrics)?;
                    writeln!(summary, "{}", report.row(&name)).unwrap();
                }
                write_bytes(&layout.summary(), summary.as_bytes())
            })?;
        }
        Ok(())
    }
}

/// Execute a validated config. The manifest is written whether or not the run
/// succeeds; on failure it names the failing stage.
pub fn run(cfg: &PipelineConfig, jobs: usize) -> (RunManifest, CliResult<()>) {
    let layout = Layout::new(&cfg.io.out_dir, cfg.io.archive_format);
    let mut run = Run {
        cfg,
        layout: layout.clone(),
        parallel: jobs > 1,
        manifest: RunManifest::new(cfg),
    };
    let result = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(|| run.execute()),
        Err(e) => Err(CliError::Config(format!("--jobs: {e}"))),
    };
    let mut manifest = run.manifest;
    manifest.status = if result.is_ok() { "ok".into() } else { "failed".into() };
    if let Err(e) = &result {
        if manifest.failure.is_none() {
            manifest.failure = Some(e.into());
        }
        log::error!("{e}");
    }
    let result = match manifest.write(&layout.manifest()) {
        Ok(()) => result,
        Err(e) => result.and(Err(e)),
    };
    (manifest, result)
}
