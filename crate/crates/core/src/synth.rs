//! Synthetic i-vector corpora with speaker, channel and language factors.
//!
//! Every vector is generated as
//! `offset(language) + V·z_speaker + U·z_session + noise`, so the exact
//! generative model is known and returned alongside the corpus. Pipeline code
//! only sees the [`LabeledIvector`]s; the [`GroundTruth`] is for tests and
//! oracle checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::frontend::FrameSet;
use crate::plda::PldaModel;
use crate::trials::{KeyEntry, Trial, TrialKey};
use crate::{Error, Result};

const STREAM_LOADINGS: u64 = 0;
const STREAM_LANGUAGES: u64 = 1;
const STREAM_SPEAKERS: u64 = 2;
const STREAM_SESSIONS: u64 = 3;
const STREAM_FRAME_MODEL: u64 = 4;
const STREAM_SPLIT: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    PrimaryTrain,
    UnlabeledMajor,
    UnlabeledMinor,
    DevLabeled,
    Enroll,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 6] = [
        Partition::PrimaryTrain,
        Partition::UnlabeledMajor,
        Partition::UnlabeledMinor,
        Partition::DevLabeled,
        Partition::Enroll,
        Partition::Test,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::PrimaryTrain => "primary_train",
            Partition::UnlabeledMajor => "unlabeled_major",
            Partition::UnlabeledMinor => "unlabeled_minor",
            Partition::DevLabeled => "dev_labeled",
            Partition::Enroll => "enroll",
            Partition::Test => "test",
        }
    }

    pub fn is_unlabeled(self) -> bool {
        matches!(self, Partition::UnlabeledMajor | Partition::UnlabeledMinor)
    }

    pub fn is_evaluation(self) -> bool {
        matches!(self, Partition::Enroll | Partition::Test)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Partition::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown partition '{s}'")))
    }
}

/// An embedding with its bookkeeping labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledIvector {
    pub utt_id: String,
    pub vector: DVector<f64>,
    pub speaker_id: Option<String>,
    pub language_id: Option<String>,
    pub partition: Partition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub ivec_dim: usize,
    pub n_speakers: usize,
    pub sessions_per_speaker: usize,
    pub speaker_rank: usize,
    pub channel_rank: usize,
    pub n_languages: usize,
    /// Norm of each per-language mean offset.
    pub language_shift_scale: f64,
    pub residual_std: f64,
    /// Per-dimension standard deviation of the speaker term.
    pub speaker_scale: f64,
    /// Per-dimension standard deviation of the session term.
    pub channel_scale: f64,
    pub feature_dim: usize,
    pub frames_per_utt: usize,
    pub frame_components: usize,
    /// Per-dimension scale of the latent-to-frame-mean map.
    pub frame_loading_scale: f64,
    /// Selects an independent frame generator ("feature type") for the same corpus.
    pub frame_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            ivec_dim: 60,
            n_speakers: 200,
            sessions_per_speaker: 4,
            speaker_rank: 20,
            channel_rank: 10,
            n_languages: 6,
            language_shift_scale: 1.0,
            residual_std: 0.3,
            speaker_scale: 1.0,
            channel_scale: 0.5,
            feature_dim: 8,
            frames_per_utt: 200,
            frame_components: 8,
            frame_loading_scale: 1.0,
            frame_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("synth: {m}")));
        if self.ivec_dim == 0 || self.n_speakers == 0 || self.sessions_per_speaker == 0 {
            return fail("ivec_dim, n_speakers and sessions_per_speaker must be positive".into());
        }
        if self.speaker_rank == 0 || self.speaker_rank >= self.ivec_dim {
            return fail(format!("speaker_rank must be in 1..{}", self.ivec_dim));
        }
        if self.channel_rank >= self.ivec_dim {
            return fail(format!("channel_rank must be below ivec_dim {}", self.ivec_dim));
        }
        if self.speaker_rank + self.channel_rank > self.ivec_dim {
            return fail("speaker_rank + channel_rank exceeds ivec_dim".into());
        }
        if self.n_languages < 2 {
            return fail("n_languages must be at least 2".into());
        }
        for (name, v) in [
            ("language_shift_scale", self.language_shift_scale),
            ("speaker_scale", self.speaker_scale),
            ("channel_scale", self.channel_scale),
            ("frame_loading_scale", self.frame_loading_scale),
        ] {
            if !v.is_finite() || v < 0.0 {
                return fail(format!("{name} must be finite and >= 0"));
            }
        }
        if !self.residual_std.is_finite() || self.residual_std <= 0.0 {
            return fail("residual_std must be finite and > 0".into());
        }
        if self.feature_dim == 0 || self.frame_components == 0 {
            return fail("feature_dim and frame_components must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerTruth {
    pub speaker_id: String,
    pub language: usize,
    pub latent: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UttTruth {
    pub utt_id: String,
    /// Index into [`GroundTruth::speakers`].
    pub speaker: usize,
    pub channel_latent: DVector<f64>,
}

/// The generative parameters and latents behind a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub speaker_loadings: DMatrix<f64>,
    pub channel_loadings: DMatrix<f64>,
    pub language_offsets: Vec<DVector<f64>>,
    pub residual_std: f64,
    pub speakers: Vec<SpeakerTruth>,
    pub utterances: Vec<UttTruth>,
}

impl GroundTruth {
    pub fn language_id(index: usize) -> String {
        format!("lang{index:02}")
    }

    /// `V·z` for a speaker.
    pub fn speaker_component(&self, speaker: usize) -> DVector<f64> {
        &self.speaker_loadings * &self.speakers[speaker].latent
    }

    /// Language offset plus speaker term: the noiseless part shared by all sessions.
    pub fn speaker_mean(&self, speaker: usize) -> DVector<f64> {
        &self.language_offsets[self.speakers[speaker].language] + self.speaker_component(speaker)
    }

    /// Covariance of a vector around its speaker mean: `U·Uᵀ + σ²·I`.
    pub fn within_covariance(&self) -> DMatrix<f64> {
        let d = self.speaker_loadings.nrows();
        &self.channel_loadings * self.channel_loadings.transpose()
            + DMatrix::identity(d, d) * self.residual_std.powi(2)
    }

    pub fn between_covariance(&self) -> DMatrix<f64> {
        &self.speaker_loadings * self.speaker_loadings.transpose()
    }

    /// The true factor model as a PLDA model (zero mean; language offsets excluded).
    pub fn oracle_plda(&self) -> PldaModel {
        let d = self.speaker_loadings.nrows();
        PldaModel {
            mu: DVector::zeros(d),
            v: self.speaker_loadings.clone(),
            u: self.channel_loadings.clone(),
            sigma: DVector::from_element(d, self.residual_std.powi(2)),
        }
    }

    pub fn utterance_index(&self) -> BTreeMap<&str, usize> {
        self.utterances
            .iter()
            .enumerate()
            .map(|(i, u)| (u.utt_id.as_str(), i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub vectors: Vec<LabeledIvector>,
    pub truth: GroundTruth,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    // filled row by row so the stream layout does not depend on storage order
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let x: f64 = rng.sample(StandardNormal);
            m[(r, c)] = x * scale;
        }
    }
    m
}

fn normal_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Generate a labeled corpus. All utterances start in `primary_train`;
/// [`split_corpus`] assigns the evaluation protocol.
pub fn synth_corpus(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let d = config.ivec_dim;

    let mut rng = stream_rng(config.seed, STREAM_LOADINGS);
    let speaker_loadings = normal_matrix(
        &mut rng,
        d,
        config.speaker_rank,
        config.speaker_scale / (config.speaker_rank as f64).sqrt(),
    );
    let channel_scale = if config.channel_rank == 0 {
        0.0
    } else {
        config.channel_scale / (config.channel_rank as f64).sqrt()
    };
    let channel_loadings = normal_matrix(&mut rng, d, config.channel_rank, channel_scale);

    let mut rng = stream_rng(config.seed, STREAM_LANGUAGES);
    let language_offsets = (0..config.n_languages)
        .map(|_| {
            let dir = normal_vector(&mut rng, d);
            let norm = dir.norm();
            if norm == 0.0 {
                DVector::zeros(d)
            } else {
                dir * (config.language_shift_scale / norm)
            }
        })
        .collect::<Vec<_>>();

    let mut rng = stream_rng(config.seed, STREAM_SPEAKERS);
    let speakers = (0..config.n_speakers)
        .map(|i| SpeakerTruth {
            speaker_id: format!("spk{i:05}"),
            language: i % config.n_languages,
            latent: normal_vector(&mut rng, config.speaker_rank),
        })
        .collect::<Vec<_>>();

    let mut rng = stream_rng(config.seed, STREAM_SESSIONS);
    let mut vectors = Vec::with_capacity(config.n_speakers * config.sessions_per_speaker);
    let mut utterances = Vec::with_capacity(vectors.capacity());
    for (s, spk) in speakers.iter().enumerate() {
        let mean = &language_offsets[spk.language] + &speaker_loadings * &spk.latent;
        for j in 0..config.sessions_per_speaker {
            let channel_latent = normal_vector(&mut rng, config.channel_rank);
            let noise = normal_vector(&mut rng, d) * config.residual_std;
            let vector = &mean + &channel_loadings * &channel_latent + noise;
            let utt_id = format!("{}-{j:03}", spk.speaker_id);
            vectors.push(LabeledIvector {
                utt_id: utt_id.clone(),
                vector,
                speaker_id: Some(spk.speaker_id.clone()),
                language_id: Some(GroundTruth::language_id(spk.language)),
                partition: Partition::PrimaryTrain,
            });
            utterances.push(UttTruth {
                utt_id,
                speaker: s,
                channel_latent,
            });
        }
    }

    Ok(SynthCorpus {
        vectors,
        truth: GroundTruth {
            speaker_loadings,
            channel_loadings,
            language_offsets,
            residual_std: config.residual_std,
            speakers,
            utterances,
        },
    })
}

/// Frame generator: a diagonal mixture whose component means move with a
/// linear map of the utterance latent.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameModel {
    pub weights: DVector<f64>,
    /// components × feature_dim
    pub means: DMatrix<f64>,
    pub variances: DMatrix<f64>,
    /// (components·feature_dim) × latent_dim
    pub loading: DMatrix<f64>,
}

impl FrameModel {
    pub fn generate(config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let (c, d) = (config.frame_components, config.feature_dim);
        let mut rng = stream_rng(frame_model_seed(config), STREAM_FRAME_MODEL);
        let raw_weights = DVector::from_iterator(c, (0..c).map(|_| rng.random_range(1.0..2.0)));
        let weights = &raw_weights / raw_weights.sum();
        let means = normal_matrix(&mut rng, c, d, 3.0);
        let mut variances = DMatrix::zeros(c, d);
        for r in 0..c {
            for k in 0..d {
                variances[(r, k)] = rng.random_range(0.5..1.5);
            }
        }
        let loading = normal_matrix(
            &mut rng,
            c * d,
            config.ivec_dim,
            config.frame_loading_scale / (config.ivec_dim as f64).sqrt(),
        );
        Ok(Self {
            weights,
            means,
            variances,
            loading,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.means.ncols()
    }

    /// Frames for one utterance; a pure function of `(latent, n_frames, sub_seed)`.
    pub fn utterance_frames(&self, latent: &DVector<f64>, n_frames: usize, sub_seed: u64) -> FrameSet {
        let d = self.feature_dim();
        let shift = &self.loading * latent;
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
        let cumulative: Vec<f64> = self
            .weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let mut data = DMatrix::zeros(d, n_frames);
        for t in 0..n_frames {
            let u: f64 = rng.random();
            let comp = cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or(cumulative.len() - 1);
            for k in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                data[(k, t)] = self.means[(comp, k)]
                    + shift[comp * d + k]
                    + self.variances[(comp, k)].sqrt() * z;
            }
        }
        FrameSet::new(data)
    }
}

fn frame_model_seed(config: &SynthConfig) -> u64 {
    config.seed ^ config.frame_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Per-utterance sub-seed used by [`synth_frames`].
pub fn utterance_sub_seed(config: &SynthConfig, index: usize) -> u64 {
    frame_model_seed(config)
        .wrapping_mul(0xD1B5_4A32_D192_ED03)
        .wrapping_add(index as u64)
}

/// Frames for every utterance of `corpus`, in corpus order.
pub fn synth_frames(config: &SynthConfig, corpus: &[LabeledIvector]) -> Result<(FrameModel, Vec<FrameSet>)> {
    if config.frames_per_utt == 0 {
        return Err(Error::Config("synth: frames_per_utt must be positive".into()));
    }
    let model = FrameModel::generate(config)?;
    let frames = corpus
        .iter()
        .enumerate()
        .map(|(i, u)| {
            model.utterance_frames(&u.vector, config.frames_per_utt, utterance_sub_seed(config, i))
        })
        .collect();
    Ok((model, frames))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    /// The last `eval_languages` languages (in sorted id order) are held out
    /// from primary training and make up the unlabeled, dev and eval data.
    pub eval_languages: usize,
    /// Fractions of held-out speakers per role; must sum to 1.
    pub unlabeled_fraction: f64,
    pub dev_fraction: f64,
    pub eval_fraction: f64,
    /// Fraction of models enrolled with three segments (the rest use one).
    pub three_session_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            eval_languages: 2,
            unlabeled_fraction: 0.3,
            dev_fraction: 0.2,
            eval_fraction: 0.5,
            three_session_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fracs = [self.unlabeled_fraction, self.dev_fraction, self.eval_fraction];
        if fracs.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::Config("split: fractions must be finite and >= 0".into()));
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("split: role fractions must sum to 1".into()));
        }
        if !(0.0..=1.0).contains(&self.three_session_fraction) {
            return Err(Error::Config("split: three_session_fraction must be in [0, 1]".into()));
        }
        if self.eval_languages == 0 {
            return Err(Error::Config("split: eval_languages must be positive".into()));
        }
        Ok(())
    }
}

/// Enrollment lists and the trial key for one evaluation set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialList {
    pub enrollment: BTreeMap<String, Vec<String>>,
    pub model_speakers: BTreeMap<String, String>,
    pub test_utts: Vec<String>,
    pub key: TrialKey,
}

impl TrialList {
    pub fn model_sessions(&self, model_id: &str) -> usize {
        self.enrollment.get(model_id).map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub partitions: BTreeMap<String, Partition>,
    pub eval: TrialList,
    pub dev: TrialList,
}

impl Split {
    /// Write the partition labels into the corpus. Unlabeled utterances lose
    /// their speaker and language labels.
    pub fn apply(&self, corpus: &mut [LabeledIvector]) {
        for u in corpus.iter_mut() {
            if let Some(&p) = self.partitions.get(&u.utt_id) {
                u.partition = p;
                if p.is_unlabeled() {
                    u.speaker_id = None;
                    u.language_id = None;
                }
            }
        }
    }
}

pub fn model_id_for(speaker_id: &str) -> String {
    format!("m_{speaker_id}")
}

/// Assign partitions and build enrollment/trial lists.
pub fn split_corpus(corpus: &[LabeledIvector], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut by_speaker: BTreeMap<&str, Vec<&LabeledIvector>> = BTreeMap::new();
    let mut languages = BTreeSet::new();
    for u in corpus {
        let spk = u
            .speaker_id
            .as_deref()
            .ok_or_else(|| Error::Input(format!("utterance {} has no speaker label", u.utt_id)))?;
        let lang = u
            .language_id
            .as_deref()
            .ok_or_else(|| Error::Input(format!("utterance {} has no language label", u.utt_id)))?;
        languages.insert(lang);
        by_speaker.entry(spk).or_default().push(u);
    }
    let languages: Vec<&str> = languages.into_iter().collect();
    if spec.eval_languages >= languages.len() {
        return Err(Error::Config(format!(
            "split: {} held-out languages leave no primary languages among {}",
            spec.eval_languages,
            languages.len()
        )));
    }
    let held_out = &languages[languages.len() - spec.eval_languages..];
    let major_language = held_out[0];

    let mut partitions = BTreeMap::new();
    let mut held_out_speakers = Vec::new();
    for (spk, utts) in &by_speaker {
        let n_held = utts
            .iter()
            .filter(|u| held_out.contains(&u.language_id.as_deref().unwrap()))
            .count();
        if n_held == 0 {
            for u in utts {
                partitions.insert(u.utt_id.clone(), Partition::PrimaryTrain);
            }
        } else if n_held == utts.len() {
            held_out_speakers.push(*spk);
        } else {
            return Err(Error::Split(format!(
                "speaker {spk} has utterances in both training and held-out languages"
            )));
        }
    }

    let mut rng = stream_rng(spec.seed, STREAM_SPLIT);
    held_out_speakers.shuffle(&mut rng);
    let n = held_out_speakers.len();
    let n_unlabeled = (spec.unlabeled_fraction * n as f64).round() as usize;
    let n_dev = ((spec.dev_fraction * n as f64).round() as usize).min(n - n_unlabeled);
    let (unlabeled, rest) = held_out_speakers.split_at(n_unlabeled);
    let (dev, eval) = rest.split_at(n_dev);

    for spk in unlabeled {
        for u in &by_speaker[spk] {
            let p = if u.language_id.as_deref() == Some(major_language) {
                Partition::UnlabeledMajor
            } else {
                Partition::UnlabeledMinor
            };
            partitions.insert(u.utt_id.clone(), p);
        }
    }

    let dev_list = build_trial_list(&by_speaker, dev, spec.three_session_fraction, |_, _| {
        Partition::DevLabeled
    }, &mut partitions)?;
    let eval_list = build_trial_list(&by_speaker, eval, spec.three_session_fraction, |enroll, _| {
        if enroll {
            Partition::Enroll
        } else {
            Partition::Test
        }
    }, &mut partitions)?;

    let split = Split {
        partitions,
        eval: eval_list,
        dev: dev_list,
    };
    let mut labeled = corpus.to_vec();
    split.apply(&mut labeled);
    check_disjoint(&labeled)?;
    Ok(split)
}

fn build_trial_list(
    by_speaker: &BTreeMap<&str, Vec<&LabeledIvector>>,
    speakers: &[&str],
    three_session_fraction: f64,
    partition_of: impl Fn(bool, &str) -> Partition,
    partitions: &mut BTreeMap<String, Partition>,
) -> Result<TrialList> {
    let n_three = (three_session_fraction * speakers.len() as f64).round() as usize;
    let mut list = TrialList::default();
    let mut test_speaker = BTreeMap::new();
    for (i, spk) in speakers.iter().enumerate() {
        let n_enroll = if i < n_three { 3 } else { 1 };
        let mut utts: Vec<&str> = by_speaker[spk].iter().map(|u| u.utt_id.as_str()).collect();
        utts.sort_unstable();
        if utts.len() <= n_enroll {
            return Err(Error::Config(format!(
                "split: speaker {spk} has {} utterances, needs more than {n_enroll} for a {n_enroll}-segment model",
                utts.len()
            )));
        }
        let model = model_id_for(spk);
        for (j, utt) in utts.iter().enumerate() {
            let enroll = j < n_enroll;
            partitions.insert(utt.to_string(), partition_of(enroll, utt));
            if !enroll {
                test_speaker.insert(utt.to_string(), spk.to_string());
            }
        }
        list.enrollment
            .insert(model.clone(), utts[..n_enroll].iter().map(|s| s.to_string()).collect());
        list.model_speakers.insert(model, spk.to_string());
    }
    list.test_utts = test_speaker.keys().cloned().collect();
    let mut entries = Vec::with_capacity(list.enrollment.len() * list.test_utts.len());
    for (model, spk) in &list.model_speakers {
        for utt in &list.test_utts {
            entries.push(KeyEntry {
                trial: Trial::new(model.clone(), utt.clone()),
                is_target: &test_speaker[utt] == spk,
            });
        }
    }
    list.key = TrialKey::new(entries)?;
    Ok(list)
}

/// Check utterance-id uniqueness and that no labeled speaker occurs both in a
/// training-side partition and in enroll/test.
pub fn check_disjoint(corpus: &[LabeledIvector]) -> Result<()> {
    let mut ids = BTreeSet::new();
    let mut train_speakers = BTreeSet::new();
    let mut eval_speakers = BTreeSet::new();
    for u in corpus {
        if !ids.insert(u.utt_id.as_str()) {
            return Err(Error::Split(format!("utterance id {} appears twice", u.utt_id)));
        }
        if let Some(spk) = u.speaker_id.as_deref() {
            if u.partition.is_evaluation() {
                eval_speakers.insert(spk);
            } else {
                train_speakers.insert(spk);
            }
        }
    }
    if let Some(spk) = train_speakers.intersection(&eval_speakers).next() {
        return Err(Error::Split(format!(
            "speaker {spk} appears in both training and evaluation partitions"
        )));
    }
    Ok(())
}
