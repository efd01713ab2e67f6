#![allow(dead_code)]

use ivec_core::frontend::FrameSet;
use ivec_core::synth::{synth_corpus, synth_frames, SynthConfig, SynthCorpus};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Small corpus with frames: 8-dim latents, 5-dim features, 4 frame components.
pub fn frame_corpus(seed: u64, n_speakers: usize, sessions: usize) -> (SynthConfig, SynthCorpus, Vec<FrameSet>) {
    let cfg = SynthConfig {
        seed,
        ivec_dim: 8,
        n_speakers,
        sessions_per_speaker: sessions,
        speaker_rank: 4,
        channel_rank: 2,
        n_languages: 2,
        language_shift_scale: 0.0,
        residual_std: 0.3,
        feature_dim: 5,
        frames_per_utt: 300,
        frame_components: 4,
        ..SynthConfig::default()
    };
    let corpus = synth_corpus(&cfg).unwrap();
    let (_, frames) = synth_frames(&cfg, &corpus.vectors).unwrap();
    (cfg, corpus, frames)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn normal_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}

pub fn eer(tar: &[f64], non: &[f64]) -> f64 {
    ivec_core::metrics::eer_from(tar, non).unwrap()
}
