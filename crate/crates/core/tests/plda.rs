mod common;

use std::collections::BTreeMap;

use common::{cosine, eer, normal_mat, normal_vec};
use ivec_core::plda::{
    cosine_score, enroll, score_llr, score_trials, train_plda, PldaModel, PldaScorer, PldaTrainConfig, SpeakerModel,
};
use ivec_core::precondition::{apply_chain, fit_chain, ChainConfig, ChainData};
use ivec_core::synth::{synth_corpus, SynthConfig, SynthCorpus};
use ivec_core::Trial;
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_corpus(seed: u64) -> SynthCorpus {
    let cfg = SynthConfig {
        seed,
        ivec_dim: 6,
        n_speakers: 500,
        sessions_per_speaker: 4,
        speaker_rank: 2,
        channel_rank: 1,
        n_languages: 2,
        language_shift_scale: 0.0,
        residual_std: 0.3,
        speaker_scale: 1.5,
        channel_scale: 0.8,
        ..SynthConfig::default()
    };
    synth_corpus(&cfg).unwrap()
}

fn split_xy(corpus: &SynthCorpus) -> (Vec<DVector<f64>>, Vec<String>) {
    (
        corpus.vectors.iter().map(|u| u.vector.clone()).collect(),
        corpus.vectors.iter().map(|u| u.speaker_id.clone().unwrap()).collect(),
    )
}

/// Averaged over seeds the estimate must sit within 10% of the generating
/// V·Vᵀ; per seed it must sit within 10% of the covariance of the sampled
/// speaker components, which is what the data actually determine.
#[test]
fn recovers_generating_speaker_covariance() {
    let mut total = 0.0;
    for seed in 1..=5 {
        let corpus = tiny_corpus(seed);
        let (x, y) = split_xy(&corpus);
        let cfg = PldaTrainConfig { speaker_rank: 2, channel_rank: 1, n_iters: 100, seed: 3, ..Default::default() };
        let (model, trace) = train_plda(&x, &y, &cfg).unwrap();
        assert!(trace.is_nondecreasing(1e-8));
        let truth = &corpus.truth.speaker_loadings;
        let want = truth * truth.transpose();
        let mut sampled = DMatrix::zeros(6, 6);
        for s in 0..corpus.truth.speakers.len() {
            let c = corpus.truth.speaker_component(s);
            sampled += &c * c.transpose();
        }
        sampled /= corpus.truth.speakers.len() as f64;
        let est = model.between_covariance();
        let rel_sampled = (&est - &sampled).norm() / sampled.norm();
        assert!(rel_sampled < 0.10, "seed {seed}: {rel_sampled}");
        total += (&est - &want).norm() / want.norm();
    }
    assert!(total / 5.0 < 0.10, "mean relative error {}", total / 5.0);
}

#[test]
fn log_likelihood_is_monotone_over_ten_iterations() {
    let corpus = synth_corpus(&SynthConfig { seed: 4, ivec_dim: 12, n_speakers: 80, speaker_rank: 4, channel_rank: 3, ..SynthConfig::default() }).unwrap();
    let (x, y) = split_xy(&corpus);
    for seed in 0..3 {
        let cfg = PldaTrainConfig { speaker_rank: 6, channel_rank: 4, n_iters: 10, seed, ..Default::default() };
        let (model, trace) = train_plda(&x, &y, &cfg).unwrap();
        assert_eq!(trace.objective.len(), 11);
        assert!(trace.is_nondecreasing(1e-8), "{:?}", trace.objective);
        let ll = model.log_likelihood(&x, &y).unwrap();
        assert!((ll - trace.objective[10]).abs() <= 1e-9 * ll.abs());
    }
}

#[test]
fn training_is_deterministic_and_validates_ranks() {
    let corpus = tiny_corpus(2);
    let (x, y) = split_xy(&corpus);
    let cfg = PldaTrainConfig { speaker_rank: 2, channel_rank: 1, n_iters: 3, seed: 9, ..Default::default() };
    assert_eq!(train_plda(&x, &y, &cfg).unwrap().0, train_plda(&x, &y, &cfg).unwrap().0);
    let bad = PldaTrainConfig { speaker_rank: 5, channel_rank: 2, ..cfg };
    assert!(matches!(train_plda(&x, &y, &bad), Err(ivec_core::Error::Config(_))));
}

/// Log density of a zero-mean bivariate Gaussian written out by hand.
fn log_gauss2(z: Vector2<f64>, cov: Matrix2<f64>) -> f64 {
    let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
    let inv = Matrix2::new(cov[(1, 1)], -cov[(0, 1)], -cov[(1, 0)], cov[(0, 0)]) / det;
    -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * z.dot(&(inv * z))
}

#[test]
fn scalar_model_matches_bivariate_gaussian_oracle() {
    let (mu, v, u, s) = (0.3, 1.2, 0.7, 0.25);
    let model = PldaModel {
        mu: DVector::from_element(1, mu),
        v: DMatrix::from_element(1, 1, v),
        u: DMatrix::from_element(1, 1, u),
        sigma: DVector::from_element(1, s),
    };
    let scorer = PldaScorer::new(&model).unwrap();
    let (b, w) = (v * v, u * u + s);
    let same = Matrix2::new(b + w, b, b, b + w);
    let diff = Matrix2::new(b + w, 0.0, 0.0, b + w);
    let grid = [-2.5, -1.0, -0.2, 0.0, 0.4, 1.1, 3.0];
    for &e in &grid {
        for &t in &grid {
            let z = Vector2::new(e - mu, t - mu);
            let want = log_gauss2(z, same) - log_gauss2(z, diff);
            let got = scorer.score(&DVector::from_element(1, e), &DVector::from_element(1, t)).unwrap();
            assert!((got - want).abs() < 1e-8, "e={e} t={t}: {got} vs {want}");
            // Same-side pairs outscore their mirrored opposite-side pairs.
            let mirrored = scorer.score(&DVector::from_element(1, e), &DVector::from_element(1, 2.0 * mu - t)).unwrap();
            let product = (e - mu) * (t - mu);
            if product > 0.0 {
                assert!(got > mirrored);
            } else if product < 0.0 {
                assert!(got < mirrored);
            }
        }
    }
}

fn random_model(rng: &mut ChaCha8Rng, m: usize, rs: usize, rc: usize) -> PldaModel {
    PldaModel {
        mu: normal_vec(rng, m) * 0.1,
        v: normal_mat(rng, m, rs),
        u: normal_mat(rng, m, rc) * 0.5,
        sigma: normal_vec(rng, m).map(|z| 0.1 + z * z * 0.1),
    }
}

#[test]
fn llr_is_symmetric_and_vanishes_without_speaker_subspace() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let model = random_model(&mut rng, 7, 3, 2);
    let scorer = PldaScorer::new(&model).unwrap();
    let no_spk = PldaModel { v: DMatrix::zeros(7, 3), ..model.clone() };
    let flat = PldaScorer::new(&no_spk).unwrap();
    for _ in 0..200 {
        let e = normal_vec(&mut rng, 7);
        let t = normal_vec(&mut rng, 7);
        assert!((scorer.score(&e, &t).unwrap() - scorer.score(&t, &e).unwrap()).abs() <= 1e-9);
        assert_eq!(flat.score(&e, &t).unwrap(), 0.0);
    }
}

#[test]
fn batched_scoring_matches_one_by_one_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let model = random_model(&mut rng, 6, 2, 2);
    let models: BTreeMap<String, SpeakerModel> = (0..10)
        .map(|i| {
            let id = format!("m{i}");
            (id.clone(), enroll(&id, &[normal_vec(&mut rng, 6)]).unwrap())
        })
        .collect();
    let tests: BTreeMap<String, DVector<f64>> = (0..20).map(|i| (format!("t{i:02}"), normal_vec(&mut rng, 6))).collect();
    let trials: Vec<Trial> = models.keys().flat_map(|m| tests.keys().map(move |t| Trial::new(m.clone(), t.clone()))).collect();
    assert_eq!(trials.len(), 200);
    let scorer = PldaScorer::new(&model).unwrap();
    let batched = score_trials(&scorer, &models, &tests, &trials, true).unwrap();
    let serial = score_trials(&scorer, &models, &tests, &trials, false).unwrap();
    assert_eq!(batched, serial);
    for t in &trials {
        let single = score_llr(&model, &models[&t.model_id], &tests[&t.test_id]).unwrap();
        assert_eq!(batched.get(t).unwrap().to_bits(), single.to_bits());
    }
    assert!(score_trials(&scorer, &models, &tests, &[], true).unwrap().is_empty());
}

/// Preconditioned train/eval vectors from a matched-condition corpus.
struct Matched {
    train: (Vec<DVector<f64>>, Vec<String>),
    eval: Vec<(usize, DVector<f64>)>,
}

fn matched_condition(seed: u64) -> Matched {
    let cfg = SynthConfig {
        seed,
        ivec_dim: 30,
        n_speakers: 300,
        sessions_per_speaker: 4,
        speaker_rank: 8,
        channel_rank: 6,
        channel_scale: 1.0,
        language_shift_scale: 0.0,
        ..SynthConfig::default()
    };
    let corpus = synth_corpus(&cfg).unwrap();
    let spk_of = |i: usize| corpus.truth.utterances[i].speaker;
    let (tx, ty): (Vec<_>, Vec<_>) = corpus
        .vectors
        .iter()
        .enumerate()
        .filter(|(i, _)| spk_of(*i) < 250)
        .map(|(_, u)| (u.vector.clone(), u.speaker_id.clone().unwrap()))
        .unzip();
    let chain_cfg = ChainConfig { nap: false, out_dim: 20, ..ChainConfig::default() };
    let (chain, _) = fit_chain(&chain_cfg, &ChainData { nap: (&tx, &ty), center: &tx, rlda: (&tx, &ty) }).unwrap();
    let train = (tx.iter().map(|v| apply_chain(&chain, v).unwrap()).collect(), ty);
    let eval = corpus
        .vectors
        .iter()
        .enumerate()
        .filter(|(i, _)| spk_of(*i) >= 250)
        .map(|(i, u)| (spk_of(i), apply_chain(&chain, &u.vector).unwrap()))
        .collect();
    Matched { train, eval }
}

#[test]
fn plda_beats_cosine_on_matched_data() {
    let data = matched_condition(70);
    let cfg = PldaTrainConfig { speaker_rank: 10, channel_rank: 6, n_iters: 10, ..Default::default() };
    let (model, _) = train_plda(&data.train.0, &data.train.1, &cfg).unwrap();
    let scorer = PldaScorer::new(&model).unwrap();
    let (mut p_tar, mut p_non, mut c_tar, mut c_non) = (vec![], vec![], vec![], vec![]);
    for (i, (si, e)) in data.eval.iter().enumerate() {
        let m = SpeakerModel { model_id: format!("{i}"), embedding: e.clone(), n_sessions: 1 };
        for (sj, t) in data.eval.iter().skip(i + 1) {
            let p = scorer.score(e, t).unwrap();
            let c = cosine_score(&m, t);
            if si == sj { p_tar.push(p); c_tar.push(c) } else { p_non.push(p); c_non.push(c) }
        }
    }
    assert!(p_tar.len() + p_non.len() >= 1000);
    let (pe, ce) = (eer(&p_tar, &p_non), eer(&c_tar, &c_non));
    assert!(pe <= ce, "plda {pe} cosine {ce}");
}

#[test]
fn zero_speaker_rank_gives_chance_eer() {
    let data = matched_condition(71);
    let cfg = PldaTrainConfig { speaker_rank: 0, channel_rank: 6, n_iters: 5, ..Default::default() };
    let (model, _) = train_plda(&data.train.0, &data.train.1, &cfg).unwrap();
    let scorer = PldaScorer::new(&model).unwrap();
    let (mut tar, mut non) = (vec![], vec![]);
    for (i, (si, e)) in data.eval.iter().enumerate() {
        for (sj, t) in data.eval.iter().skip(i + 1) {
            let s = scorer.score(e, t).unwrap();
            if si == sj { tar.push(s) } else { non.push(s) }
        }
    }
    let rate = eer(&tar, &non);
    assert!((rate - 0.5).abs() <= 0.05, "eer {rate}");
}

#[test]
fn averaged_enrollment_is_closer_to_the_speaker() {
    let cfg = SynthConfig { seed: 72, n_speakers: 50, sessions_per_speaker: 3, language_shift_scale: 0.0, channel_scale: 1.0, residual_std: 0.6, ..SynthConfig::default() };
    let corpus = synth_corpus(&cfg).unwrap();
    let unit = |v: &DVector<f64>| v / v.norm();
    let (mut enrolled, mut single) = (0.0, 0.0);
    for s in 0..50 {
        let truth = corpus.truth.speaker_mean(s);
        let sessions: Vec<DVector<f64>> = (0..3).map(|j| unit(&corpus.vectors[s * 3 + j].vector)).collect();
        let model = enroll("m", &sessions).unwrap();
        assert!((model.embedding.norm() - 1.0).abs() < 1e-9);
        assert_eq!(model.n_sessions, 3);
        enrolled += cosine(&model.embedding, &truth);
        single += sessions.iter().map(|v| cosine(v, &truth)).sum::<f64>() / 3.0;
    }
    assert!(enrolled > single, "enrolled {enrolled} single {single}");
}
