use ivec_core::metrics::{self, c_norm, c_primary, CprimaryConfig, ErrorRates, Staircase};
use ivec_core::{KeyEntry, ScoreSet, Trial, TrialKey};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Counts every trial against every candidate threshold.
struct Sweep {
    rows: Vec<(f64, f64)>,
}

impl Sweep {
    fn new(tar: &[f64], non: &[f64]) -> Self {
        let mut distinct: Vec<f64> = tar.iter().chain(non).copied().collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let mut thresholds = vec![f64::NEG_INFINITY];
        for w in distinct.windows(2) {
            thresholds.push((w[0] + w[1]) / 2.0);
        }
        thresholds.push(f64::INFINITY);
        let rows = thresholds
            .iter()
            .map(|&th| {
                let miss = tar.iter().filter(|&&s| s < th).count() as f64 / tar.len() as f64;
                let fa = non.iter().filter(|&&s| s >= th).count() as f64 / non.len() as f64;
                (fa, miss)
            })
            .collect();
        Self { rows }
    }

    fn min_cost(&self, p_tar: f64) -> f64 {
        self.rows
            .iter()
            .map(|&(fa, miss)| miss + (1.0 - p_tar) / p_tar * fa)
            .fold(f64::INFINITY, f64::min)
    }

    fn eer(&self) -> f64 {
        for i in 1..self.rows.len() {
            let (fa0, m0) = self.rows[i - 1];
            let (fa1, m1) = self.rows[i];
            if fa0 > m0 && fa1 <= m1 {
                let t = (fa0 - m0) / ((fa0 - m0) - (fa1 - m1));
                return m0 + t * (m1 - m0);
            }
        }
        unreachable!()
    }
}

fn random_scores(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(200..=2000);
    let n_tar = rng.random_range(10..n / 2);
    let sep: f64 = rng.random_range(0.0..4.0);
    let quantize = rng.random_bool(0.3);
    let mut draw = |shift: f64| {
        let x: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) + shift;
        if quantize { (x * 4.0).round() / 4.0 } else { x }
    };
    let tar = (0..n_tar).map(|_| draw(sep)).collect();
    let non = (0..n - n_tar).map(|_| draw(0.0)).collect();
    (tar, non)
}

fn as_set(tar: &[f64], non: &[f64]) -> (ScoreSet, TrialKey) {
    let mut scores = ScoreSet::new();
    let mut entries = Vec::new();
    for (i, &s) in tar.iter().chain(non).enumerate() {
        let trial = Trial::new(format!("m{:05}", i), "t");
        scores.insert(trial.clone(), s).unwrap();
        entries.push(KeyEntry { trial, is_target: i < tar.len() });
    }
    (scores, TrialKey::new(entries).unwrap())
}

#[test]
fn sweep_oracle_agreement_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = CprimaryConfig::default();
    for _ in 0..50 {
        let (tar, non) = random_scores(&mut rng);
        let oracle = Sweep::new(&tar, &non);
        let (scores, key) = as_set(&tar, &non);
        let rep = c_primary(&scores, &key, &cfg).unwrap();
        assert!((rep.eer - oracle.eer()).abs() < 1e-10);
        assert!((rep.points[0].min_c_norm - oracle.min_cost(0.01)).abs() < 1e-10);
        assert!((rep.points[1].min_c_norm - oracle.min_cost(0.005)).abs() < 1e-10);
        let want = 0.5 * (oracle.min_cost(0.01) + oracle.min_cost(0.005));
        assert!((rep.min_c_primary - want).abs() < 1e-10);
        assert!(rep.min_c_primary <= rep.act_c_primary);
    }
}

#[test]
fn det_staircase_matches_per_threshold_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (tar, non) = random_scores(&mut rng);
    let (scores, key) = as_set(&tar, &non);
    let points = metrics::det_points(&scores, &key).unwrap();
    let oracle = Sweep::new(&tar, &non);
    assert_eq!(points.len(), oracle.rows.len());
    for (p, &(fa, miss)) in points.iter().zip(&oracle.rows) {
        assert_eq!((p.p_fa, p.p_miss), (fa, miss));
        let direct = metrics::error_rates_at(&scores, &key, p.threshold).unwrap();
        assert_eq!((direct.p_fa, direct.p_miss), (fa, miss));
    }
    let mut distinct: Vec<f64> = tar.iter().chain(&non).copied().collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    assert!(points.len() <= distinct.len() + 1);
}

#[test]
fn hundred_scores_eer_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let tar: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..2.0)).collect();
    let non: Vec<f64> = (0..50).map(|_| rng.random_range(-2.0..1.0)).collect();
    let got = metrics::eer_from(&tar, &non).unwrap();
    assert!((got - Sweep::new(&tar, &non).eer()).abs() < 1e-10);
}

#[test]
fn missing_trials_are_listed() {
    let (scores, _) = as_set(&[1.0], &[0.0]);
    let key = TrialKey::new(vec![
        KeyEntry { trial: Trial::new("m00000", "t"), is_target: true },
        KeyEntry { trial: Trial::new("ghost", "t"), is_target: false },
    ])
    .unwrap();
    match metrics::eer(&scores, &key) {
        Err(ivec_core::Error::MissingTrials(m)) => assert_eq!(m, vec![("ghost".to_string(), "t".to_string())]),
        other => panic!("unexpected {other:?}"),
    }
}

fn small_sets() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    let score = (-40i32..40).prop_map(|k| k as f64 / 8.0);
    (
        proptest::collection::vec(score.clone(), 1..60),
        proptest::collection::vec(score, 1..60),
    )
}

proptest! {
    #[test]
    fn min_never_exceeds_actual((tar, non) in small_sets()) {
        let rep = metrics::c_primary_from(&tar, &non, &CprimaryConfig::default()).unwrap();
        prop_assert!(rep.min_c_primary <= rep.act_c_primary);
        prop_assert!(rep.eer >= 0.0 && rep.eer <= 1.0);
    }

    #[test]
    fn order_statistics_invariance((tar, non) in small_sets(), shift in -3i32..3) {
        let cfg = CprimaryConfig::default();
        let base = metrics::c_primary_from(&tar, &non, &cfg).unwrap();
        let transforms: [&dyn Fn(f64) -> f64; 3] = [
            &|x| x + shift as f64,
            &|x| 2.0 * x - 3.0,
            &f64::exp,
        ];
        for f in transforms {
            let t: Vec<f64> = tar.iter().map(|&x| f(x)).collect();
            let n: Vec<f64> = non.iter().map(|&x| f(x)).collect();
            let rep = metrics::c_primary_from(&t, &n, &cfg).unwrap();
            prop_assert_eq!(rep.min_c_primary, base.min_c_primary);
            prop_assert_eq!(rep.eer, base.eer);
        }
    }

    #[test]
    fn c_norm_is_linear(p_miss in 0.0f64..1.0, p_fa in 0.0f64..1.0, p_tar in 0.001f64..0.999) {
        let r = ErrorRates { p_miss, p_fa, threshold: 0.0 };
        let want = p_miss + (1.0 - p_tar) / p_tar * p_fa;
        prop_assert!((c_norm(&r, p_tar) - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn staircase_is_monotone((tar, non) in small_sets()) {
        let pts = Staircase::new(&tar, &non).unwrap().points();
        prop_assert_eq!((pts[0].p_fa, pts[0].p_miss), (1.0, 0.0));
        for w in pts.windows(2) {
            prop_assert!(w[1].p_fa <= w[0].p_fa);
            prop_assert!(w[1].p_miss >= w[0].p_miss);
            prop_assert!(w[1].threshold > w[0].threshold);
        }
    }
}
