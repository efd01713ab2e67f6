//! Detection error rates, normalized detection cost, C_Primary, EER and DET points.
//!
//! Decision rule: a trial is accepted iff `score >= threshold`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::trials::{ScoreSet, TrialKey};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CprimaryConfig {
    pub p_tar_1: f64,
    pub p_tar_2: f64,
    pub c_miss: f64,
    pub c_fa: f64,
    /// Partition-equalized weighting. Not supported; setting it is an error.
    pub equalized: bool,
}

impl Default for CprimaryConfig {
    fn default() -> Self {
        Self {
            p_tar_1: 0.01,
            p_tar_2: 0.005,
            c_miss: 1.0,
            c_fa: 1.0,
            equalized: false,
        }
    }
}

impl CprimaryConfig {
    pub fn validate(&self) -> Result<()> {
        for p in [self.p_tar_1, self.p_tar_2] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Config(format!("metrics: target prior {p} outside (0, 1)")));
            }
        }
        if !(self.c_miss > 0.0 && self.c_fa > 0.0) || !self.c_miss.is_finite() || !self.c_fa.is_finite() {
            return Err(Error::Config("metrics: costs must be positive and finite".into()));
        }
        if self.equalized {
            return Err(Error::Unsupported(
                "metrics: equalized partition weighting is not defined; only pooled (unequalized) costs are available"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn beta(&self, p_tar: f64) -> f64 {
        beta(p_tar, self.c_miss, self.c_fa)
    }
}

/// `c_fa (1 - p_tar) / (c_miss p_tar)`.
pub fn beta(p_tar: f64, c_miss: f64, c_fa: f64) -> f64 {
    c_fa * (1.0 - p_tar) / (c_miss * p_tar)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub p_miss: f64,
    pub p_fa: f64,
    pub threshold: f64,
}

/// `p_miss + (1 - p_tar) / p_tar * p_fa`.
pub fn c_norm(rates: &ErrorRates, p_tar: f64) -> f64 {
    rates.p_miss + (1.0 - p_tar) / p_tar * rates.p_fa
}

fn c_norm_beta(p_miss: f64, p_fa: f64, beta: f64) -> f64 {
    p_miss + beta * p_fa
}

fn check_classes(tar: &[f64], non: &[f64]) -> Result<()> {
    if tar.is_empty() || non.is_empty() {
        return Err(Error::Input(format!(
            "metrics: need at least one target and one nontarget (got {} and {})",
            tar.len(),
            non.len()
        )));
    }
    Ok(())
}

pub fn rates_from(tar: &[f64], non: &[f64], threshold: f64) -> Result<ErrorRates> {
    check_classes(tar, non)?;
    let misses = tar.iter().filter(|&&s| s < threshold).count();
    let fas = non.iter().filter(|&&s| s >= threshold).count();
    Ok(ErrorRates {
        p_miss: misses as f64 / tar.len() as f64,
        p_fa: fas as f64 / non.len() as f64,
        threshold,
    })
}

pub fn error_rates_at(scores: &ScoreSet, key: &TrialKey, threshold: f64) -> Result<ErrorRates> {
    let (tar, non) = scores.split_by_key(key)?;
    rates_from(&tar, &non, threshold)
}

/// Operating point on the DET staircase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub threshold: f64,
    pub p_fa: f64,
    pub p_miss: f64,
}

/// Every distinct operating point, ordered by rising threshold. The first
/// point is at `-inf` (everything accepted), the last at `+inf`; the others
/// sit at midpoints between adjacent distinct scores.
#[derive(Debug, Clone)]
pub struct Staircase {
    pub n_targets: usize,
    pub n_nontargets: usize,
    points: Vec<(f64, usize, usize)>,
}

impl Staircase {
    pub fn new(tar: &[f64], non: &[f64]) -> Result<Self> {
        check_classes(tar, non)?;
        if tar.iter().chain(non).any(|s| !s.is_finite()) {
            return Err(Error::Input("metrics: scores must be finite".into()));
        }
        let mut all: Vec<(f64, bool)> = tar
            .iter()
            .map(|&s| (s, true))
            .chain(non.iter().map(|&s| (s, false)))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut misses = 0usize;
        let mut fas = non.len();
        let mut points = vec![(f64::NEG_INFINITY, misses, fas)];
        let mut i = 0;
        while i < all.len() {
            let v = all[i].0;
            while i < all.len() && all[i].0 == v {
                if all[i].1 {
                    misses += 1;
                } else {
                    fas -= 1;
                }
                i += 1;
            }
            let threshold = if i < all.len() {
                v + 0.5 * (all[i].0 - v)
            } else {
                f64::INFINITY
            };
            points.push((threshold, misses, fas));
        }
        Ok(Self {
            n_targets: tar.len(),
            n_nontargets: non.len(),
            points,
        })
    }

    pub fn points(&self) -> Vec<DetPoint> {
        self.points
            .iter()
            .map(|&(threshold, m, f)| DetPoint {
                threshold,
                p_fa: f as f64 / self.n_nontargets as f64,
                p_miss: m as f64 / self.n_targets as f64,
            })
            .collect()
    }

    /// Minimum normalized cost for the given beta and the threshold reaching it
    /// (first one in threshold order on ties).
    pub fn min_c_norm(&self, beta: f64) -> (f64, f64) {
        let nt = self.n_targets as f64;
        let nn = self.n_nontargets as f64;
        let mut best = (f64::INFINITY, f64::NEG_INFINITY);
        for &(thr, m, f) in &self.points {
            let c = c_norm_beta(m as f64 / nt, f as f64 / nn, beta);
            if c < best.0 {
                best = (c, thr);
            }
        }
        best
    }

    /// Equal error rate, interpolated linearly between the two operating
    /// points where `p_fa - p_miss` changes sign.
    pub fn eer(&self) -> f64 {
        let pts = self.points();
        let mut prev = pts[0];
        for p in &pts[1..] {
            let d = p.p_fa - p.p_miss;
            if d <= 0.0 {
                if d == 0.0 {
                    return p.p_miss;
                }
                let d_prev = prev.p_fa - prev.p_miss;
                let t = d_prev / (d_prev - d);
                return prev.p_miss + t * (p.p_miss - prev.p_miss);
            }
            prev = *p;
        }
        // Unreachable: the last point always has p_fa = 0, p_miss = 1.
        prev.p_miss
    }
}

pub fn eer_from(tar: &[f64], non: &[f64]) -> Result<f64> {
    Ok(Staircase::new(tar, non)?.eer())
}

pub fn eer(scores: &ScoreSet, key: &TrialKey) -> Result<f64> {
    let (tar, non) = scores.split_by_key(key)?;
    eer_from(&tar, &non)
}

pub fn det_points(scores: &ScoreSet, key: &TrialKey) -> Result<Vec<DetPoint>> {
    let (tar, non) = scores.split_by_key(key)?;
    Ok(Staircase::new(&tar, &non)?.points())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCost {
    pub p_tar: f64,
    pub beta: f64,
    pub act_threshold: f64,
    pub act_rates: ErrorRates,
    pub act_c_norm: f64,
    pub min_threshold: f64,
    pub min_c_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CprimaryReport {
    pub n_targets: usize,
    pub n_nontargets: usize,
    pub eer: f64,
    pub min_c_primary: f64,
    pub act_c_primary: f64,
    pub points: Vec<PointCost>,
}

pub fn c_primary_from(tar: &[f64], non: &[f64], cfg: &CprimaryConfig) -> Result<CprimaryReport> {
    cfg.validate()?;
    let stairs = Staircase::new(tar, non)?;
    let mut points = Vec::with_capacity(2);
    for p_tar in [cfg.p_tar_1, cfg.p_tar_2] {
        let beta = cfg.beta(p_tar);
        let act_threshold = beta.ln();
        let act_rates = rates_from(tar, non, act_threshold)?;
        let act_c_norm = c_norm_beta(act_rates.p_miss, act_rates.p_fa, beta);
        let (min_c_norm, min_threshold) = stairs.min_c_norm(beta);
        points.push(PointCost {
            p_tar,
            beta,
            act_threshold,
            act_rates,
            act_c_norm,
            min_threshold,
            min_c_norm,
        });
    }
    Ok(CprimaryReport {
        n_targets: tar.len(),
        n_nontargets: non.len(),
        eer: stairs.eer(),
        min_c_primary: 0.5 * (points[0].min_c_norm + points[1].min_c_norm),
        act_c_primary: 0.5 * (points[0].act_c_norm + points[1].act_c_norm),
        points,
    })
}

/// Scores for trials outside the key are ignored.
pub fn c_primary(scores: &ScoreSet, key: &TrialKey, cfg: &CprimaryConfig) -> Result<CprimaryReport> {
    cfg.validate()?;
    let (tar, non) = scores.split_by_key(key)?;
    c_primary_from(&tar, &non, cfg)
}

impl CprimaryReport {
    /// Single table row, in the column order of [`CprimaryReport::header`].
    pub fn row(&self, name: &str) -> String {
        format!(
            "{:<24} {:>8.2} {:>16.4} {:>16.4}",
            name,
            100.0 * self.eer,
            self.min_c_primary,
            self.act_c_primary
        )
    }

    pub fn header() -> String {
        format!("{:<24} {:>8} {:>16} {:>16}", "system", "EER[%]", "min C_Primary", "act C_Primary")
    }
}

impl fmt::Display for CprimaryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trials\t{} target\t{} nontarget", self.n_targets, self.n_nontargets)?;
        writeln!(f, "EER[%]\t{:.6}", 100.0 * self.eer)?;
        writeln!(f, "min C_Primary\t{:.6}", self.min_c_primary)?;
        writeln!(f, "act C_Primary\t{:.6}", self.act_c_primary)?;
        writeln!(f, "p_tar\tbeta\tmin C_Norm\tact C_Norm\tact threshold\tact P_miss\tact P_fa")?;
        for p in &self.points {
            writeln!(
                f,
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                p.p_tar, p.beta, p.min_c_norm, p.act_c_norm, p.act_threshold, p.act_rates.p_miss, p.act_rates.p_fa
            )?;
        }
        Ok(())
    }
}
