//! i-vector preconditioning: nuisance attribute projection, centering,
//! length normalization and regularized LDA, composed into a [`PrecondChain`].

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{cholesky, mean_vector, normalize_column_signs, sym_eigen_desc, symmetrized};
use crate::{Error, Result};

/// Which scatter defines the nuisance directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NapCriterion {
    /// Principal directions of the size-weighted scatter of class means.
    #[default]
    BetweenClass,
    /// Principal directions of the pooled within-class scatter.
    WithinClass,
}

/// Projection `P = I − B·Bᵀ` removing the span of the orthonormal basis `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NapProjection {
    /// d × k, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Leading scatter eigenvalues, for diagnostics.
    pub eigenvalues: DVector<f64>,
}

impl NapProjection {
    pub fn corank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.basis * (self.basis.transpose() * v)
    }
}

/// Fit NAP on class-labelled vectors (classes are typically languages).
/// Returns the projection and any warnings.
pub fn fit_nap<S: AsRef<str>>(
    vectors: &[DVector<f64>],
    classes: &[S],
    corank: usize,
    criterion: NapCriterion,
) -> Result<(NapProjection, Vec<String>)> {
    if vectors.len() != classes.len() {
        return Err(Error::Shape("nap: vectors and labels differ in length".into()));
    }
    let groups = group_by_label(vectors, classes);
    if groups.len() < 2 {
        return Err(Error::Input("nap: at least two classes are required".into()));
    }
    let d = vectors[0].len();
    if corank >= d {
        return Err(Error::Config(format!("nap: corank {corank} must be below dimension {d}")));
    }
    let n = vectors.len() as f64;
    let scatter = match criterion {
        NapCriterion::BetweenClass => {
            let global = mean_vector(vectors).unwrap();
            let mut s = DMatrix::zeros(d, d);
            for members in groups.values() {
                let m = class_mean(members);
                let diff = m - &global;
                s += &diff * diff.transpose() * members.len() as f64;
            }
            s / n
        }
        NapCriterion::WithinClass => {
            let mut s = DMatrix::zeros(d, d);
            for members in groups.values() {
                let m = class_mean(members);
                for v in members {
                    let diff = *v - &m;
                    s += &diff * diff.transpose();
                }
            }
            s / n
        }
    };
    let (values, vectors_) = sym_eigen_desc(&scatter);
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    let nonzero = values.iter().filter(|&&l| l > 1e-12 * max && l > 0.0).count();
    let mut warnings = Vec::new();
    let k = if corank > nonzero {
        let msg = format!("nap: corank {corank} exceeds {nonzero} nonzero scatter eigenvalues; clamped");
        log::warn!("{msg}");
        warnings.push(msg);
        nonzero
    } else {
        corank
    };
    Ok((
        NapProjection {
            basis: vectors_.columns(0, k).into_owned(),
            eigenvalues: values.rows(0, k).into_owned(),
        },
        warnings,
    ))
}

fn group_by_label<'a, S: AsRef<str>>(
    vectors: &'a [DVector<f64>],
    labels: &'a [S],
) -> BTreeMap<&'a str, Vec<&'a DVector<f64>>> {
    let mut groups: BTreeMap<&str, Vec<&DVector<f64>>> = BTreeMap::new();
    for (v, l) in vectors.iter().zip(labels) {
        groups.entry(l.as_ref()).or_default().push(v);
    }
    groups
}

fn class_mean(members: &[&DVector<f64>]) -> DVector<f64> {
    let mut acc = DVector::zeros(members[0].len());
    for v in members {
        acc += *v;
    }
    acc / members.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterTransform {
    pub mean: DVector<f64>,
}

impl CenterTransform {
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.mean
    }
}

pub fn fit_center(vectors: &[DVector<f64>]) -> Result<CenterTransform> {
    let mean = mean_vector(vectors).ok_or_else(|| Error::Input("center: no vectors".into()))?;
    Ok(CenterTransform { mean })
}

pub fn length_normalize(v: &DVector<f64>) -> Result<DVector<f64>> {
    let norm = v.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Numerical(
            "length normalization of a zero or non-finite vector".into(),
        ));
    }
    Ok(v / norm)
}

/// Projection onto the leading generalized eigenvectors of `(S_b, S_w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RldaTransform {
    /// d × m
    pub projection: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub eigenvalues: DVector<f64>,
}

impl RldaTransform {
    pub fn identity(d: usize) -> Self {
        Self {
            projection: DMatrix::identity(d, d),
            alpha: 0.0,
            beta: 0.0,
            eigenvalues: DVector::from_element(d, 1.0),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.projection.ncols()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.projection.transpose() * v
    }
}

/// Regularized within/between scatter:
///
/// `S_w = αI + (1/S) Σ_s (1/N_s) Σ_n (w − w̄_s)(w − w̄_s)ᵀ`
/// `S_b = βI + (1/S) Σ_s (w̄_s − w̄)(w̄_s − w̄)ᵀ`
///
/// with `w̄` the mean over all samples.
pub fn rlda_scatter<S: AsRef<str>>(
    vectors: &[DVector<f64>],
    labels: &[S],
    alpha: f64,
    beta: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if vectors.len() != labels.len() || vectors.is_empty() {
        return Err(Error::Shape("rlda: vectors and labels must be nonempty and aligned".into()));
    }
    let d = vectors[0].len();
    let groups = group_by_label(vectors, labels);
    let s = groups.len() as f64;
    let global = mean_vector(vectors).unwrap();
    let mut sw = DMatrix::zeros(d, d);
    let mut sb = DMatrix::zeros(d, d);
    for members in groups.values() {
        let m = class_mean(members);
        let mut within = DMatrix::zeros(d, d);
        for v in members {
            let diff = *v - &m;
            within += &diff * diff.transpose();
        }
        sw += within / members.len() as f64;
        let diff = m - &global;
        sb += &diff * diff.transpose();
    }
    let eye = DMatrix::<f64>::identity(d, d);
    Ok((
        symmetrized(&(sw / s + &eye * alpha)),
        symmetrized(&(sb / s + eye * beta)),
    ))
}

/// Fit regularized LDA. `alpha = beta = 0` is classical LDA with the
/// class-averaged scatter matrices.
pub fn fit_rlda<S: AsRef<str>>(
    vectors: &[DVector<f64>],
    labels: &[S],
    alpha: f64,
    beta: f64,
    out_dim: usize,
) -> Result<RldaTransform> {
    if !(alpha >= 0.0 && beta >= 0.0) {
        return Err(Error::Config("rlda: alpha and beta must be >= 0".into()));
    }
    let n_classes = group_by_label(vectors, labels).len();
    if n_classes < out_dim + 1 {
        return Err(Error::Input(format!(
            "rlda: {n_classes} classes cannot support output dimension {out_dim}"
        )));
    }
    let (sw, sb) = rlda_scatter(vectors, labels, alpha, beta)?;
    let d = sw.nrows();
    if out_dim == 0 || out_dim > d {
        return Err(Error::Config(format!("rlda: out_dim must be in 1..={d}")));
    }
    let chol = cholesky(&sw, "within-class scatter").map_err(|_| {
        Error::Numerical(format!(
            "rlda: within-class scatter is singular (alpha = {alpha}); use alpha > 0"
        ))
    })?;
    let l = chol.l();
    // M = L⁻¹ S_b L⁻ᵀ
    let linv_sb = l
        .solve_lower_triangular(&sb)
        .ok_or_else(|| Error::Numerical("rlda: triangular solve failed".into()))?;
    let m = l
        .solve_lower_triangular(&linv_sb.transpose())
        .ok_or_else(|| Error::Numerical("rlda: triangular solve failed".into()))?;
    let (values, q) = sym_eigen_desc(&symmetrized(&m));
    let top = q.columns(0, out_dim).into_owned();
    let mut projection = l
        .transpose()
        .solve_upper_triangular(&top)
        .ok_or_else(|| Error::Numerical("rlda: triangular solve failed".into()))?;
    normalize_column_signs(&mut projection);
    Ok(RldaTransform {
        projection,
        alpha,
        beta,
        eigenvalues: values.rows(0, out_dim).into_owned(),
    })
}

/// `[NAP?] → center → length-norm → RLDA → [length-norm]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecondChain {
    pub nap: Option<NapProjection>,
    pub center: CenterTransform,
    pub rlda: RldaTransform,
    pub final_length_norm: bool,
}

impl PrecondChain {
    pub fn in_dim(&self) -> usize {
        self.center.mean.len()
    }

    pub fn out_dim(&self) -> usize {
        self.rlda.out_dim()
    }

    fn check_dims(&self) -> Result<()> {
        let d = self.in_dim();
        if self.nap.as_ref().is_some_and(|n| n.dim() != d) || self.rlda.in_dim() != d {
            return Err(Error::Shape("preconditioning chain dimensions disagree".into()));
        }
        Ok(())
    }

    /// Everything up to (and excluding) RLDA.
    pub fn apply_front(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.in_dim() {
            return Err(Error::Shape(format!(
                "vector of dim {} into chain expecting {}",
                v.len(),
                self.in_dim()
            )));
        }
        let v = match &self.nap {
            Some(nap) => nap.apply(v),
            None => v.clone(),
        };
        length_normalize(&self.center.apply(&v))
    }

    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dims()?;
        let out = self.rlda.apply(&self.apply_front(v)?);
        if self.final_length_norm {
            length_normalize(&out)
        } else {
            Ok(out)
        }
    }
}

pub fn apply_chain(chain: &PrecondChain, v: &DVector<f64>) -> Result<DVector<f64>> {
    chain.apply(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub nap: bool,
    pub nap_corank: Option<usize>,
    pub nap_criterion: NapCriterion,
    pub alpha: f64,
    pub beta: f64,
    pub out_dim: usize,
    pub final_length_norm: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            nap: true,
            nap_corank: None,
            nap_criterion: NapCriterion::BetweenClass,
            alpha: 0.001,
            beta: 0.01,
            out_dim: 300,
            final_length_norm: true,
        }
    }
}

/// Training populations for each stage of the chain. All vectors are raw
/// (un-preconditioned) i-vectors.
pub struct ChainData<'a> {
    pub nap: (&'a [DVector<f64>], &'a [String]),
    pub center: &'a [DVector<f64>],
    pub rlda: (&'a [DVector<f64>], &'a [String]),
}

/// Fit the chain stage by stage, each stage seeing the output of the previous ones.
pub fn fit_chain(cfg: &ChainConfig, data: &ChainData<'_>) -> Result<(PrecondChain, Vec<String>)> {
    let mut warnings = Vec::new();
    let nap = if cfg.nap {
        let n_classes = group_by_label(data.nap.0, data.nap.1).len();
        let corank = cfg
            .nap_corank
            .unwrap_or_else(|| n_classes.saturating_sub(1).min(10));
        let (nap, w) = fit_nap(data.nap.0, data.nap.1, corank, cfg.nap_criterion)?;
        warnings.extend(w);
        Some(nap)
    } else {
        None
    };
    let project = |v: &DVector<f64>| match &nap {
        Some(n) => n.apply(v),
        None => v.clone(),
    };
    let centered_pop: Vec<_> = data.center.iter().map(project).collect();
    let center = fit_center(&centered_pop)?;
    let mut partial = PrecondChain {
        rlda: RldaTransform::identity(center.mean.len()),
        nap,
        center,
        final_length_norm: cfg.final_length_norm,
    };
    let rlda_input = data
        .rlda
        .0
        .iter()
        .map(|v| partial.apply_front(v))
        .collect::<Result<Vec<_>>>()?;
    partial.rlda = fit_rlda(&rlda_input, data.rlda.1, cfg.alpha, cfg.beta, cfg.out_dim)?;
    Ok((partial, warnings))
}
