//! Speaker-verification back-end built around i-vectors.
//!
//! The crate covers the full scoring chain:
//!
//! - [`synth`]: deterministic synthetic corpora with speaker, channel and
//!   language factors, plus acoustic-like frames for the front-end.
//! - [`frontend`]: diagonal GMM-UBM training, relevance-MAP mean adaptation,
//!   Baum-Welch statistics, total-variability training and i-vector extraction.
//! - [`precondition`]: NAP, centering, length normalization and regularized LDA.
//! - [`plda`]: two-subspace PLDA training, enrollment and LLR scoring.
//! - [`scorenorm`]: trial-specific and classic s-norm.
//! - [`metrics`]: error rates, C_Norm / C_Primary, EER and DET points.
//! - [`fusion`]: prior-weighted logistic-regression fusion and calibration.

pub mod error;
pub mod frontend;
pub mod fusion;
pub mod linalg;
pub mod metrics;
pub mod plda;
pub mod precondition;
pub mod scorenorm;
pub mod synth;
pub mod trials;

pub use error::{Error, Result};
pub use trials::{KeyEntry, ScoreSet, Trial, TrialKey};

/// Objective values recorded by an iterative trainer, one per evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmTrace {
    pub objective: Vec<f64>,
    pub warnings: Vec<String>,
}

impl EmTrace {
    /// True when every step satisfies `next >= prev - rel_tol * |prev|`.
    pub fn is_nondecreasing(&self, rel_tol: f64) -> bool {
        self.objective
            .windows(2)
            .all(|w| w[1] >= w[0] - rel_tol * w[0].abs().max(1.0))
    }

    pub(crate) fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }
}
