//! Run manifest written next to the artifacts of every `run`.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::container::SECTION_VERSIONS;
use crate::error::{CliError, CliResult};
use crate::formats::write_bytes;

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    /// `system/training-set` for per-system stages.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub stage: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    pub error: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub profile: String,
    pub config_hash: String,
    pub artifact_versions: Vec<(String, u32)>,
    pub stages: Vec<StageTiming>,
    pub warnings: Vec<String>,
    /// True when the emitted per-system scores are s-normalized.
    pub normalized: bool,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
}

/// SHA-256 of the canonical TOML rendering of a resolved config.
pub fn config_hash(cfg: &PipelineConfig) -> String {
    let digest = Sha256::digest(cfg.to_toml().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            profile: format!("{:?}", cfg.profile).to_lowercase(),
            config_hash: config_hash(cfg),
            artifact_versions: SECTION_VERSIONS.iter().map(|(n, v)| (n.to_string(), *v)).collect(),
            stages: Vec::new(),
            warnings: Vec::new(),
            normalized: false,
            status: "running".into(),
            failure: None,
        }
    }

    /// Run `f`, recording its wall time under `stage`.
    pub fn time<T>(&mut self, stage: &str, scope: Option<&str>, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
        let start = Instant::now();
        log::info!("stage {stage}{}", scope.map(|s| format!(" [{s}]")).unwrap_or_default());
        let out = f();
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            scope: scope.map(str::to_string),
            seconds: start.elapsed().as_secs_f64(),
        });
        if let Err(e) = &out {
            self.failure = Some(Failure {
                stage: stage.to_string(),
                scope: scope.map(str::to_string),
                error: e.to_string(),
                exit_code: e.exit_code(),
            });
        }
        out
    }

    pub fn warn(&mut self, warnings: impl IntoIterator<Item = String>) {
        for w in warnings {
            log::warn!("{w}");
            self.warnings.push(w);
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_bytes(path, self.to_json().as_bytes())
    }
}

impl From<&CliError> for Failure {
    fn from(e: &CliError) -> Self {
        Failure {
            stage: "run".into(),
            scope: None,
            error: e.to_string(),
            exit_code: e.exit_code(),
        }
    }
}
