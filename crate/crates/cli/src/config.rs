//! Pipeline configuration: profile defaults, TOML file, dotted overrides and
//! validation of every stage's preconditions before any compute.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ivec_core::fusion::FusionConfig;
use ivec_core::metrics::CprimaryConfig;
use ivec_core::plda::PldaTrainConfig;
use ivec_core::precondition::ChainConfig;
use ivec_core::synth::{SplitSpec, SynthConfig};
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::error::{CliError, CliResult};
use crate::recipe::SnormSettings;

pub const PROFILE_ENV: &str = "IVECKIT_PROFILE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Published hyperparameters; far beyond desk-scale runtimes.
    Paper,
    #[default]
    Desk,
}

impl std::str::FromStr for Profile {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(CliError::Config(format!("unknown profile '{other}' (paper|desk)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Synth,
    Ubm,
    Tv,
    Extract,
    Precondition,
    Plda,
    Score,
    Snorm,
    Evaluate,
    Fuse,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Synth,
        Stage::Ubm,
        Stage::Tv,
        Stage::Extract,
        Stage::Precondition,
        Stage::Plda,
        Stage::Score,
        Stage::Snorm,
        Stage::Evaluate,
        Stage::Fuse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ubm => "ubm",
            Stage::Tv => "tv",
            Stage::Extract => "extract",
            Stage::Precondition => "precondition",
            Stage::Plda => "plda",
            Stage::Score => "score",
            Stage::Snorm => "snorm",
            Stage::Evaluate => "evaluate",
            Stage::Fuse => "fuse",
        }
    }

    pub fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Synth => &[],
            Stage::Ubm => &[Stage::Synth],
            Stage::Tv => &[Stage::Ubm],
            Stage::Extract => &[Stage::Tv],
            Stage::Precondition => &[Stage::Synth],
            Stage::Plda => &[Stage::Precondition],
            Stage::Score => &[Stage::Plda],
            Stage::Snorm => &[Stage::Score],
            Stage::Evaluate => &[Stage::Score],
            Stage::Fuse => &[Stage::Score],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchiveFormat {
    #[default]
    Text,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub out_dir: PathBuf,
    pub archive_format: ArchiveFormat,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("ivec-run"),
            archive_format: ArchiveFormat::Text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UbmConfig {
    pub n_components: usize,
    pub n_iters: usize,
    pub variance_floor: f64,
    pub relevance_factor: f64,
    /// Uniform random selection of primary-train utterances for UBM training.
    pub max_utts: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TvConfig {
    pub rank: usize,
    pub n_iters: usize,
    pub init_scale: f64,
    pub min_divergence: bool,
    /// Uniform random selection of training utterances for TV training.
    pub max_utts: usize,
    pub seed: u64,
}

impl Default for UbmConfig {
    fn default() -> Self {
        PipelineConfig::for_profile(Profile::Desk).ubm
    }
}

impl Default for TvConfig {
    fn default() -> Self {
        PipelineConfig::for_profile(Profile::Desk).tv
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub name: String,
    /// Extract i-vectors from synthetic frames instead of using the corpus vectors.
    #[serde(default)]
    pub frontend: bool,
    /// Frame generator ("feature type") for front-end systems.
    #[serde(default)]
    pub frame_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub profile: Profile,
    pub seed: u64,
    pub stages: Vec<Stage>,
    pub io: IoConfig,
    pub synth: SynthConfig,
    pub split: SplitSpec,
    pub ubm: UbmConfig,
    pub tv: TvConfig,
    pub precondition: ChainConfig,
    pub plda: PldaTrainConfig,
    pub snorm: SnormSettings,
    pub metrics: CprimaryConfig,
    pub fusion: FusionConfig,
    pub systems: Vec<SystemSpec>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Desk)
    }
}

impl PipelineConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let seed = 1;
        let systems = vec![
            SystemSpec {
                name: "direct".into(),
                frontend: false,
                frame_seed: 0,
            },
            SystemSpec {
                name: "frames_a".into(),
                frontend: true,
                frame_seed: 1,
            },
            SystemSpec {
                name: "frames_b".into(),
                frontend: true,
                frame_seed: 2,
            },
        ];
        let split = SplitSpec {
            seed,
            ..SplitSpec::default()
        };
        match profile {
            Profile::Desk => Self {
                profile,
                seed,
                stages: Stage::ALL.to_vec(),
                io: IoConfig::default(),
                synth: SynthConfig {
                    seed,
                    ivec_dim: 60,
                    n_speakers: 900,
                    sessions_per_speaker: 4,
                    speaker_rank: 20,
                    channel_rank: 10,
                    n_languages: 6,
                    language_shift_scale: 20.0,
                    residual_std: 1.0,
                    speaker_scale: 1.0,
                    channel_scale: 1.0,
                    feature_dim: 8,
                    frames_per_utt: 200,
                    frame_components: 8,
                    frame_loading_scale: 0.3,
                    frame_seed: 0,
                },
                split,
                ubm: UbmConfig {
                    n_components: 16,
                    n_iters: 8,
                    variance_floor: 1e-4,
                    relevance_factor: 512.0,
                    max_utts: 1000,
                    seed,
                },
                tv: TvConfig {
                    rank: 40,
                    n_iters: 5,
                    init_scale: 0.5,
                    min_divergence: true,
                    max_utts: 8000,
                    seed,
                },
                precondition: ChainConfig {
                    out_dim: 40,
                    ..ChainConfig::default()
                },
                plda: PldaTrainConfig {
                    speaker_rank: 25,
                    channel_rank: 15,
                    n_iters: 10,
                    seed,
                    ..PldaTrainConfig::default()
                },
                snorm: SnormSettings::default(),
                metrics: CprimaryConfig::default(),
                fusion: FusionConfig::default(),
                systems,
            },
            Profile::Paper => Self {
                profile,
                seed,
                stages: Stage::ALL.to_vec(),
                io: IoConfig::default(),
                synth: SynthConfig {
                    seed,
                    ivec_dim: 600,
                    n_speakers: 6000,
                    sessions_per_speaker: 4,
                    speaker_rank: 200,
                    channel_rank: 100,
                    n_languages: 6,
                    language_shift_scale: 60.0,
                    residual_std: 1.0,
                    speaker_scale: 1.0,
                    channel_scale: 1.0,
                    feature_dim: 60,
                    frames_per_utt: 1000,
                    frame_components: 64,
                    frame_loading_scale: 0.3,
                    frame_seed: 0,
                },
                split,
                ubm: UbmConfig {
                    n_components: 2048,
                    n_iters: 10,
                    variance_floor: 1e-4,
                    relevance_factor: 512.0,
                    max_utts: 8000,
                    seed,
                },
                tv: TvConfig {
                    rank: 600,
                    n_iters: 10,
                    init_scale: 0.5,
                    min_divergence: true,
                    max_utts: 8000,
                    seed,
                },
                precondition: ChainConfig::default(),
                plda: PldaTrainConfig {
                    seed,
                    ..PldaTrainConfig::default()
                },
                snorm: SnormSettings {
                    n_nearest: Some(10_000),
                    k_top: Some(5_000),
                    ..SnormSettings::default()
                },
                metrics: CprimaryConfig::default(),
                fusion: FusionConfig::default(),
                systems,
            },
        }
    }

    pub fn has_stage(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    pub fn uses_frontend(&self) -> bool {
        self.systems.iter().any(|s| s.frontend)
    }

    /// Input dimension of the back-end for a system.
    pub fn system_dim(&self, system: &SystemSpec) -> usize {
        if system.frontend {
            self.tv.rank
        } else {
            self.synth.ivec_dim
        }
    }

    /// Check every stage precondition that can be decided from the config alone.
    pub fn validate(&self) -> CliResult<()> {
        let fail = |m: String| Err(CliError::Config(m));
        let stages: BTreeSet<Stage> = self.stages.iter().copied().collect();
        if stages.len() != self.stages.len() {
            return fail("stages: duplicate entries".into());
        }
        if stages.is_empty() {
            return fail("stages: at least one stage is required".into());
        }
        for s in &stages {
            for r in s.requires() {
                if !stages.contains(r) {
                    return fail(format!("stage '{}' requires stage '{}'", s.name(), r.name()));
                }
            }
        }
        let backend = stages.contains(&Stage::Precondition);
        if backend && self.uses_frontend() && !stages.contains(&Stage::Extract) {
            return fail("front-end systems require the ubm, tv and extract stages".into());
        }

        self.synth.validate()?;
        self.split.validate()?;
        let min_sessions = if self.split.three_session_fraction > 0.0 { 4 } else { 2 };
        if self.synth.sessions_per_speaker < min_sessions {
            return fail(format!(
                "split: evaluation speakers need at least {min_sessions} sessions for the requested enrollment"
            ));
        }
        if self.split.eval_languages >= self.synth.n_languages {
            return fail("split: eval_languages must leave at least one primary language".into());
        }

        if stages.contains(&Stage::Ubm) {
            let u = &self.ubm;
            if u.n_components == 0 || u.n_iters == 0 || u.max_utts == 0 {
                return fail("ubm: n_components, n_iters and max_utts must be positive".into());
            }
            if !(u.variance_floor > 0.0) || !u.variance_floor.is_finite() {
                return fail("ubm: variance_floor must be positive and finite".into());
            }
            if !(u.relevance_factor > 0.0) || !u.relevance_factor.is_finite() {
                return fail("ubm: relevance_factor must be positive and finite".into());
            }
            let frames = self.synth.frames_per_utt * u.max_utts.min(self.synth.n_speakers * self.synth.sessions_per_speaker);
            if frames < 10 * u.n_components {
                return fail(format!("ubm: {frames} training frames, need at least 10 per component"));
            }
            if self.synth.frames_per_utt == 0 {
                return fail("synth: frames_per_utt must be positive".into());
            }
        }
        if stages.contains(&Stage::Tv) {
            let t = &self.tv;
            let supervector = self.ubm.n_components * self.synth.feature_dim;
            if t.rank == 0 || t.rank > supervector {
                return fail(format!("tv: rank must be in 1..={supervector} (components x feature_dim)"));
            }
            if t.n_iters == 0 || t.max_utts == 0 {
                return fail("tv: n_iters and max_utts must be positive".into());
            }
            if !(t.init_scale > 0.0) || !t.init_scale.is_finite() {
                return fail("tv: init_scale must be positive and finite".into());
            }
        }

        if backend {
            let c = &self.precondition;
            for (name, v) in [("alpha", c.alpha), ("beta", c.beta)] {
                if !v.is_finite() || v < 0.0 {
                    return fail(format!("precondition: {name} must be finite and >= 0"));
                }
            }
            for sys in &self.systems {
                let d = self.system_dim(sys);
                if c.out_dim == 0 || c.out_dim > d {
                    return fail(format!(
                        "precondition: out_dim {} must be in 1..={d} for system '{}'",
                        c.out_dim, sys.name
                    ));
                }
                if c.nap && c.nap_corank.is_some_and(|k| k == 0 || k >= d) {
                    return fail(format!("precondition: nap_corank must be in 1..{d}"));
                }
            }
        }
        if stages.contains(&Stage::Plda) {
            let p = &self.plda;
            if p.speaker_rank + p.channel_rank > self.precondition.out_dim {
                return fail(format!(
                    "plda: speaker_rank + channel_rank = {} exceeds the preconditioned dimension {}",
                    p.speaker_rank + p.channel_rank,
                    self.precondition.out_dim
                ));
            }
            if !(p.sigma_floor > 0.0) || !p.sigma_floor.is_finite() {
                return fail("plda: sigma_floor must be positive and finite".into());
            }
        }
        self.snorm.validate()?;
        self.metrics.validate()?;
        self.fusion.validate()?;

        if self.systems.is_empty() {
            return fail("systems: at least one system is required".into());
        }
        let mut names = BTreeSet::new();
        for s in &self.systems {
            if s.name.is_empty() || !s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return fail(format!("systems: invalid name '{}'", s.name));
            }
            if !names.insert(&s.name) {
                return fail(format!("systems: duplicate name '{}'", s.name));
            }
        }
        if self.io.out_dir.as_os_str().is_empty() {
            return fail("io: out_dir must not be empty".into());
        }
        if let Some(parent) = self.io.out_dir.parent().filter(|p| !p.as_os_str().is_empty()) {
            if !parent.is_dir() {
                return fail(format!("io: parent of out_dir {} does not exist", self.io.out_dir.display()));
            }
        }
        Ok(())
    }

    /// Canonical TOML of the fully resolved config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parse `value` as a TOML literal, falling back to a plain string.
fn parse_literal(value: &str) -> Value {
    let doc = format!("v = {value}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => Value::String(value.to_string()),
    }
}

/// Set `path` (dotted) inside `root`, creating tables as needed.
pub fn set_dotted(root: &mut toml::Table, path: &str, value: Value) -> CliResult<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("invalid override key '{path}'")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override '{path}': '{part}' is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parse `--stage.param value` / `--stage.param=value` pairs.
pub fn parse_overrides(args: &[String]) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| CliError::Config(format!("unexpected argument '{arg}'")))?;
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
            i += 1;
        } else {
            let value = args
                .get(i + 1)
                .ok_or_else(|| CliError::Config(format!("override '{arg}' needs a value")))?;
            out.push((key.to_string(), value.clone()));
            i += 2;
        }
    }
    Ok(out)
}

fn merge(base: &mut toml::Table, user: &toml::Table) {
    for (k, v) in user {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(u)) => merge(b, u),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

const SEEDED_BLOCKS: [&str; 5] = ["synth", "split", "ubm", "tv", "plda"];

/// Resolve a config from file text and overrides. The profile comes from the
/// file or overrides, then from `IVECKIT_PROFILE`, then defaults to desk.
/// A top-level `seed` is copied into every stage seed not set explicitly.
pub fn resolve(file_text: Option<&str>, overrides: &[(String, String)], env_profile: Option<&str>) -> CliResult<PipelineConfig> {
    let mut user: toml::Table = match file_text {
        Some(text) => text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(format!("config parse error: {e}")))?,
        None => toml::Table::new(),
    };
    for (k, v) in overrides {
        set_dotted(&mut user, k, parse_literal(v))?;
    }
    let profile = match user.get("profile") {
        Some(Value::String(s)) => s.parse()?,
        Some(_) => return Err(CliError::Config("profile must be a string".into())),
        None => match env_profile {
            Some(s) if !s.is_empty() => s.parse()?,
            _ => Profile::Desk,
        },
    };
    let mut merged = toml::Table::try_from(PipelineConfig::for_profile(profile)).expect("defaults serialize");
    merge(&mut merged, &user);
    if let Some(seed) = user.get("seed").cloned() {
        for block in SEEDED_BLOCKS {
            let explicit = user
                .get(block)
                .and_then(Value::as_table)
                .is_some_and(|t| t.contains_key("seed"));
            if !explicit {
                set_dotted(&mut merged, &format!("{block}.seed"), seed.clone())?;
            }
        }
    }
    let cfg: PipelineConfig = Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> CliResult<PipelineConfig> {
    let text = match path {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let env = std::env::var(PROFILE_ENV).ok();
    resolve(text.as_deref(), overrides, env.as_deref())
}
