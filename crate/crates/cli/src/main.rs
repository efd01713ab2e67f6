use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ivec_kit::commands::{self, FuseArgs, ScoreArgs};
use ivec_kit::config;
use ivec_kit::error::{CliError, CliResult, EXIT_OK};
use ivec_kit::manifest::{Failure, RunManifest};
use ivec_kit::pipeline;

#[derive(Parser)]
#[command(name = "ivec-kit", version, about = "I-vector speaker verification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline declared in a config file.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Worker threads for scoring and statistics.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Print the resolved config and exit.
        #[arg(long)]
        dry_run: bool,
        /// `--stage.param value` overrides.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
        overrides: Vec<String>,
    },
    /// Score trials with a stored back-end.
    Score {
        #[arg(long)]
        backend: PathBuf,
        #[arg(long)]
        ivectors: PathBuf,
        #[arg(long)]
        enroll: PathBuf,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Apply s-norm with the cohort stored in the back-end.
        #[arg(long)]
        snorm: bool,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// EER and C_Primary report for a score file.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train logistic-regression fusion and apply it.
    Fuse {
        #[arg(long)]
        key: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        train: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        apply: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        model_out: Option<PathBuf>,
        /// Unit weights and zero offset instead of training.
        #[arg(long)]
        identity: bool,
        #[arg(long)]
        prior: Option<f64>,
    },
    /// Trial-wise sum of two score files.
    Sum {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// DET operating points for external plotting.
    Det {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run_pipeline(config_path: Option<PathBuf>, jobs: usize, dry_run: bool, overrides: &[String]) -> CliResult<()> {
    if jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let cfg = config::parse_overrides(overrides).and_then(|o| config::load(config_path.as_deref(), &o));
    let cfg = match cfg {
        Ok(cfg) => cfg,
        Err(e) => {
            // a manifest is still emitted when the output location is known
            if let Some(out_dir) = out_dir_hint(config_path.as_deref(), overrides) {
                let mut manifest = RunManifest::new(&config::PipelineConfig::default());
                manifest.config_hash = String::new();
                manifest.status = "failed".into();
                manifest.failure = Some(Failure::from(&e));
                let _ = manifest.write(&out_dir.join("manifest.json"));
            }
            return Err(e);
        }
    };
    if dry_run {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let (manifest, result) = pipeline::run(&cfg, jobs);
    if result.is_ok() {
        log::info!("run complete: {} stages, config {}", manifest.stages.len(), manifest.config_hash);
    }
    result
}

/// `io.out_dir` from overrides or the config file, if it can be read and its
/// parent exists.
fn out_dir_hint(path: Option<&std::path::Path>, overrides: &[String]) -> Option<PathBuf> {
    let from_overrides = config::parse_overrides(overrides)
        .ok()?
        .into_iter()
        .rev()
        .find(|(k, _)| k == "io.out_dir")
        .map(|(_, v)| PathBuf::from(v));
    let dir = from_overrides.or_else(|| {
        let text = std::fs::read_to_string(path?).ok()?;
        let table: toml::Table = text.parse().ok()?;
        table.get("io")?.get("out_dir")?.as_str().map(PathBuf::from)
    })?;
    let parent_ok = dir.parent().is_none_or(|p| p.as_os_str().is_empty() || p.is_dir());
    parent_ok.then_some(dir)
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run {
            config,
            jobs,
            dry_run,
            overrides,
        } => run_pipeline(config, jobs, dry_run, &overrides),
        Command::Score {
            backend,
            ivectors,
            enroll,
            trials,
            out,
            snorm,
            jobs,
        } => {
            if jobs == 0 {
                return Err(CliError::Config("--jobs must be at least 1".into()));
            }
            let args = ScoreArgs {
                backend,
                ivectors,
                enroll,
                trials,
                out,
                snorm,
                parallel: jobs > 1,
            };
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
            for w in pool.install(|| commands::cmd_score(&args))? {
                log::warn!("{w}");
            }
            Ok(())
        }
        Command::Evaluate { scores, key, out } => {
            let text = commands::cmd_evaluate(&scores, &key, out.as_deref())?;
            if out.is_none() {
                print!("{text}");
            }
            Ok(())
        }
        Command::Fuse {
            key,
            train,
            apply,
            out,
            model_out,
            identity,
            prior,
        } => commands::cmd_fuse(&FuseArgs {
            key,
            train,
            apply,
            out,
            model_out,
            identity,
            prior,
        }),
        Command::Sum { a, b, out } => commands::cmd_sum(&a, &b, &out),
        Command::Det { scores, key, out } => commands::cmd_det(&scores, &key, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
