//! `socpath`: career trajectory pipeline driver.

mod artifact;
mod config;
mod error;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use socpath_core::crowdeval::AlphaMetric;
use socpath_core::llm::BackendKind;

use crate::config::PipelineConfig;
use crate::error::{ResultExt, StageResult};
use crate::stages::Pipeline;

/// Classify, filter, enrich and model resume career trajectories.
///
/// Settings come from one TOML config file; flags override it. Logs go to
/// standard error (set RUST_LOG to change verbosity). Exit codes: 0 success,
/// 2 configuration error, 3 data error, 4 backend error.
#[derive(Debug, Parser)]
#[command(name = "socpath", version)]
struct Cli {
    /// Pipeline config file.
    #[arg(short, long, global = true, default_value = "socpath.toml")]
    config: PathBuf,

    /// Directory for stage artifacts (overrides paths.output_dir).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Completion backend (overrides backend.kind).
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,

    /// Jobs per generation prompt, 1 to 5.
    #[arg(long, global = true)]
    batch_size: Option<usize>,

    /// Classifier worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Continue `classify` from its checkpoint instead of starting over.
    #[arg(long, global = true)]
    resume: bool,

    /// Trajectory window in years.
    #[arg(long, global = true)]
    window_years: Option<f64>,

    /// Top-code for the job mobility count.
    #[arg(long, global = true)]
    mobility_cap: Option<u32>,

    /// Number of hash partitions.
    #[arg(long, global = true)]
    partitions: Option<usize>,

    /// Comma-separated models to fit (m1,m2,m3,m4).
    #[arg(long, global = true, value_delimiter = ',')]
    models: Option<Vec<String>>,

    /// Agreement metric for Krippendorff's alpha.
    #[arg(long, global = true, value_enum)]
    metric: Option<MetricArg>,

    /// Aggregate rating at or above which an item counts as correct.
    #[arg(long, global = true)]
    threshold: Option<f64>,

    /// Seed recorded in manifests.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Nominal,
    Interval,
    Ordinal,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Assign profiles to hash partitions.
    Partition,
    /// Parse profiles and apply the sample selection criteria.
    Filter,
    /// Classify every distinct (title, company) pair.
    Classify,
    /// Re-filter with classifier flags and build career trajectories.
    Trajectories,
    /// Attach wages, regional rank and cohort.
    Enrich,
    /// Descriptive tables and logit models.
    Analyze,
    /// Build crowd-evaluation HIT sets and score ratings.
    Eval,
    /// Run every stage in order.
    All,
}

impl Command {
    fn stage(self) -> &'static str {
        match self {
            Command::Partition => "partition",
            Command::Filter => "filter",
            Command::Classify => "classify",
            Command::Trajectories => "trajectories",
            Command::Enrich => "enrich",
            Command::Analyze => "analyze",
            Command::Eval => "eval",
            Command::All => "all",
        }
    }
}

impl Cli {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(d) = &self.output_dir {
            cfg.paths.output_dir = d.clone();
        }
        if let Some(b) = self.backend {
            cfg.backend.kind = match b {
                BackendArg::Mock => BackendKind::Mock,
                BackendArg::Http => BackendKind::Http,
            };
        }
        if let Some(v) = self.batch_size {
            cfg.classify.batch_size = v;
        }
        if let Some(v) = self.workers {
            cfg.classify.workers = v;
        }
        if let Some(v) = self.window_years {
            cfg.trajectory.window_years = v;
        }
        if let Some(v) = self.mobility_cap {
            cfg.trajectory.mobility_cap = v;
        }
        if let Some(v) = self.partitions {
            cfg.partition.n_partitions = v;
        }
        if let Some(v) = &self.models {
            cfg.analysis.models = v.clone();
        }
        if let Some(m) = self.metric {
            cfg.eval.metric = match m {
                MetricArg::Nominal => AlphaMetric::Nominal,
                MetricArg::Interval => AlphaMetric::Interval,
                MetricArg::Ordinal => AlphaMetric::Ordinal,
            };
        }
        if let Some(v) = self.threshold {
            cfg.eval.threshold = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
    }
}

fn run(cli: &Cli) -> StageResult<()> {
    let mut cfg = PipelineConfig::load(&cli.config).config()?;
    cli.apply(&mut cfg);
    cfg.validate().config()?;
    tracing::debug!(hash = %cfg.hash(), "configuration loaded");
    Pipeline::new(cfg, cli.resume)?.run(cli.command.stage())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!("{e}");
            eprintln!("socpath: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Failure;

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            Failure::Config(anyhow::anyhow!("c")).exit_code(),
            Failure::Data(anyhow::anyhow!("d")).exit_code(),
            Failure::Backend(anyhow::anyhow!("b")).exit_code(),
        ];
        assert_eq!(codes, [2, 3, 4]);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
