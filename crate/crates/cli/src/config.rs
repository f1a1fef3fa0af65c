//! Pipeline configuration file.
//!
//! A single TOML file drives every stage. Relative paths resolve against the
//! directory holding the file. Command-line flags override file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use socpath_core::crowdeval::EvalConfig;
use socpath_core::date::YearMonth;
use socpath_core::enrichment::CohortConfig;
use socpath_core::llm::{BackendDescriptor, BackendKind};
use socpath_core::profiles::FilterCriteria;
use socpath_core::trajectory::{DEFAULT_MOBILITY_CAP, DEFAULT_WINDOW_YEARS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub profiles: PathBuf,
    pub taxonomy: PathBuf,
    #[serde(default)]
    pub crosswalks: Vec<PathBuf>,
    #[serde(default)]
    pub wages: Vec<PathBuf>,
    pub gdp: PathBuf,
    pub shots: PathBuf,
    #[serde(default)]
    pub ratings: Option<PathBuf>,
    #[serde(default)]
    pub accuracies: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub n_partitions: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self { n_partitions: 284 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub batch_size: usize,
    pub workers: usize,
    /// Expected number of examples in the shot file.
    pub shots_k: Option<usize>,
    pub reask_malformed: bool,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            batch_size: 5,
            workers: 4,
            shots_k: Some(17),
            reask_malformed: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySection {
    pub snapshot: YearMonth,
    pub window_years: f64,
    pub mobility_cap: u32,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self {
            snapshot: YearMonth::new(2022, 10).expect("valid month"),
            window_years: DEFAULT_WINDOW_YEARS,
            mobility_cap: DEFAULT_MOBILITY_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnrichSection {
    pub years: (i32, i32),
    pub cohort: CohortConfig,
}

impl Default for EnrichSection {
    fn default() -> Self {
        Self {
            years: (1999, 2022),
            cohort: CohortConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub models: Vec<String>,
    pub rare_min: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            models: ["m1", "m2", "m3", "m4"].map(String::from).to_vec(),
            rare_min: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub backend: BackendDescriptor,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub filter: FilterCriteria,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub trajectory: TrajectorySection,
    #[serde(default)]
    pub enrich: EnrichSection,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Directory relative paths were resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg =
            Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        self.base_dir = Some(base.to_path_buf());
        self.map_paths(|p| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        });
    }

    fn map_paths(&mut self, fix: impl Fn(&mut PathBuf)) {
        let paths = &mut self.paths;
        fix(&mut paths.profiles);
        fix(&mut paths.taxonomy);
        fix(&mut paths.gdp);
        fix(&mut paths.shots);
        fix(&mut paths.output_dir);
        paths.crosswalks.iter_mut().for_each(&fix);
        paths.wages.iter_mut().for_each(&fix);
        paths.ratings.iter_mut().for_each(&fix);
        paths.accuracies.iter_mut().for_each(&fix);
        self.backend.mock_table.iter_mut().for_each(&fix);
    }

    /// Checks values and that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        let p = &self.paths;
        let mut inputs: Vec<&PathBuf> = vec![&p.profiles, &p.taxonomy, &p.gdp, &p.shots];
        inputs.extend(&p.crosswalks);
        inputs.extend(&p.wages);
        inputs.extend(p.ratings.iter());
        inputs.extend(p.accuracies.iter());
        inputs.extend(self.backend.mock_table.iter());
        for path in inputs {
            if !path.is_file() {
                bail!("input file {} does not exist", path.display());
            }
        }
        if p.wages.is_empty() {
            bail!("paths.wages lists no wage tables");
        }
        if p.ratings.is_some() != p.accuracies.is_some() {
            bail!("paths.ratings and paths.accuracies must be given together");
        }
        self.backend.validate()?;
        self.filter.validate()?;
        if self.partition.n_partitions == 0 {
            bail!("partition.n_partitions must be at least 1");
        }
        if self.classify.batch_size == 0 || self.classify.batch_size > 5 {
            bail!("classify.batch_size must be between 1 and 5");
        }
        if self.classify.workers == 0 {
            bail!("classify.workers must be at least 1");
        }
        if !(self.trajectory.window_years > 0.0) {
            bail!("trajectory.window_years must be positive");
        }
        if self.enrich.years.0 > self.enrich.years.1 {
            bail!("enrich.years start is after end");
        }
        for m in &self.analysis.models {
            if !matches!(m.as_str(), "m1" | "m2" | "m3" | "m4") {
                bail!("unknown model {m:?}; expected m1, m2, m3 or m4");
            }
        }
        if self.analysis.models.is_empty() {
            bail!("analysis.models is empty");
        }
        if !(0.0..=1.0).contains(&self.eval.high_accuracy) {
            bail!("eval.high_accuracy must lie in [0, 1]");
        }
        if self.backend.kind == BackendKind::Http && self.backend.mock_table.is_some() {
            tracing::warn!("backend.mock_table is ignored by the http backend");
        }
        Ok(())
    }

    /// SHA-256 of the effective configuration with paths taken relative to
    /// the config directory and the output location left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        if let Some(base) = &self.base_dir {
            c.map_paths(|p| {
                if let Ok(rel) = p.strip_prefix(base) {
                    *p = rel.to_path_buf();
                }
            });
        }
        c.paths.output_dir = PathBuf::new();
        let canonical = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
