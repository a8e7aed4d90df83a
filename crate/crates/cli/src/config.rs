use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;
use speechgrade::features::ExtractConfig;
use speechgrade::harness::{ExperimentConfig, SynthSpec};
use speechgrade::learner::{Family, Task};

/// Everything a run can be configured with from a TOML file. Flags given on
/// the command line win over values read here.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub paths: Paths,
    pub features: ExtractConfig,
    pub model: ModelChoice,
    pub experiment: ExperimentConfig,
    pub synth: SynthSpec,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub resources: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelChoice {
    pub family: Family,
    pub task: Task,
}

impl Default for ModelChoice {
    fn default() -> Self {
        ModelChoice { family: Family::Gbt, task: Task::Regression }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(ConfigError::from)?;
        // Relative paths in the file are relative to the file.
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [&mut cfg.paths.corpus, &mut cfg.paths.resources, &mut cfg.paths.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "bad config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<toml::de::Error> for ConfigError {
    fn from(e: toml::de::Error) -> Self {
        ConfigError(e.to_string())
    }
}
