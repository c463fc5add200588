use std::path::Path;

use anyhow::Context;
use kinefit::fitting::PipelineSettings;
use kinefit::synthgen::DatasetConfig;
use serde::Deserialize;

/// Defaults read from `--config`; command-line flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub gen: DatasetConfig,
    pub fit: PipelineSettings,
    pub gradcheck: GradcheckConfig,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub draws: usize,
    pub frames: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        let d = kinefit::losses::GradcheckSettings::default();
        GradcheckConfig {
            draws: d.draws,
            frames: d.frames,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("--config: cannot read {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("--config: invalid {}", path.display()))
    }

    /// Flag or `KINEFIT_SEED` (both handled by clap), then the config file,
    /// then 0.
    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(0)
    }
}
