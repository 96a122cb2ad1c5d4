//! The shared configuration file (TOML). Every section and field is
//! optional; missing values take the defaults.

use std::path::{Path, PathBuf};

use heliogen_core::latent::LatentSearchConfig;
use heliogen_core::nn::TrainConfig;
use heliogen_core::optimizer::SaConfig;
use heliogen_core::scene::SceneConfig;
use heliogen_core::solar::SkyConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONFIG_ENV: &str = "HELIOGEN_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Number of boundary conditions to anneal; `None` means all of them.
    pub bcs: Option<usize>,
    /// Share of boundary conditions assigned to the train split.
    pub train_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            bcs: None,
            train_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Reparameterized samples decoded per test record.
    pub recon_samples: usize,
    /// Heightmaps drawn per random generator and boundary condition.
    pub random_samples: usize,
    /// Boundary conditions timed for the annealing/inference comparison; 0 skips it.
    pub timing_bcs: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            recon_samples: 100,
            random_samples: 100,
            timing_bcs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub scene: SceneConfig,
    pub sky: SkyConfig,
    pub sa: SaConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub latent: LatentSearchConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            scene: SceneConfig::default(),
            sky: SkyConfig::default(),
            sa: SaConfig::default(),
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            latent: LatentSearchConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Loads `explicit`, else the file named by `HELIOGEN_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        let env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        match explicit.map(Path::to_path_buf).or(env) {
            Some(p) => Self::load(&p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.latent.validate()?;
        if !(0.0..=1.0).contains(&self.dataset.train_fraction) {
            return Err(Error::Config("dataset.train_fraction must lie in [0, 1]".into()));
        }
        if self.sa.steps == 0 || self.sa.select_k == 0 {
            return Err(Error::Config("sa.steps and sa.select_k must be positive".into()));
        }
        Ok(())
    }

    /// The resolved configuration on one line, for logs.
    pub fn log_line(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
