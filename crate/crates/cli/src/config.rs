//! JSON run configuration: every `TrainConfig` field plus the input and
//! output locations. Command-line flags override values read from file.

use std::fs;
use std::path::{Path, PathBuf};

use fsgnn::experiments::SearchSpace;
use fsgnn::{GroupHyper, ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::InputError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// Dataset directory.
    pub data: Option<PathBuf>,
    /// `splits.json`; ten seeded 60/20/20 splits are generated when absent.
    pub splits: Option<PathBuf>,
    /// FSGF hop-feature cache; computed in memory when absent.
    pub features: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: ModelConfig,
    pub sca: GroupHyper,
    pub fc1: GroupHyper,
    pub fc2: GroupHyper,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub batch_size: usize,
    /// Grid for `gridsearch` and `ablate`; the full default grid when absent.
    pub space: Option<SearchSpace>,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self::from_train(None, TrainConfig::default())
    }
}

impl CliConfig {
    fn from_train(paths: Option<&CliConfig>, t: TrainConfig) -> Self {
        Self {
            data: paths.and_then(|p| p.data.clone()),
            splits: paths.and_then(|p| p.splits.clone()),
            features: paths.and_then(|p| p.features.clone()),
            out: paths.and_then(|p| p.out.clone()),
            model: t.model,
            sca: t.sca,
            fc1: t.fc1,
            fc2: t.fc2,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: t.seed,
            batch_size: t.batch_size,
            space: paths.and_then(|p| p.space.clone()),
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| InputError(format!("{}: {e}", path.display())).into())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            model: self.model.clone(),
            sca: self.sca,
            fc1: self.fc1,
            fc2: self.fc2,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            batch_size: self.batch_size,
        }
    }

    pub fn set_train_config(&mut self, t: TrainConfig) {
        *self = Self::from_train(Some(self), t);
    }
}
