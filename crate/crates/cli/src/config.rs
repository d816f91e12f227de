//! Experiment configuration files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use randesign::coverage::{ConditionChoice, Estimator};
use randesign::population::file::ModelDoc;
use randesign::PopulationModel;
use serde::Deserialize;

/// A model given inline or as a path relative to the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Path(PathBuf),
    Inline(Box<ModelDoc>),
}

impl ModelRef {
    pub fn load(&self, base: &Path) -> Result<PopulationModel> {
        match self {
            ModelRef::Path(p) => {
                let path = if p.is_absolute() { p.clone() } else { base.join(p) };
                let text = crate::read_text(&path)?;
                PopulationModel::from_json(&text).with_context(|| format!("model {}", path.display()))
            }
            ModelRef::Inline(doc) => Ok(doc.build()?),
        }
    }
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelRef,
    pub estimator: Estimator,
    pub n_grid: Vec<usize>,
    pub delta_grid: Vec<f64>,
    pub trials: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    #[serde(default)]
    pub condition: ConditionChoice,
    #[serde(default)]
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&crate::read_text(path)?).with_context(|| format!("config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if self.n_grid.is_empty() || self.delta_grid.is_empty() {
            bail!("n-grid and delta-grid must be non-empty");
        }
        if let Some(d) = self.delta_grid.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
            bail!("delta {d} is outside (0, 1)");
        }
        Ok(())
    }
}
