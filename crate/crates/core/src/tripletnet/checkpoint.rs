use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::backbone::Backbone;
use crate::config::RunConfig;
use crate::error::{Error, Result};

pub const BACKBONE_FORMAT: &str = "facemanip-backbone/1";

/// Self-describing backbone archive: architecture, parameters, configuration and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneCheckpoint {
    pub format: String,
    pub backbone: Backbone,
    pub config: RunConfig,
    pub seed: u64,
    pub history: Vec<f64>,
}

impl BackboneCheckpoint {
    pub fn new(backbone: Backbone, config: &RunConfig, history: Vec<f64>) -> Self {
        BackboneCheckpoint {
            format: BACKBONE_FORMAT.into(),
            backbone,
            config: config.clone(),
            seed: config.seed,
            history,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: BackboneCheckpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.format != BACKBONE_FORMAT {
            return Err(Error::Checkpoint(format!(
                "{}: expected format `{BACKBONE_FORMAT}`, found `{}`",
                path.display(),
                ckpt.format
            )));
        }
        Ok(ckpt)
    }
}
