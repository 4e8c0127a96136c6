//! Run configuration in flat `key = value` text form.
//!
//! Lines starting with `#` and blank lines are ignored. Keys absent from the
//! file take their defaults; unknown keys are rejected.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    SoftmaxRatio,
    Margin,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::SoftmaxRatio => "softmax_ratio",
            LossKind::Margin => "margin",
        }
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "softmax_ratio" => Ok(LossKind::SoftmaxRatio),
            "margin" => Ok(LossKind::Margin),
            other => Err(format!("unknown loss kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackboneKind {
    TinyConv,
    XceptionAdapter,
}

impl BackboneKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackboneKind::TinyConv => "tiny_conv",
            BackboneKind::XceptionAdapter => "xception_adapter",
        }
    }
}

impl FromStr for BackboneKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "tiny_conv" => Ok(BackboneKind::TinyConv),
            "xception_adapter" => Ok(BackboneKind::XceptionAdapter),
            other => Err(format!("unknown backbone kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub embedding_dim: usize,
    pub stage1_lr: f64,
    pub stage1_batch: usize,
    pub stage1_epochs: usize,
    pub stage1_momentum: f64,
    pub stage2_lr: f64,
    pub stage2_momentum: f64,
    pub stage2_epochs: usize,
    pub stage2_batch: usize,
    pub loss_kind: LossKind,
    pub margin: f64,
    pub dropout_rate: f64,
    pub leaky_slope: f64,
    pub crop_size: usize,
    pub backbone: BackboneKind,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            embedding_dim: 2,
            stage1_lr: 4e-4,
            stage1_batch: 12,
            stage1_epochs: 10,
            stage1_momentum: 0.0,
            stage2_lr: 3e-3,
            stage2_momentum: 0.1,
            stage2_epochs: 50,
            stage2_batch: 1,
            loss_kind: LossKind::SoftmaxRatio,
            margin: 0.2,
            dropout_rate: 0.5,
            leaky_slope: 0.01,
            crop_size: 299,
            backbone: BackboneKind::TinyConv,
            seed: 0,
        }
    }
}

pub const CONFIG_KEYS: [&str; 16] = [
    "embedding_dim",
    "stage1_lr",
    "stage1_batch",
    "stage1_epochs",
    "stage1_momentum",
    "stage2_lr",
    "stage2_momentum",
    "stage2_epochs",
    "stage2_batch",
    "loss_kind",
    "margin",
    "dropout_rate",
    "leaky_slope",
    "crop_size",
    "backbone",
    "seed",
];

/// One `key = value` entry with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits flat key-value text into entries.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(Error::ConfigValue {
                line,
                key: trimmed.to_string(),
                value: String::new(),
            });
        };
        entries.push(Entry {
            line,
            key: key.trim().to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(entries)
}

fn parse_value<T: FromStr>(entry: &Entry) -> Result<T> {
    entry.value.parse::<T>().map_err(|_| Error::ConfigValue {
        line: entry.line,
        key: entry.key.clone(),
        value: entry.value.clone(),
    })
}

impl RunConfig {
    /// Applies one entry. Returns `Ok(false)` when the key is not a config key.
    pub fn apply(&mut self, entry: &Entry) -> Result<bool> {
        match entry.key.as_str() {
            "embedding_dim" => self.embedding_dim = parse_value(entry)?,
            "stage1_lr" => self.stage1_lr = parse_value(entry)?,
            "stage1_batch" => self.stage1_batch = parse_value(entry)?,
            "stage1_epochs" => self.stage1_epochs = parse_value(entry)?,
            "stage1_momentum" => self.stage1_momentum = parse_value(entry)?,
            "stage2_lr" => self.stage2_lr = parse_value(entry)?,
            "stage2_momentum" => self.stage2_momentum = parse_value(entry)?,
            "stage2_epochs" => self.stage2_epochs = parse_value(entry)?,
            "stage2_batch" => self.stage2_batch = parse_value(entry)?,
            "loss_kind" => self.loss_kind = parse_value(entry)?,
            "margin" => self.margin = parse_value(entry)?,
            "dropout_rate" => self.dropout_rate = parse_value(entry)?,
            "leaky_slope" => self.leaky_slope = parse_value(entry)?,
            "crop_size" => self.crop_size = parse_value(entry)?,
            "backbone" => self.backbone = parse_value(entry)?,
            "seed" => self.seed = parse_value(entry)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.embedding_dim < 1 {
            return fail("embedding_dim must be at least 1".into());
        }
        for (name, lr) in [("stage1_lr", self.stage1_lr), ("stage2_lr", self.stage2_lr)] {
            if !(lr.is_finite() && lr > 0.0) {
                return fail(format!("{name} must be a positive finite number, got {lr}"));
            }
        }
        for (name, m) in [
            ("stage1_momentum", self.stage1_momentum),
            ("stage2_momentum", self.stage2_momentum),
        ] {
            if !(0.0..1.0).contains(&m) {
                return fail(format!("{name} must lie in [0, 1), got {m}"));
            }
        }
        if self.stage1_batch < 1 || self.stage2_batch < 1 {
            return fail("batch sizes must be at least 1".into());
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return fail(format!("margin must be >= 0, got {}", self.margin));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            ));
        }
        if !self.leaky_slope.is_finite() {
            return fail("leaky_slope must be finite".into());
        }
        if self.crop_size < 1 {
            return fail("crop_size must be at least 1".into());
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        for entry in parse_entries(text)? {
            if !config.apply(&entry)? {
                return Err(Error::UnknownConfigKey {
                    line: entry.line,
                    key: entry.key,
                });
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for RunConfig {
    /// Writes every key in canonical order; floats use the shortest round-trip form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "embedding_dim = {}", self.embedding_dim)?;
        writeln!(f, "stage1_lr = {:?}", self.stage1_lr)?;
        writeln!(f, "stage1_batch = {}", self.stage1_batch)?;
        writeln!(f, "stage1_epochs = {}", self.stage1_epochs)?;
        writeln!(f, "stage1_momentum = {:?}", self.stage1_momentum)?;
        writeln!(f, "stage2_lr = {:?}", self.stage2_lr)?;
        writeln!(f, "stage2_momentum = {:?}", self.stage2_momentum)?;
        writeln!(f, "stage2_epochs = {}", self.stage2_epochs)?;
        writeln!(f, "stage2_batch = {}", self.stage2_batch)?;
        writeln!(f, "loss_kind = {}", self.loss_kind.as_str())?;
        writeln!(f, "margin = {:?}", self.margin)?;
        writeln!(f, "dropout_rate = {:?}", self.dropout_rate)?;
        writeln!(f, "leaky_slope = {:?}", self.leaky_slope)?;
        writeln!(f, "crop_size = {}", self.crop_size)?;
        writeln!(f, "backbone = {}", self.backbone.as_str())?;
        writeln!(f, "seed = {}", self.seed)
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_text(&text)
}
