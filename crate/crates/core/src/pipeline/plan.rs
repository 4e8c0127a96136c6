use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config::{parse_entries, RunConfig};
use crate::error::{Error, Result};

/// Which model family a plan trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineMode {
    /// Triplet-trained backbone followed by the small classifier.
    TripletPipeline,
    /// The same backbone trained directly with a 2-logit cross-entropy head.
    BackboneOnly,
}

impl PipelineMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineMode::TripletPipeline => "triplet_pipeline",
            PipelineMode::BackboneOnly => "backbone_only",
        }
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "triplet_pipeline" | "triplet" => Ok(PipelineMode::TripletPipeline),
            "backbone_only" | "baseline" => Ok(PipelineMode::BackboneOnly),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// An experiment: one training manifest, the manifests to evaluate on, the run
/// configuration and the output directory.
///
/// Plan files use the config syntax (`key = value`, `#` comments). The keys
/// `train_manifest`, `eval_manifests` (comma separated), `mode` and `output_dir` are
/// plan keys; every other key must be a config key. Relative paths resolve against the
/// plan file's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub train_manifest: PathBuf,
    pub eval_manifests: Vec<PathBuf>,
    pub config: RunConfig,
    pub mode: PipelineMode,
    pub output_dir: PathBuf,
}

impl ExperimentPlan {
    pub fn new(
        train_manifest: impl Into<PathBuf>,
        eval_manifests: Vec<PathBuf>,
        config: RunConfig,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        ExperimentPlan {
            train_manifest: train_manifest.into(),
            eval_manifests,
            config,
            mode: PipelineMode::TripletPipeline,
            output_dir: output_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_manifests.is_empty() {
            return Err(Error::InvalidConfig(
                "plan needs at least one eval manifest".into(),
            ));
        }
        self.config.validate()
    }

    pub fn from_text(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config = RunConfig::default();
        let (mut train, mut evals, mut out) = (None, None, None);
        let mut mode = PipelineMode::TripletPipeline;
        let resolve = |v: &str| base_dir.join(v);
        for entry in parse_entries(text)? {
            match entry.key.as_str() {
                "train_manifest" => train = Some(resolve(&entry.value)),
                "eval_manifests" => {
                    evals = Some(
                        entry
                            .value
                            .split(',')
                            .map(str::trim)
                            .filter(|v| !v.is_empty())
                            .map(resolve)
                            .collect::<Vec<_>>(),
                    )
                }
                "output_dir" => out = Some(resolve(&entry.value)),
                "mode" => {
                    mode = entry.value.parse().map_err(|_| Error::ConfigValue {
                        line: entry.line,
                        key: entry.key.clone(),
                        value: entry.value.clone(),
                    })?
                }
                _ => {
                    if !config.apply(&entry)? {
                        return Err(Error::UnknownConfigKey {
                            line: entry.line,
                            key: entry.key,
                        });
                    }
                }
            }
        }
        let missing = |key: &str| Error::InvalidConfig(format!("plan is missing `{key}`"));
        let plan = ExperimentPlan {
            train_manifest: train.ok_or_else(|| missing("train_manifest"))?,
            eval_manifests: evals.ok_or_else(|| missing("eval_manifests"))?,
            config,
            mode,
            output_dir: out.ok_or_else(|| missing("output_dir"))?,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_text(&text, base)
    }

    /// Plan file text with absolute or as-given paths and every config key.
    pub fn to_text(&self) -> String {
        let evals: Vec<String> = self
            .eval_manifests
            .iter()
            .map(|p| p.display().to_string())
            .collect();
        format!(
            "train_manifest = {}\neval_manifests = {}\nmode = {}\noutput_dir = {}\n{}",
            self.train_manifest.display(),
            evals.join(", "),
            self.mode,
            self.output_dir.display(),
            self.config
        )
    }
}
