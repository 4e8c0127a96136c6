//! Experiment orchestration: the two-stage protocol, the backbone-only ablation and
//! intra/cross-dataset evaluation, with a fixed run-directory layout.
//!
//! Inference always runs embed-then-classify; stage 2 never touches backbone weights.

mod baseline;
mod plan;

pub use baseline::{baseline_backbone, baseline_score, train_backbone_only, TrainedBaseline};
pub use plan::{ExperimentPlan, PipelineMode};

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{train_classifier, Classifier, ClassifierCheckpoint};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::features::{load_features, save_features, FeatureRow};
use crate::manifest::{load_manifest, Manifest, Split};
use crate::metrics::{cross_matrix, save_report, save_scores, CrossCell, EvalReport, ScoreRecord};
use crate::tripletnet::{
    load_sample, train_embedding, Backbone, BackboneCheckpoint, BackboneSpec,
};

/// Output tree of one plan:
/// `checkpoints/`, `features/`, `scores/`, `reports/` and `logs/`, with file names derived
/// from the train and test dataset names.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
    pub overwrite: bool,
}

pub const RUN_SUBDIRS: [&str; 5] = ["checkpoints", "features", "scores", "reports", "logs"];

/// Dataset name reduced to characters that are safe in file names.
pub fn file_stem(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "dataset".into()
    } else {
        s
    }
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>, overwrite: bool) -> Result<Self> {
        let root = root.into();
        for sub in RUN_SUBDIRS {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(RunDir { root, overwrite })
    }

    fn pair(train: &str, test: &str) -> String {
        format!("{}__{}", file_stem(train), file_stem(test))
    }

    pub fn backbone_checkpoint(&self, train: &str) -> PathBuf {
        self.root
            .join("checkpoints")
            .join(format!("backbone_{}.json", file_stem(train)))
    }

    pub fn classifier_checkpoint(&self, train: &str) -> PathBuf {
        self.root
            .join("checkpoints")
            .join(format!("classifier_{}.json", file_stem(train)))
    }

    pub fn baseline_checkpoint(&self, train: &str) -> PathBuf {
        self.root
            .join("checkpoints")
            .join(format!("baseline_{}.json", file_stem(train)))
    }

    /// TRAIN-split features used to fit the classifier.
    pub fn train_features(&self, train: &str) -> PathBuf {
        self.root
            .join("features")
            .join(format!("{}_train.csv", Self::pair(train, train)))
    }

    /// TEST-split features of `test` under the backbone trained on `train`.
    pub fn test_features(&self, train: &str, test: &str) -> PathBuf {
        self.root
            .join("features")
            .join(format!("{}.csv", Self::pair(train, test)))
    }

    pub fn scores(&self, mode: PipelineMode, train: &str, test: &str) -> PathBuf {
        self.root
            .join("scores")
            .join(format!("{}{}.csv", mode_prefix(mode), Self::pair(train, test)))
    }

    pub fn report(&self, mode: PipelineMode, train: &str, test: &str) -> PathBuf {
        self.root
            .join("reports")
            .join(format!("{}{}.json", mode_prefix(mode), Self::pair(train, test)))
    }

    pub fn ablation_report(&self, train: &str) -> PathBuf {
        self.root
            .join("reports")
            .join(format!("ablation_{}.json", file_stem(train)))
    }

    pub fn log(&self, name: &str, train: &str) -> PathBuf {
        self.root
            .join("logs")
            .join(format!("{name}_{}.log", file_stem(train)))
    }

    /// Returns `path` if it may be written, or `WouldClobber` when it exists and
    /// overwriting was not requested.
    pub fn guard<'a>(&self, path: &'a Path) -> Result<&'a Path> {
        check_clobber(path, self.overwrite)?;
        Ok(path)
    }
}

fn mode_prefix(mode: PipelineMode) -> &'static str {
    match mode {
        PipelineMode::TripletPipeline => "",
        PipelineMode::BackboneOnly => "baseline_",
    }
}

pub fn check_clobber(path: &Path, overwrite: bool) -> Result<()> {
    if path.exists() && !overwrite {
        return Err(Error::WouldClobber {
            path: path.to_path_buf(),
        });
    }
    Ok(())
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `epoch,loss` lines, epochs counted from 1.
pub fn write_history(path: &Path, history: &[f64]) -> Result<()> {
    let mut text = String::from("epoch,loss\n");
    for (i, v) in history.iter().enumerate() {
        text.push_str(&format!("{},{}\n", i + 1, v));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Evaluation-mode embeddings of the selected split (all samples when `None`), in
/// manifest order.
pub fn extract_features(
    backbone: &Backbone,
    manifest: &Manifest,
    split: Option<Split>,
) -> Result<Vec<FeatureRow>> {
    let size = backbone.spec.input_size;
    let picked: Vec<usize> = (0..manifest.len())
        .filter(|&i| split.is_none_or(|s| manifest.samples[i].split == s))
        .collect();
    picked
        .par_iter()
        .map(|&i| {
            let sample = &manifest.samples[i];
            let image = load_sample(manifest, i, size)?;
            Ok(FeatureRow {
                id: sample.id.clone(),
                point: backbone.embed(&image)?,
                label: sample.label,
            })
        })
        .collect()
}

/// Classifier scores for already extracted feature rows.
pub fn score_features(classifier: &Classifier, rows: &[FeatureRow]) -> Result<Vec<ScoreRecord>> {
    rows.iter()
        .map(|r| {
            let (_, score) = classifier.predict(&r.point)?;
            Ok(ScoreRecord::new(r.id.clone(), r.label, score))
        })
        .collect()
}

/// Backbone-only scores for the TEST split of `manifest`.
pub fn score_baseline(backbone: &Backbone, manifest: &Manifest) -> Result<Vec<ScoreRecord>> {
    let size = backbone.spec.input_size;
    let picked: Vec<usize> = (0..manifest.len())
        .filter(|&i| manifest.samples[i].split == Split::Test)
        .collect();
    picked
        .par_iter()
        .map(|&i| {
            let sample = &manifest.samples[i];
            let image = load_sample(manifest, i, size)?;
            Ok(ScoreRecord::new(
                sample.id.clone(),
                sample.label,
                baseline_score(backbone, &image)?,
            ))
        })
        .collect()
}

/// Stage 1: triplet training of a freshly initialized backbone on the plan's TRAIN split.
/// Writes the checkpoint (which carries the loss history) to `checkpoint`.
pub fn run_stage1(plan: &ExperimentPlan, checkpoint: &Path) -> Result<BackboneCheckpoint> {
    plan.validate()?;
    if plan.mode != PipelineMode::TripletPipeline {
        return Err(Error::InvalidConfig(
            "stage 1 runs only in triplet_pipeline mode".into(),
        ));
    }
    let manifest = load_manifest(&plan.train_manifest)?;
    let backbone = Backbone::init(BackboneSpec::from_config(&plan.config), plan.config.seed)?;
    let trained = train_embedding(&manifest, backbone, &plan.config)?;
    let ckpt = BackboneCheckpoint::new(trained.backbone, &plan.config, trained.history);
    ckpt.save(checkpoint)?;
    Ok(ckpt)
}

/// Extracts features for `split` of `manifest` with a saved backbone and writes them.
pub fn run_extract(
    config: &RunConfig,
    checkpoint: &Path,
    manifest: &Path,
    split: Option<Split>,
    out: &Path,
) -> Result<Vec<FeatureRow>> {
    let ckpt = BackboneCheckpoint::load(checkpoint)?;
    if ckpt.backbone.embedding_dim() != config.embedding_dim {
        return Err(Error::ShapeMismatch {
            expected: format!("embedding_dim {} from the configuration", config.embedding_dim),
            actual: format!("checkpoint with embedding_dim {}", ckpt.backbone.embedding_dim()),
        });
    }
    let manifest = load_manifest(manifest)?;
    let rows = extract_features(&ckpt.backbone, &manifest, split)?;
    save_features(&rows, out)?;
    Ok(rows)
}

/// Stage 2: fits the classifier on a TRAIN-split feature file and writes its checkpoint.
pub fn run_stage2(config: &RunConfig, features: &Path, checkpoint: &Path) -> Result<ClassifierCheckpoint> {
    let rows = load_features(features)?;
    let data: Vec<_> = rows.into_iter().map(|r| (r.point, r.label)).collect();
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let trained = train_classifier(&data, config)?;
    let ckpt = ClassifierCheckpoint::new(trained.classifier, config, trained.history);
    ckpt.save(checkpoint)?;
    Ok(ckpt)
}

/// Scores every TEST sample of `manifest` (embed, then classify) and writes the score
/// CSV and the JSON report.
pub fn run_eval(
    backbone: &Path,
    classifier: &Path,
    manifest: &Path,
    scores: &Path,
    report: &Path,
) -> Result<EvalReport> {
    let backbone = BackboneCheckpoint::load(backbone)?.backbone;
    let classifier = ClassifierCheckpoint::load(classifier)?.classifier;
    let manifest = load_manifest(manifest)?;
    let rows = extract_features(&backbone, &manifest, Some(Split::Test))?;
    let records = score_features(&classifier, &rows)?;
    let r = EvalReport::from_records(&records)?;
    save_scores(&records, scores)?;
    save_report(&r, report)?;
    Ok(r)
}

/// Every (train, test) result a plan produced.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub train_dataset: String,
    pub cells: Vec<CrossCell>,
    pub run_dir: RunDir,
}

/// Runs a whole plan in its mode and evaluates on every eval manifest.
pub fn run_pipeline(plan: &ExperimentPlan, overwrite: bool) -> Result<PipelineOutput> {
    plan.validate()?;
    let train_manifest = load_manifest(&plan.train_manifest)?;
    let train = train_manifest.dataset_name.clone();
    let run = RunDir::create(&plan.output_dir, overwrite)?;
    let mut evals = Vec::with_capacity(plan.eval_manifests.len());
    for path in &plan.eval_manifests {
        evals.push(load_manifest(path)?);
    }
    for path in planned_outputs(plan, &run, &train, &evals) {
        run.guard(&path)?;
    }
    let plan_log = run.log(&format!("{}plan", mode_prefix(plan.mode)), &train);
    write_text(&plan_log, &plan.to_text())?;

    let cells = match plan.mode {
        PipelineMode::TripletPipeline => triplet_pipeline(plan, &run, &train, &evals)?,
        PipelineMode::BackboneOnly => baseline_pipeline(plan, &run, &train, &train_manifest, &evals)?,
    };
    Ok(PipelineOutput {
        train_dataset: train,
        cells,
        run_dir: run,
    })
}

/// Every file a plan run writes, so clobbering is refused before any work starts.
fn planned_outputs(plan: &ExperimentPlan, run: &RunDir, train: &str, evals: &[Manifest]) -> Vec<PathBuf> {
    let mode = plan.mode;
    let mut out = vec![run.log(&format!("{}plan", mode_prefix(mode)), train)];
    match mode {
        PipelineMode::TripletPipeline => out.extend([
            run.backbone_checkpoint(train),
            run.log("stage1", train),
            run.train_features(train),
            run.classifier_checkpoint(train),
            run.log("stage2", train),
        ]),
        PipelineMode::BackboneOnly => {
            out.extend([run.baseline_checkpoint(train), run.log("baseline", train)])
        }
    }
    for m in evals {
        let test = m.dataset_name.as_str();
        if mode == PipelineMode::TripletPipeline {
            out.push(run.test_features(train, test));
        }
        out.push(run.scores(mode, train, test));
        out.push(run.report(mode, train, test));
    }
    out
}

fn triplet_pipeline(
    plan: &ExperimentPlan,
    run: &RunDir,
    train: &str,
    evals: &[Manifest],
) -> Result<Vec<CrossCell>> {
    let backbone_path = run.backbone_checkpoint(train);
    let stage1 = run_stage1(plan, run.guard(&backbone_path)?)?;
    write_history(run.guard(&run.log("stage1", train))?, &stage1.history)?;

    let features_path = run.train_features(train);
    run_extract(
        &plan.config,
        &backbone_path,
        &plan.train_manifest,
        Some(Split::Train),
        run.guard(&features_path)?,
    )?;

    let before = file_sha256(&backbone_path)?;
    let classifier_path = run.classifier_checkpoint(train);
    let stage2 = run_stage2(&plan.config, &features_path, run.guard(&classifier_path)?)?;
    write_history(run.guard(&run.log("stage2", train))?, &stage2.history)?;
    if file_sha256(&backbone_path)? != before {
        return Err(Error::Checkpoint(
            "backbone checkpoint changed during classifier training".into(),
        ));
    }

    let backbone = &stage1.backbone;
    let classifier = &stage2.classifier;
    let mut cells = Vec::with_capacity(evals.len());
    for m in evals {
        let test = m.dataset_name.as_str();
        let rows = extract_features(backbone, m, Some(Split::Test))?;
        save_features(&rows, run.guard(&run.test_features(train, test))?)?;
        let records = score_features(classifier, &rows)?;
        let report = EvalReport::from_records(&records)?;
        let mode = PipelineMode::TripletPipeline;
        save_scores(&records, run.guard(&run.scores(mode, train, test))?)?;
        save_report(&report, run.guard(&run.report(mode, train, test))?)?;
        cells.push(CrossCell {
            train: train.to_string(),
            test: test.to_string(),
            report,
        });
    }
    Ok(cells)
}

fn baseline_pipeline(
    plan: &ExperimentPlan,
    run: &RunDir,
    train: &str,
    train_manifest: &Manifest,
    evals: &[Manifest],
) -> Result<Vec<CrossCell>> {
    let trained = train_backbone_only(train_manifest, &plan.config)?;
    let ckpt = BackboneCheckpoint::new(trained.backbone, &plan.config, trained.history);
    ckpt.save(run.guard(&run.baseline_checkpoint(train))?)?;
    write_history(run.guard(&run.log("baseline", train))?, &ckpt.history)?;

    let mode = PipelineMode::BackboneOnly;
    let mut cells = Vec::with_capacity(evals.len());
    for m in evals {
        let test = m.dataset_name.as_str();
        let records = score_baseline(&ckpt.backbone, m)?;
        let report = EvalReport::from_records(&records)?;
        save_scores(&records, run.guard(&run.scores(mode, train, test))?)?;
        save_report(&report, run.guard(&run.report(mode, train, test))?)?;
        cells.push(CrossCell {
            train: train.to_string(),
            test: test.to_string(),
            report,
        });
    }
    Ok(cells)
}

/// Trains one pipeline per plan and tabulates every (train, test) AUC.
#[derive(Debug, Clone)]
pub struct CrossOutput {
    pub cells: Vec<CrossCell>,
    pub table: String,
}

pub fn run_cross(plans: &[ExperimentPlan], overwrite: bool) -> Result<CrossOutput> {
    let mut cells = Vec::new();
    for plan in plans {
        cells.extend(run_pipeline(plan, overwrite)?.cells);
    }
    let table = cross_matrix(&cells);
    Ok(CrossOutput { cells, table })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub dataset: String,
    pub triplet: EvalReport,
    pub baseline: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub train_dataset: String,
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn render(&self) -> String {
        let mut out = format!(
            "train dataset {} (seed {})\n{:<16} {:>12} {:>12} {:>12} {:>12}\n",
            self.train_dataset, self.seed, "test", "triplet_auc", "triplet_acc", "base_auc", "base_acc"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<16} {:>12.4} {:>12.4} {:>12.4} {:>12.4}\n",
                r.dataset,
                r.triplet.auc,
                r.triplet.accuracy_at_half,
                r.baseline.auc,
                r.baseline.accuracy_at_half
            ));
        }
        out
    }
}

/// Runs the plan in both modes with the same seed, epochs and data, and pairs the
/// reports per eval dataset.
pub fn run_ablation(plan: &ExperimentPlan, overwrite: bool) -> Result<AblationReport> {
    let mut triplet_plan = plan.clone();
    triplet_plan.mode = PipelineMode::TripletPipeline;
    let mut baseline_plan = plan.clone();
    baseline_plan.mode = PipelineMode::BackboneOnly;

    let train = load_manifest(&plan.train_manifest)?.dataset_name;
    let report_path = RunDir {
        root: plan.output_dir.clone(),
        overwrite,
    }
    .ablation_report(&train);
    check_clobber(&report_path, overwrite)?;

    let triplet = run_pipeline(&triplet_plan, overwrite)?;
    let baseline = run_pipeline(&baseline_plan, overwrite)?;
    let rows = triplet
        .cells
        .into_iter()
        .zip(baseline.cells)
        .map(|(t, b)| AblationRow {
            dataset: t.test,
            triplet: t.report,
            baseline: b.report,
        })
        .collect();
    let report = AblationReport {
        train_dataset: train,
        seed: plan.config.seed,
        rows,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_text(&report_path, &(json + "\n"))?;
    Ok(report)
}
