use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use facemanip::data::ingest::{DEFAULT_BOX_EXPANSION, DEFAULT_FRAME_STRIDE, DETECTOR_NAMES};
use facemanip::data::{detector_by_name, generate_synthetic, ingest_videos, ArtifactKind, IngestOptions, SyntheticSpec};
use facemanip::features::load_features;
use facemanip::metrics::{load_scores, save_report};
use facemanip::pipeline::{
    check_clobber, run_ablation, run_cross, run_eval, run_extract, run_stage1, run_stage2,
    train_backbone_only, write_history,
};
use facemanip::plot::write_plot;
use facemanip::{
    load_config, load_manifest, BackboneCheckpoint, Error, EvalReport, ExperimentPlan, Label,
    Manifest, RunConfig, Split,
};

/// Face-manipulation detection with a triplet-trained embedding and a small classifier.
#[derive(Debug, Parser)]
#[command(name = "facemanip", version)]
struct Cli {
    /// Seed for every random choice; overrides the seed in --config and in plan files.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Replace existing output files instead of refusing.
    #[arg(long, global = true)]
    overwrite: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LabelArg {
    Real,
    Fake,
}

impl From<LabelArg> for Label {
    fn from(l: LabelArg) -> Label {
        match l {
            LabelArg::Real => Label::Real,
            LabelArg::Fake => Label::Fake,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Triplet,
    Baseline,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Crop faces from videos (animated GIFs or frame directories) into a manifest.
    Ingest {
        /// Videos to ingest; frames of one video share its label and split.
        #[arg(required = true)]
        videos: Vec<PathBuf>,
        /// Output directory for crops, `manifest.csv` and `ingest.log`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        label: LabelArg,
        #[arg(long, default_value = "train", value_parser = ["train", "test"])]
        split: String,
        /// Dataset name written into every row.
        #[arg(long)]
        dataset: String,
        /// Manipulation method of fake videos.
        #[arg(long)]
        method: Option<String>,
        /// Keep every n-th frame.
        #[arg(long, default_value_t = DEFAULT_FRAME_STRIDE)]
        stride: usize,
        /// Side length of the square crops.
        #[arg(long, default_value_t = 299)]
        crop_size: usize,
        #[arg(long, default_value = "full-frame", value_parser = DETECTOR_NAMES)]
        detector: String,
        /// Scale applied to the detected box before squaring it.
        #[arg(long, default_value_t = DEFAULT_BOX_EXPANSION)]
        box_expansion: f64,
    },
    /// Generate a seeded synthetic dataset of real and manipulated face images.
    Synth {
        #[arg(long)]
        n_real: usize,
        #[arg(long)]
        n_fake: usize,
        /// Output directory for `images/` and `manifest.csv`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        image_size: usize,
        /// warp_patch, blur_patch or noise_patch.
        #[arg(long, default_value = "warp_patch")]
        kind: ArtifactKind,
        /// Artifact strength in (0, 1].
        #[arg(long, default_value_t = 0.5)]
        strength: f64,
        #[arg(long, default_value = "synthetic")]
        dataset: String,
    },
    /// Train a backbone on the TRAIN split: triplet embedding or backbone-only baseline.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Checkpoint path; the loss history goes next to it as `<out>.log`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "triplet")]
        mode: ModeArg,
    },
    /// Embed manifest images with a trained backbone and write a feature CSV.
    Extract {
        #[arg(long)]
        backbone: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        split: SplitArg,
    },
    /// Train the classifier on a feature CSV.
    Classify {
        /// Feature file; only its rows are used, so pass TRAIN-split features.
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute AUC and EER. With --backbone, --classifier and --manifest the TEST split is
    /// scored first and written to --scores; otherwise --scores is read.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, requires_all = ["classifier", "manifest"])]
        backbone: Option<PathBuf>,
        #[arg(long, requires = "backbone")]
        classifier: Option<PathBuf>,
        #[arg(long, requires = "backbone")]
        manifest: Option<PathBuf>,
        /// JSON report path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run one pipeline per plan and print the train x test AUC table.
    Cross {
        #[arg(long = "plan", required = true)]
        plans: Vec<PathBuf>,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a plan as triplet pipeline and as backbone-only baseline and compare them.
    Ablate {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Scatter plot of 2-D features as SVG plus a points CSV; prints the silhouette.
    Plot {
        #[arg(long)]
        features: PathBuf,
        /// SVG path.
        #[arg(long)]
        out: PathBuf,
        /// Points CSV path; defaults to `<svg stem>_points.csv` next to the SVG.
        #[arg(long)]
        points: Option<PathBuf>,
    },
}

type CliResult = Result<(), Error>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

impl Cli {
    fn run_config(&self) -> Result<RunConfig, Error> {
        let mut config = match &self.config {
            Some(path) => load_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    fn plan(&self, path: &Path) -> Result<ExperimentPlan, Error> {
        let mut plan = ExperimentPlan::load(path)?;
        if let Some(seed) = self.seed {
            plan.config.seed = seed;
        }
        Ok(plan)
    }

    fn guard(&self, paths: &[&Path]) -> CliResult {
        paths
            .iter()
            .try_for_each(|p| check_clobber(p, self.overwrite))
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> CliResult {
    match &cli.command {
        Command::Ingest {
            videos,
            out,
            label,
            split,
            dataset,
            method,
            stride,
            crop_size,
            detector,
            box_expansion,
        } => {
            let manifest_path = out.join("manifest.csv");
            let log_path = out.join("ingest.log");
            cli.guard(&[&manifest_path, &log_path])?;
            let detector = detector_by_name(detector)
                .ok_or_else(|| Error::Invalid(format!("unknown detector `{detector}`")))?;
            let opts = IngestOptions {
                crop_size: *crop_size,
                frame_stride: *stride,
                box_expansion: *box_expansion,
                label: (*label).into(),
                dataset: dataset.clone(),
                split: split.parse().map_err(Error::Invalid)?,
                method: method.clone(),
            };
            let mut output = ingest_videos(videos, detector.as_ref(), &opts, &out.join("images"))?;
            for s in &mut output.samples {
                if let Ok(rel) = s.image_path.strip_prefix(out) {
                    s.image_path = rel.to_path_buf();
                }
            }
            let n = output.samples.len();
            let manifest = Manifest::new(dataset.clone(), output.samples)?;
            manifest.save(&manifest_path)?;
            write(&log_path, &(output.log.join("\n") + "\n"))?;
            println!("{n} crops written to {}", manifest_path.display());
        }
        Command::Synth {
            n_real,
            n_fake,
            out,
            image_size,
            kind,
            strength,
            dataset,
        } => {
            cli.guard(&[&out.join("manifest.csv")])?;
            let spec = SyntheticSpec {
                n_real: *n_real,
                n_fake: *n_fake,
                image_size: *image_size,
                artifact_kind: *kind,
                artifact_strength: *strength,
                seed: cli.run_config()?.seed,
                dataset: dataset.clone(),
            };
            let m = generate_synthetic(&spec, out)?;
            println!("{} images written to {}", m.len(), out.display());
        }
        Command::Train { manifest, out, mode } => {
            let log = with_suffix(out, ".log");
            cli.guard(&[out, &log])?;
            let config = cli.run_config()?;
            let ckpt = match mode {
                ModeArg::Triplet => {
                    let plan = ExperimentPlan::new(manifest, vec![manifest.clone()], config, ".");
                    run_stage1(&plan, out)?
                }
                ModeArg::Baseline => {
                    let m = load_manifest(manifest)?;
                    let trained = train_backbone_only(&m, &config)?;
                    let ckpt = BackboneCheckpoint::new(trained.backbone, &config, trained.history);
                    ckpt.save(out)?;
                    ckpt
                }
            };
            write_history(&log, &ckpt.history)?;
            if let Some(last) = ckpt.history.last() {
                println!("final epoch loss {last}");
            }
            println!("checkpoint written to {}", out.display());
        }
        Command::Extract {
            backbone,
            manifest,
            out,
            split,
        } => {
            cli.guard(&[out])?;
            let mut config = cli.run_config()?;
            // The checkpoint decides the embedding size unless --config says otherwise.
            if cli.config.is_none() {
                config.embedding_dim = BackboneCheckpoint::load(backbone)?.backbone.embedding_dim();
            }
            let rows = run_extract(&config, backbone, manifest, split.split(), out)?;
            println!("{} feature rows written to {}", rows.len(), out.display());
        }
        Command::Classify { features, out } => {
            let log = with_suffix(out, ".log");
            cli.guard(&[out, &log])?;
            let ckpt = run_stage2(&cli.run_config()?, features, out)?;
            write_history(&log, &ckpt.history)?;
            println!("checkpoint written to {}", out.display());
        }
        Command::Eval {
            scores,
            backbone,
            classifier,
            manifest,
            report,
        } => {
            let report_path = report.clone().unwrap_or_else(|| scores.with_extension("json"));
            let report = match (backbone, classifier, manifest) {
                (Some(b), Some(c), Some(m)) => {
                    cli.guard(&[scores, &report_path])?;
                    run_eval(b, c, m, scores, &report_path)?
                }
                _ => {
                    cli.guard(&[&report_path])?;
                    let r = EvalReport::from_records(&load_scores(scores)?)?;
                    save_report(&r, &report_path)?;
                    r
                }
            };
            print!("{}", report.render());
        }
        Command::Cross { plans, out } => {
            if let Some(out) = out {
                cli.guard(&[out])?;
            }
            let plans = plans
                .iter()
                .map(|p| cli.plan(p))
                .collect::<Result<Vec<_>, _>>()?;
            let cross = run_cross(&plans, cli.overwrite)?;
            if let Some(out) = out {
                write(out, &cross.table)?;
            }
            print!("{}", cross.table);
        }
        Command::Ablate { plan } => {
            let plan = cli.plan(plan)?;
            let report = run_ablation(&plan, cli.overwrite)?;
            print!("{}", report.render());
        }
        Command::Plot {
            features,
            out,
            points,
        } => {
            let points = points.clone().unwrap_or_else(|| {
                let stem = out.file_stem().unwrap_or_default().to_string_lossy();
                out.with_file_name(format!("{stem}_points.csv"))
            });
            cli.guard(&[out, &points])?;
            let rows = load_features(features)?;
            let plot = write_plot(&rows, out, &points)?;
            println!("{} points, silhouette {:.4}", plot.points, plot.silhouette);
        }
    }
    Ok(())
}
