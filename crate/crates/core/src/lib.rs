//! Two-stage face-manipulation detection.
//!
//! A backbone network is trained with a triplet loss to map face crops to low-dimensional
//! points where real and manipulated faces separate. A small fully connected classifier is
//! then trained on those points. The crate also provides dataset manifests, a synthetic
//! dataset generator, AUC/EER evaluation and a cross-dataset harness.

pub mod classifier;
pub mod config;
pub mod data;
pub mod error;
pub mod features;
pub mod manifest;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod plot;
pub mod tripletnet;

pub use classifier::{Classifier, ClassifierCheckpoint, ClassifierSpec};
pub use config::{load_config, BackboneKind, LossKind, RunConfig};
pub use error::{Error, Result};
pub use features::FeatureRow;
pub use manifest::{load_manifest, split_counts, Label, Manifest, Sample, Split, SplitCounts};
pub use metrics::{EvalReport, ScoreRecord};
pub use pipeline::{ExperimentPlan, PipelineMode};
pub use tripletnet::{Backbone, BackboneCheckpoint, BackboneSpec, EmbeddingPoint, TripletDistances};
