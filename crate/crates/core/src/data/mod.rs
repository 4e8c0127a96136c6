//! Producing manifests of face crops: video ingestion behind a pluggable detector,
//! a seeded synthetic generator, and image loading.

pub mod image;
pub mod ingest;
pub mod synthetic;

pub use self::image::load_image;
pub use ingest::{
    detector_by_name, ingest_frames, ingest_video, ingest_videos, read_frames, FaceBox,
    FaceDetector, IngestOptions, IngestOutput,
};
pub use synthetic::{generate_synthetic, ArtifactKind, SyntheticSpec};
