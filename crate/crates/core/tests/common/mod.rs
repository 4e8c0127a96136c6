#![allow(dead_code)]

use std::path::{Path, PathBuf};

use facemanip::data::{generate_synthetic, ArtifactKind, SyntheticSpec};
use facemanip::metrics::ScoreRecord;
use facemanip::{Label, RunConfig};

/// Writes a synthetic dataset under `root/name` and returns its manifest path.
pub fn synth(root: &Path, name: &str, kind: ArtifactKind, n: usize, size: usize, seed: u64) -> PathBuf {
    let dir = root.join(name);
    let spec = SyntheticSpec {
        image_size: size,
        artifact_kind: kind,
        dataset: name.into(),
        ..SyntheticSpec::new(n, n, seed)
    };
    generate_synthetic(&spec, &dir).unwrap();
    dir.join("manifest.csv")
}

/// A few cheap epochs on small crops.
pub fn quick_config(seed: u64) -> RunConfig {
    RunConfig {
        crop_size: 24,
        stage1_epochs: 2,
        stage1_batch: 4,
        stage2_epochs: 3,
        seed,
        ..RunConfig::default()
    }
}

/// Fraction of (fake, real) pairs ordered correctly, ties counting one half.
pub fn pairwise_auc(records: &[ScoreRecord]) -> f64 {
    let real: Vec<f64> = records.iter().filter(|r| r.label == Label::Real).map(|r| r.score).collect();
    let fake: Vec<f64> = records.iter().filter(|r| r.label == Label::Fake).map(|r| r.score).collect();
    let mut credit = 0.0;
    for f in &fake {
        for r in &real {
            if f > r {
                credit += 1.0;
            } else if f == r {
                credit += 0.5;
            }
        }
    }
    credit / (real.len() * fake.len()) as f64
}
