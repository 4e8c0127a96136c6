use std::fs;
use std::path::PathBuf;

use facemanip::data::{generate_synthetic, load_image, ArtifactKind, SyntheticSpec};
use facemanip::manifest::PRISTINE;
use facemanip::{load_manifest, split_counts, Label, Manifest, Sample, Split, SplitCounts};

fn manifest_with(counts: SplitCounts) -> Manifest {
    let mut samples = Vec::with_capacity(counts.total());
    for split in Split::ALL {
        for label in Label::ALL {
            for i in 0..counts.get(split, label) {
                samples.push(Sample {
                    id: format!("{split}_{label}_{i}"),
                    image_path: PathBuf::from(format!("{i}.png")),
                    label,
                    dataset: "corpus".into(),
                    split,
                    method: Some(match label {
                        Label::Real => PRISTINE.into(),
                        Label::Fake => "swap".into(),
                    }),
                });
            }
        }
    }
    Manifest::new("corpus", samples).unwrap()
}

#[test]
fn large_corpus_counts_survive_a_csv_round_trip() {
    for counts in [
        SplitCounts {
            train_real: 115556,
            train_fake: 108935,
            test_real: 20393,
            test_fake: 20473,
        },
        SplitCounts {
            train_real: 10100,
            train_fake: 9761,
            test_real: 1783,
            test_fake: 1723,
        },
    ] {
        let m = manifest_with(counts);
        let back = Manifest::from_csv_str(&m.to_csv_string(), None).unwrap();
        assert_eq!(split_counts(&back), counts);
    }
}

#[test]
fn synthetic_split_is_eighty_twenty_per_class() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_synthetic(&SyntheticSpec::new(50, 50, 7), dir.path()).unwrap();
    let c = split_counts(&m);
    assert_eq!((c.train_real, c.train_fake, c.test_real, c.test_fake), (40, 40, 10, 10));
}

#[test]
fn synthetic_generation_is_a_pure_function_of_the_spec() {
    let spec = SyntheticSpec {
        artifact_kind: ArtifactKind::BlurPatch,
        image_size: 32,
        ..SyntheticSpec::new(6, 6, 3)
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = generate_synthetic(&spec, a.path()).unwrap();
    generate_synthetic(&spec, b.path()).unwrap();
    for s in &ma.samples {
        let pa = fs::read(a.path().join(&s.image_path)).unwrap();
        let pb = fs::read(b.path().join(&s.image_path)).unwrap();
        assert_eq!(pa, pb, "{}", s.id);
    }
    assert_eq!(
        fs::read(a.path().join("manifest.csv")).unwrap(),
        fs::read(b.path().join("manifest.csv")).unwrap()
    );

    let mut other = spec.clone();
    other.seed = 4;
    let c = tempfile::tempdir().unwrap();
    generate_synthetic(&other, c.path()).unwrap();
    let first = &ma.samples[0].image_path;
    assert_ne!(
        fs::read(a.path().join(first)).unwrap(),
        fs::read(c.path().join(first)).unwrap()
    );
}

#[test]
fn every_synthetic_image_loads_at_the_requested_size() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        image_size: 24,
        artifact_kind: ArtifactKind::NoisePatch,
        ..SyntheticSpec::new(4, 5, 1)
    };
    generate_synthetic(&spec, dir.path()).unwrap();
    let m = load_manifest(&dir.path().join("manifest.csv")).unwrap();
    assert_eq!(m.len(), 9);
    for s in &m.samples {
        let t = load_image(&m.resolve(s), 24).unwrap();
        assert_eq!(t.shape, vec![3, 24, 24]);
        assert!(t.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
