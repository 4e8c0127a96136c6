//! Labeled face-crop samples and the CSV manifest that lists them.
//!
//! A manifest file has the fixed header `id,image_path,label,dataset,split,method`,
//! UTF-8, LF line endings. Labels are the integers `0` (real) and `1` (fake).

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 6] = ["id", "image_path", "label", "dataset", "split", "method"];

/// Method tag carried by real samples that name their provenance explicitly.
pub const PRISTINE: &str = "pristine";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Real = 0,
    Fake = 1,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Real, Label::Fake];

    pub fn as_int(self) -> u8 {
        self as u8
    }

    pub fn from_int(value: u8) -> Option<Label> {
        match value {
            0 => Some(Label::Real),
            1 => Some(Label::Fake),
            _ => None,
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Real => Label::Fake,
            Label::Fake => Label::Real,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_int())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub const ALL: [Split; 2] = [Split::Train, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub image_path: PathBuf,
    pub label: Label,
    pub dataset: String,
    pub split: Split,
    pub method: Option<String>,
}

impl Sample {
    fn validate(&self, row: usize) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::MalformedRow {
                row,
                message: "empty id".into(),
            });
        }
        if self.image_path.as_os_str().is_empty() {
            return Err(Error::MalformedRow {
                row,
                message: format!("sample `{}` has an empty image_path", self.id),
            });
        }
        if let (Label::Real, Some(method)) = (self.label, &self.method) {
            if method != PRISTINE {
                return Err(Error::MalformedRow {
                    row,
                    message: format!(
                        "real sample `{}` carries manipulation method `{method}`",
                        self.id
                    ),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub dataset_name: String,
    pub samples: Vec<Sample>,
    /// Directory that relative `image_path`s are resolved against (the manifest's own
    /// directory when loaded from disk). Not serialized.
    pub base_dir: PathBuf,
}

/// Per-(split, label) sample counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train_real: usize,
    pub train_fake: usize,
    pub test_real: usize,
    pub test_fake: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split, label: Label) -> usize {
        match (split, label) {
            (Split::Train, Label::Real) => self.train_real,
            (Split::Train, Label::Fake) => self.train_fake,
            (Split::Test, Label::Real) => self.test_real,
            (Split::Test, Label::Fake) => self.test_fake,
        }
    }

    fn slot(&mut self, split: Split, label: Label) -> &mut usize {
        match (split, label) {
            (Split::Train, Label::Real) => &mut self.train_real,
            (Split::Train, Label::Fake) => &mut self.train_fake,
            (Split::Test, Label::Real) => &mut self.test_real,
            (Split::Test, Label::Fake) => &mut self.test_fake,
        }
    }

    pub fn total(&self) -> usize {
        self.train_real + self.train_fake + self.test_real + self.test_fake
    }
}

impl Manifest {
    /// Builds a manifest, checking the same row invariants `load_manifest` enforces.
    pub fn new(dataset_name: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for (i, sample) in samples.iter().enumerate() {
            let row = i + 1;
            sample.validate(row)?;
            if !seen.insert(sample.id.as_str()) {
                return Err(Error::DuplicateId {
                    row,
                    id: sample.id.clone(),
                });
            }
        }
        Ok(Manifest {
            dataset_name: dataset_name.into(),
            samples,
            base_dir: PathBuf::new(),
        })
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    /// Absolute or base-relative location of a sample's image.
    pub fn resolve(&self, sample: &Sample) -> PathBuf {
        if sample.image_path.is_absolute() {
            sample.image_path.clone()
        } else {
            self.base_dir.join(&sample.image_path)
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    /// Serializes to the canonical CSV form.
    pub fn to_csv_string(&self) -> String {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer
            .write_record(MANIFEST_HEADER)
            .expect("writing to a Vec cannot fail");
        for s in &self.samples {
            let path = s.image_path.to_string_lossy();
            let label = s.label.as_int().to_string();
            writer
                .write_record([
                    s.id.as_str(),
                    path.as_ref(),
                    label.as_str(),
                    s.dataset.as_str(),
                    s.split.as_str(),
                    s.method.as_deref().unwrap_or(""),
                ])
                .expect("writing to a Vec cannot fail");
        }
        let bytes = writer.into_inner().expect("flushing a Vec cannot fail");
        String::from_utf8(bytes).expect("manifest fields are UTF-8")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv_str(text: &str, dataset_name: Option<&str>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(text.as_bytes());
        let mut records = reader.records();

        let header = match records.next() {
            Some(Ok(h)) => h,
            Some(Err(e)) => {
                return Err(Error::MalformedHeader {
                    expected: MANIFEST_HEADER.join(","),
                    found: e.to_string(),
                })
            }
            None => {
                return Err(Error::MalformedHeader {
                    expected: MANIFEST_HEADER.join(","),
                    found: String::new(),
                })
            }
        };
        if header.iter().ne(MANIFEST_HEADER.iter().copied()) {
            return Err(Error::MalformedHeader {
                expected: MANIFEST_HEADER.join(","),
                found: header.iter().collect::<Vec<_>>().join(","),
            });
        }

        let mut samples = Vec::new();
        let mut seen = HashSet::new();
        for (i, record) in records.enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| Error::MalformedRow {
                row,
                message: e.to_string(),
            })?;
            if record.len() != MANIFEST_HEADER.len() {
                return Err(Error::MalformedRow {
                    row,
                    message: format!("expected 6 fields, found {}", record.len()),
                });
            }
            let id = record[0].to_string();
            let label = match record[2].trim() {
                "0" => Label::Real,
                "1" => Label::Fake,
                other => {
                    return Err(Error::InvalidLabel {
                        row,
                        id,
                        value: other.to_string(),
                    })
                }
            };
            let split = record[4]
                .parse::<Split>()
                .map_err(|message| Error::MalformedRow { row, message })?;
            let method = match &record[5] {
                "" => None,
                m => Some(m.to_string()),
            };
            let sample = Sample {
                id,
                image_path: PathBuf::from(&record[1]),
                label,
                dataset: record[3].to_string(),
                split,
                method,
            };
            sample.validate(row)?;
            if !seen.insert(sample.id.clone()) {
                return Err(Error::DuplicateId { row, id: sample.id });
            }
            samples.push(sample);
        }

        let dataset_name = match dataset_name {
            Some(name) => name.to_string(),
            None => samples
                .first()
                .map(|s| s.dataset.clone())
                .unwrap_or_default(),
        };
        Ok(Manifest {
            dataset_name,
            samples,
            base_dir: PathBuf::new(),
        })
    }
}

/// Reads a manifest CSV, preserving row order. Row numbers in errors are 1-based data rows.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Manifest::from_csv_str(&text, None)?.with_base_dir(base))
}

pub fn split_counts(manifest: &Manifest) -> SplitCounts {
    let mut counts = SplitCounts::default();
    for s in &manifest.samples {
        *counts.slot(s.split, s.label) += 1;
    }
    counts
}
