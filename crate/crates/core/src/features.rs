//! Feature files: one embedding point per sample, CSV `id,e1,...,eE,label`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::manifest::Label;
use crate::tripletnet::EmbeddingPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub id: String,
    pub point: EmbeddingPoint,
    pub label: Label,
}

pub fn features_to_csv(rows: &[FeatureRow]) -> Result<String> {
    let dim = rows.first().map_or(0, |r| r.point.dim());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["id".to_string()];
    header.extend((1..=dim).map(|i| format!("e{i}")));
    header.push("label".into());
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        if r.point.dim() != dim {
            return Err(Error::ShapeMismatch {
                expected: format!("{dim}-dimensional features"),
                actual: format!("{} has {} coordinates", r.id, r.point.dim()),
            });
        }
        let mut fields = vec![r.id.clone()];
        fields.extend(r.point.coords.iter().map(|v| v.to_string()));
        fields.push(r.label.to_string());
        w.write_record(&fields).expect("in-memory write");
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input"))
}

pub fn save_features(rows: &[FeatureRow], path: &Path) -> Result<()> {
    fs::write(path, features_to_csv(rows)?).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: &Path) -> Result<Vec<FeatureRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::MalformedRow {
            row: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let dim = header.len().saturating_sub(2);
    let well_formed = header.len() >= 3
        && header[0] == "id"
        && header[header.len() - 1] == "label"
        && (1..=dim).all(|i| header[i] == format!("e{i}"));
    if !well_formed {
        return Err(Error::MalformedHeader {
            expected: "id,e1,...,eE,label".into(),
            found: header.join(","),
        });
    }

    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let id = rec[0].to_string();
        let coords = (1..=dim)
            .map(|j| {
                rec[j].parse::<f64>().map_err(|_| Error::MalformedRow {
                    row,
                    message: format!("coordinate `{}` is not a number", &rec[j]),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let raw = &rec[dim + 1];
        let label = raw
            .parse::<u8>()
            .ok()
            .and_then(Label::from_int)
            .ok_or_else(|| Error::InvalidLabel {
                row,
                id: id.clone(),
                value: raw.to_string(),
            })?;
        rows.push(FeatureRow {
            id,
            point: EmbeddingPoint::new(coords),
            label,
        });
    }
    Ok(rows)
}
