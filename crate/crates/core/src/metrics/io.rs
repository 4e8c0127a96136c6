use std::fs;
use std::path::Path;

use super::{EvalReport, ScoreRecord};
use crate::error::{Error, Result};
use crate::manifest::Label;

const SCORE_HEADER: [&str; 3] = ["id", "label", "score"];

/// Score CSV text. Scores are written in shortest round-trip form, so reading the file
/// back reproduces every value exactly.
pub fn scores_to_csv(records: &[ScoreRecord]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(SCORE_HEADER).expect("in-memory write");
    for r in records {
        w.write_record([r.id.as_str(), &r.label.to_string(), &r.score.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

pub fn save_scores(records: &[ScoreRecord], path: &Path) -> Result<()> {
    fs::write(path, scores_to_csv(records)).map_err(|e| Error::io(path, e))
}

pub fn load_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::MalformedRow {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.iter().ne(SCORE_HEADER) {
        return Err(Error::MalformedHeader {
            expected: SCORE_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2;
        let row = row.map_err(|e| Error::MalformedRow {
            row: row_no,
            message: e.to_string(),
        })?;
        let id = row[0].to_string();
        let label = row[1]
            .parse::<u8>()
            .ok()
            .and_then(Label::from_int)
            .ok_or_else(|| Error::InvalidLabel {
                row: row_no,
                id: id.clone(),
                value: row[1].to_string(),
            })?;
        let score: f64 = row[2].parse().map_err(|_| Error::MalformedRow {
            row: row_no,
            message: format!("score `{}` is not a number", &row[2]),
        })?;
        out.push(ScoreRecord { id, label, score });
    }
    Ok(out)
}

pub fn save_report(report: &EvalReport, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_round_trip_exactly() {
        let records = vec![
            ScoreRecord::new("a,quoted", Label::Real, 0.1 + 0.2),
            ScoreRecord::new("b", Label::Fake, 1.0 / 3.0),
            ScoreRecord::new("c", Label::Fake, 5e-320),
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        save_scores(&records, &p).unwrap();
        assert_eq!(load_scores(&p).unwrap(), records);
        assert!(fs::read_to_string(&p).unwrap().starts_with("id,label,score\n"));
    }

    #[test]
    fn bad_label_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(&p, "id,label,score\nx,2,0.5\n").unwrap();
        assert!(matches!(
            load_scores(&p),
            Err(Error::InvalidLabel { row: 2, .. })
        ));
    }

    #[test]
    fn report_round_trip() {
        let report = EvalReport {
            auc: 0.987654321,
            eer: 0.05,
            eer_threshold: 0.4,
            accuracy_at_half: 0.95,
            n_real: 20,
            n_fake: 20,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        save_report(&report, &p).unwrap();
        assert_eq!(load_report(&p).unwrap(), report);
    }
}
