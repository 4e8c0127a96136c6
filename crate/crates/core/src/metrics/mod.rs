//! ROC, AUC and EER over scored samples, plus score files and cross-dataset tables.
//!
//! Scores are fake-probabilities: higher means more likely manipulated. AUC is the
//! Mann-Whitney statistic with ties half-credited. EER comes from a discrete sweep over
//! the distinct scores (a sample is called fake iff `score >= t`).

mod io;
mod table;

pub use io::{load_report, load_scores, save_report, save_scores, scores_to_csv};
pub use table::{cross_matrix, percent_one_decimal, CrossCell};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub label: Label,
    pub score: f64,
}

impl ScoreRecord {
    pub fn new(id: impl Into<String>, label: Label, score: f64) -> Self {
        ScoreRecord {
            id: id.into(),
            label,
            score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub accuracy_at_half: f64,
    pub n_real: usize,
    pub n_fake: usize,
}

impl EvalReport {
    pub fn from_records(records: &[ScoreRecord]) -> Result<Self> {
        let (n_real, n_fake) = class_counts(records)?;
        let (eer, eer_threshold) = eer(records)?;
        Ok(EvalReport {
            auc: auc(records)?,
            eer,
            eer_threshold,
            accuracy_at_half: accuracy_at(records, 0.5),
            n_real,
            n_fake,
        })
    }

    /// Two-column `metric  value` text rendering.
    pub fn render(&self) -> String {
        format!(
            "auc               {:.6}\neer               {:.6}\neer_threshold     {:.6}\naccuracy_at_half  {:.6}\nn_real            {}\nn_fake            {}\n",
            self.auc, self.eer, self.eer_threshold, self.accuracy_at_half, self.n_real, self.n_fake
        )
    }
}

fn class_counts(records: &[ScoreRecord]) -> Result<(usize, usize)> {
    if let Some(r) = records.iter().find(|r| !(0.0..=1.0).contains(&r.score)) {
        return Err(Error::Invalid(format!(
            "score {} of `{}` is outside [0, 1]",
            r.score, r.id
        )));
    }
    let n_fake = records.iter().filter(|r| r.label == Label::Fake).count();
    let n_real = records.len() - n_fake;
    if n_real == 0 || n_fake == 0 {
        return Err(Error::SingleClass(format!(
            "metrics need both classes, got {n_real} real and {n_fake} fake"
        )));
    }
    Ok((n_real, n_fake))
}

/// Groups of equal score in ascending order, each as `(score, reals, fakes)`.
fn score_groups(records: &[ScoreRecord]) -> Vec<(f64, usize, usize)> {
    let mut sorted: Vec<(f64, Label)> = records.iter().map(|r| (r.score, r.label)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for (score, label) in sorted {
        match groups.last_mut() {
            Some(g) if g.0 == score => {}
            _ => groups.push((score, 0, 0)),
        }
        let g = groups.last_mut().expect("just pushed");
        match label {
            Label::Real => g.1 += 1,
            Label::Fake => g.2 += 1,
        }
    }
    groups
}

/// Mann-Whitney AUC in `O(n log n)`.
pub fn auc(records: &[ScoreRecord]) -> Result<f64> {
    let (n_real, n_fake) = class_counts(records)?;
    // Twice the credited pair count, kept as an integer so the sum is exact.
    let mut doubled: u128 = 0;
    let mut reals_below: u128 = 0;
    for (_, reals, fakes) in score_groups(records) {
        doubled += fakes as u128 * (2 * reals_below + reals as u128);
        reals_below += reals as u128;
    }
    Ok(doubled as f64 / (2.0 * n_real as f64 * n_fake as f64))
}

/// `(FPR, TPR)` when every score `>= t` is called fake.
pub fn rates_at(records: &[ScoreRecord], threshold: f64) -> (f64, f64) {
    let (mut fp, mut tp, mut n_real, mut n_fake) = (0usize, 0usize, 0usize, 0usize);
    for r in records {
        let called_fake = r.score >= threshold;
        match r.label {
            Label::Real => {
                n_real += 1;
                fp += called_fake as usize;
            }
            Label::Fake => {
                n_fake += 1;
                tp += called_fake as usize;
            }
        }
    }
    (fp as f64 / n_real as f64, tp as f64 / n_fake as f64)
}

/// Equal error rate and its threshold.
///
/// Returns `((FPR + FNR) / 2, t)` at the distinct score `t` minimizing `|FPR - FNR|`;
/// the smallest such threshold wins ties.
pub fn eer(records: &[ScoreRecord]) -> Result<(f64, f64)> {
    let (n_real, n_fake) = class_counts(records)?;
    let groups = score_groups(records);
    // Sweeping upward: start with everything called fake.
    let mut real_at_or_above = n_real;
    let mut fake_below = 0usize;
    let mut best: Option<(f64, f64, f64)> = None;
    for (score, reals, fakes) in groups {
        let fpr = real_at_or_above as f64 / n_real as f64;
        let fnr = fake_below as f64 / n_fake as f64;
        let gap = (fpr - fnr).abs();
        if best.is_none_or(|(g, _, _)| gap < g) {
            best = Some((gap, (fpr + fnr) / 2.0, score));
        }
        real_at_or_above -= reals;
        fake_below += fakes;
    }
    let (_, eer, threshold) = best.expect("at least two records");
    Ok((eer, threshold))
}

/// ROC points from `(0, 0)` to `(1, 1)`, one per distinct score.
pub fn roc_curve(records: &[ScoreRecord]) -> Result<Vec<(f64, f64)>> {
    let (n_real, n_fake) = class_counts(records)?;
    let mut points = vec![(0.0, 0.0)];
    let (mut fp, mut tp) = (0usize, 0usize);
    for (_, reals, fakes) in score_groups(records).into_iter().rev() {
        fp += reals;
        tp += fakes;
        points.push((fp as f64 / n_real as f64, tp as f64 / n_fake as f64));
    }
    Ok(points)
}

pub fn trapezoid_area(curve: &[(f64, f64)]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Fraction of records whose predicted label matches: fake iff `score > threshold`, so an
/// exact tie at 0.5 reads as real, like the classifier's argmax.
pub fn accuracy_at(records: &[ScoreRecord], threshold: f64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let correct = records
        .iter()
        .filter(|r| (r.score > threshold) == (r.label == Label::Fake))
        .count();
    correct as f64 / records.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(real: &[f64], fake: &[f64]) -> Vec<ScoreRecord> {
        let mut out = Vec::new();
        for (i, &s) in real.iter().enumerate() {
            out.push(ScoreRecord::new(format!("r{i}"), Label::Real, s));
        }
        for (i, &s) in fake.iter().enumerate() {
            out.push(ScoreRecord::new(format!("f{i}"), Label::Fake, s));
        }
        out
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&recs(&[0.1, 0.4], &[0.35, 0.8])).unwrap(), 0.75);
        assert_eq!(auc(&recs(&[0.1, 0.2], &[0.3, 0.9])).unwrap(), 1.0);
        assert_eq!(auc(&recs(&[0.5, 0.5], &[0.5, 0.5, 0.5])).unwrap(), 0.5);
    }

    #[test]
    fn eer_examples() {
        assert_eq!(eer(&recs(&[0.1, 0.2], &[0.3, 0.9])).unwrap().0, 0.0);
        assert_eq!(eer(&recs(&[0.9], &[0.1])).unwrap().0, 1.0);
        let (e, t) = eer(&recs(&[0.2, 0.6], &[0.4, 0.8])).unwrap();
        assert_eq!(e, 0.5);
        assert_eq!(t, 0.6);
    }

    #[test]
    fn eer_tie_goes_to_smallest_threshold() {
        // t = 0.2 gives (FPR, FNR) = (1, 0.5) and t = 0.3 gives (0, 0.5)
        let (e, t) = eer(&recs(&[0.2], &[0.1, 0.3])).unwrap();
        assert_eq!((e, t), (0.75, 0.2));
    }

    #[test]
    fn roc_examples() {
        assert_eq!(
            roc_curve(&recs(&[0.2], &[0.7])).unwrap(),
            vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
        );
        assert_eq!(
            roc_curve(&recs(&[0.4, 0.4], &[0.4])).unwrap(),
            vec![(0.0, 0.0), (1.0, 1.0)]
        );
    }

    #[test]
    fn single_class_is_rejected() {
        let only_real = recs(&[0.1, 0.2], &[]);
        assert!(matches!(auc(&only_real), Err(Error::SingleClass(_))));
        assert!(matches!(eer(&only_real), Err(Error::SingleClass(_))));
        assert!(matches!(roc_curve(&only_real), Err(Error::SingleClass(_))));
    }

    #[test]
    fn out_of_range_score_is_rejected() {
        assert!(auc(&recs(&[1.5], &[0.2])).is_err());
        assert!(auc(&recs(&[f64::NAN], &[0.2])).is_err());
    }

    #[test]
    fn report_accuracy_uses_strict_half() {
        let r = EvalReport::from_records(&recs(&[0.5, 0.2], &[0.5, 0.9])).unwrap();
        assert_eq!(r.accuracy_at_half, 0.75);
        assert_eq!((r.n_real, r.n_fake), (2, 2));
    }
}
