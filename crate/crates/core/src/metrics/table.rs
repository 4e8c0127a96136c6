use super::EvalReport;

/// One evaluated (train dataset, test dataset) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCell {
    pub train: String,
    pub test: String,
    pub report: EvalReport,
}

/// Renders a fraction in `[0, 1]` as a percentage with one decimal, rounding half up.
///
/// Rounding works on the shortest decimal form of the value, so `0.9985` gives `99.9`
/// even though its binary approximation sits just below the midpoint.
pub fn percent_one_decimal(fraction: f64) -> String {
    if !fraction.is_finite() || fraction < 0.0 {
        return "-".into();
    }
    let text = fraction.to_string();
    let (int_part, frac_part) = text.split_once('.').unwrap_or((&text, ""));
    let mut digits: Vec<u8> = frac_part.bytes().map(|b| b - b'0').collect();
    digits.resize(digits.len().max(4), 0);
    let mut tenths: u64 = int_part.parse::<u64>().expect("plain decimal") * 1000
        + digits[..3].iter().fold(0, |acc, &d| acc * 10 + d as u64);
    if digits[3] >= 5 {
        tenths += 1;
    }
    format!("{}.{}", tenths / 10, tenths % 10)
}

fn first_seen<'a>(names: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for n in names {
        if !out.contains(&n) {
            out.push(n);
        }
    }
    out
}

/// AUC(%) table with train datasets as rows and test datasets as columns, both in order
/// of first appearance. Intra-dataset cells carry a trailing `*`; pairs without a result
/// show `-`.
pub fn cross_matrix(results: &[CrossCell]) -> String {
    let rows = first_seen(results.iter().map(|c| c.train.as_str()));
    let cols = first_seen(results.iter().map(|c| c.test.as_str()));
    let corner = "train \\ test";

    let cell = |train: &str, test: &str| -> String {
        match results.iter().find(|c| c.train == train && c.test == test) {
            Some(c) => {
                let mut s = percent_one_decimal(c.report.auc);
                if train == test {
                    s.push('*');
                }
                s
            }
            None => "-".into(),
        }
    };

    let first_width = rows
        .iter()
        .map(|r| r.len())
        .chain([corner.len()])
        .max()
        .unwrap_or(0);
    let widths: Vec<usize> = cols.iter().map(|c| c.len().max(6)).collect();

    let mut out = format!("{corner:<first_width$}");
    for (c, w) in cols.iter().zip(&widths) {
        out.push_str(&format!("  {c:>w$}"));
    }
    out.push('\n');
    for r in &rows {
        out.push_str(&format!("{r:<first_width$}"));
        for (c, w) in cols.iter().zip(&widths) {
            out.push_str(&format!("  {:>w$}", cell(r, c)));
        }
        out.push('\n');
    }
    if !rows.is_empty() {
        out.push_str("* intra-dataset\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(auc: f64) -> EvalReport {
        EvalReport {
            auc,
            eer: 0.0,
            eer_threshold: 0.5,
            accuracy_at_half: 1.0,
            n_real: 1,
            n_fake: 1,
        }
    }

    fn cell(train: &str, test: &str, auc: f64) -> CrossCell {
        CrossCell {
            train: train.into(),
            test: test.into(),
            report: report(auc),
        }
    }

    #[test]
    fn empty_map_is_header_only() {
        assert_eq!(cross_matrix(&[]), "train \\ test\n");
    }

    #[test]
    fn single_intra_cell() {
        let t = cross_matrix(&[cell("A", "A", 0.999)]);
        assert_eq!(t, "train \\ test       A\nA              99.9*\n* intra-dataset\n");
    }

    #[test]
    fn missing_cells_are_dashes() {
        let t = cross_matrix(&[cell("A", "A", 1.0), cell("B", "A", 0.5), cell("B", "B", 0.75)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[1].split_whitespace().collect::<Vec<_>>(), ["A", "100.0*", "-"]);
        assert_eq!(lines[2].split_whitespace().collect::<Vec<_>>(), ["B", "50.0", "75.0*"]);
    }

    #[test]
    fn half_up_rounding() {
        // expected values from decimal ROUND_HALF_UP on the shortest representation
        for (x, want) in [
            (0.9985, "99.9"),
            (0.9975, "99.8"),
            (0.12345, "12.3"),
            (0.0005, "0.1"),
            (0.0004999, "0.0"),
            (1.0, "100.0"),
            (0.0, "0.0"),
            (0.5, "50.0"),
            (0.99949999, "99.9"),
            (0.9995, "100.0"),
        ] {
            assert_eq!(percent_one_decimal(x), want, "{x}");
        }
    }
}
