//! Aligned-text and CSV renderings. JSON output is plain serde.

use std::fmt::Write as _;

use super::{
    AgreementMatrix, DistributionReport, PermissionStats, ScoreGrid, SimilarityMatrix, TransitionMatrix,
    STOPWORD_LIST_VERSION,
};

fn csv_string(rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn stats_text(rows: &[PermissionStats]) -> String {
    let width = rows.iter().map(|r| r.permission_name.len()).max().unwrap_or(0).max(10);
    let mut out = format!(
        "{:<width$}  {:>5}  {:>5}  {:>5}  {:>3}  {:>3}  {:>5}\n",
        "permission", "mean", "std", "var", "min", "max", "count"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>5.2}  {:>5.2}  {:>5.2}  {:>3}  {:>3}  {:>5}{}",
            r.permission_name,
            r.mean,
            r.std,
            r.var,
            r.min,
            r.max,
            r.count,
            if r.single_sample { "  (single)" } else { "" }
        );
    }
    out
}

pub fn stats_csv(rows: &[PermissionStats]) -> Result<String, csv::Error> {
    let header = ["permission", "mean", "std", "var", "min", "max", "count"].map(String::from).to_vec();
    csv_string(std::iter::once(header).chain(rows.iter().map(|r| {
        vec![
            r.permission_name.clone(),
            format!("{:.2}", r.mean),
            format!("{:.2}", r.std),
            format!("{:.2}", r.var),
            r.min.to_string(),
            r.max.to_string(),
            r.count.to_string(),
        ]
    })))
}

fn grid_text(grid: &ScoreGrid, rows: &str, cols: &str) -> String {
    let mut out = format!("rows: {rows}, columns: {cols}\n     ");
    for c in 1..=5 {
        let _ = write!(out, "{c:>6}");
    }
    out.push('\n');
    for r in 1..=5u8 {
        let _ = write!(out, "{r:>5}");
        for c in 1..=5u8 {
            let _ = write!(out, "{:>6}", grid.get(r, c));
        }
        out.push('\n');
    }
    out
}

pub fn grid_csv(grid: &ScoreGrid) -> Result<String, csv::Error> {
    let header: Vec<String> = std::iter::once("score".to_string())
        .chain((1..=5).map(|c| c.to_string()))
        .collect();
    csv_string(std::iter::once(header).chain((1..=5u8).map(|r| {
        std::iter::once(r.to_string())
            .chain((1..=5u8).map(|c| grid.get(r, c).to_string()))
            .collect()
    })))
}

pub fn agreement_text(m: &AgreementMatrix) -> String {
    let mut out = grid_text(&m.grid, &m.left, &m.right);
    let _ = writeln!(out, "shared permissions: {}", m.shared());
    for (diff, count) in &m.diff_histogram {
        let _ = writeln!(out, "|diff| = {diff}: {count}");
    }
    out
}

pub fn transition_text(t: &TransitionMatrix) -> String {
    let mut out = grid_text(&t.grid, "old prompt", "new prompt");
    let _ = writeln!(
        out,
        "{}: higher {}, lower {}, same {} (total {})",
        t.model,
        t.higher,
        t.lower,
        t.same,
        t.higher + t.lower + t.same
    );
    out
}

pub fn distribution_text(d: &DistributionReport) -> String {
    let mut out = match &d.filter {
        Some(f) => format!("filter: {f}\n"),
        None => String::new(),
    };
    let _ = writeln!(out, "{:>5}  {:>6}  {:>6}", "score", "count", "pct");
    for (i, (count, pct)) in d.counts.iter().zip(d.percentages).enumerate() {
        let _ = writeln!(out, "{:>5}  {:>6}  {:>6.1}", i + 1, count, pct);
    }
    let _ = writeln!(out, "{:>5}  {:>6}", "total", d.total);
    out
}

pub fn distribution_csv(d: &DistributionReport) -> Result<String, csv::Error> {
    let header = ["score", "count", "percent"].map(String::from).to_vec();
    csv_string(std::iter::once(header).chain(
        d.counts
            .iter()
            .zip(d.percentages)
            .enumerate()
            .map(|(i, (c, p))| vec![(i + 1).to_string(), c.to_string(), format!("{p:.1}")]),
    ))
}

/// Header lines stating how the similarity numbers were produced.
pub fn similarity_header(n: usize) -> String {
    format!(
        "metric: Jaccard over unique word {n}-grams\n\
         tokens: lowercase, punctuation split, no stemming, numerals kept\n\
         stop-words: {STOPWORD_LIST_VERSION}\n"
    )
}

pub fn similarity_text(m: &SimilarityMatrix) -> String {
    let mut out = similarity_header(m.n);
    let width = m.models.iter().map(String::len).max().unwrap_or(0).max(6);
    let _ = write!(out, "{:<width$}", "");
    for model in &m.models {
        let _ = write!(out, "  {model:>width$}");
    }
    out.push('\n');
    for ((model, row), cov) in m.models.iter().zip(&m.values).zip(&m.coverage) {
        let _ = write!(out, "{model:<width$}");
        for v in row {
            let _ = write!(out, "  {v:>width$.3}");
        }
        let _ = writeln!(out, "  ({cov} texts)");
    }
    out
}

pub fn similarity_csv(m: &SimilarityMatrix) -> Result<String, csv::Error> {
    let header: Vec<String> = std::iter::once("model".to_string()).chain(m.models.iter().cloned()).collect();
    csv_string(std::iter::once(header).chain(m.models.iter().zip(&m.values).map(|(model, row)| {
        std::iter::once(model.clone())
            .chain(row.iter().map(|v| format!("{v:.6}")))
            .collect()
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{stats_for, DistributionReport};

    #[test]
    fn stats_renderings() {
        let rows = vec![stats_for("offline_access", &[1, 2, 2, 2, 2, 4]).unwrap()];
        let text = stats_text(&rows);
        assert!(text.lines().nth(1).unwrap().contains("2.17   0.98   0.97"), "{text}");
        let csv = stats_csv(&rows).unwrap();
        assert_eq!(csv.lines().nth(1), Some("offline_access,2.17,0.98,0.97,1,4,6"));
    }

    #[test]
    fn distribution_renderings() {
        let d = DistributionReport::from_counts([0, 10, 48, 298, 149], Some(r"\.All".into()));
        let csv = distribution_csv(&d).unwrap();
        assert_eq!(csv.lines().nth(3), Some("3,48,9.5"));
        assert!(distribution_text(&d).contains("  298    59.0"));
    }

    #[test]
    fn grid_csv_shape() {
        let csv = grid_csv(&ScoreGrid::default()).unwrap();
        assert_eq!(csv.lines().count(), 6);
        assert_eq!(csv.lines().next(), Some("score,1,2,3,4,5"));
    }
}
