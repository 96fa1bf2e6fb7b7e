//! Text rendering of a run report.

use std::fmt::Write;

use neopain_core::eval::percent;

use crate::run::RunReport;

const HEADER: [&str; 7] = ["Arch", "Tap", "Dims", "Selection", "Classifier", "Accuracy", "AUC"];

pub fn render_table(report: &RunReport) -> String {
    let rows: Vec<[String; 7]> = report
        .records
        .iter()
        .map(|r| {
            [
                r.architecture.clone(),
                r.tap.clone(),
                r.dims.to_string(),
                r.selection.clone(),
                r.classifier.clone(),
                percent(r.accuracy),
                r.auc.map_or("-".to_string(), |a| format!("{a:.3}")),
            ]
        })
        .collect();
    let mut widths = HEADER.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        writeln!(out, "{}", parts.join("  ").trim_end()).unwrap();
    };
    line(&mut out, &HEADER);
    for row in &rows {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    if !report.comparisons.is_empty() {
        out.push('\n');
        for c in &report.comparisons {
            writeln!(
                out,
                "{} vs {}: AUC {:.3} vs {:.3}, z = {:.3}, p = {:.4}{}",
                c.a,
                c.b,
                c.result.auc_a,
                c.result.auc_b,
                c.result.z,
                c.result.p,
                if c.result.significant { " *" } else { "" }
            )
            .unwrap();
        }
    }
    if !report.failures.is_empty() {
        writeln!(out, "\n{} failure(s):", report.failures.len()).unwrap();
        for f in &report.failures {
            writeln!(out, "  {} [{}]: {}", f.video_id, f.stage, f.message).unwrap();
        }
    }
    out
}
