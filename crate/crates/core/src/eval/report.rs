use std::fmt::Write as _;
use std::path::Path;

use super::MetricsReport;
use crate::error::{Error, Result};

const DECIMALS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl ReportFormat {
    /// `.md` / `.markdown` select markdown, anything else JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("md") | Some("markdown") => ReportFormat::Markdown,
            _ => ReportFormat::Json,
        }
    }
}

/// Methods as rows, metric@k as columns. The best mean per column is bold;
/// stars on it come from the paired test against the runner-up.
pub fn to_markdown(r: &MetricsReport) -> String {
    let cols = r.columns();
    let mut out = String::new();
    out.push_str("| Method |");
    for (m, k) in &cols {
        let _ = write!(out, " {}@{} |", m.label(), k);
    }
    out.push_str("\n| --- |");
    for _ in &cols {
        out.push_str(" ---: |");
    }
    out.push('\n');
    let best: Vec<Option<usize>> = cols.iter().map(|&(m, k)| r.best(m, k)).collect();
    for (idx, method) in r.methods.iter().enumerate() {
        let _ = write!(out, "| {} |", method.name);
        for (c, &(m, k)) in cols.iter().enumerate() {
            let v = method.mean(m, k).unwrap_or(f64::NAN);
            let mut cell = format!("{v:.DECIMALS$}");
            if best[c] == Some(idx) {
                cell = format!("**{cell}**");
                if let Some(t) = r.test_for(m, k).filter(|t| t.best == method.name) {
                    cell.push_str(&t.test.stars().replace('*', "\\*"));
                }
            }
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    let c = &r.config;
    let _ = write!(
        out,
        "\nLevel: {}. Split: {}. Interactions: {} (skipped: {}). NDCG normalizer: {}.\n",
        c.level, c.split, r.n_interactions, r.skipped, c.normalizer
    );
    if !r.significance.is_empty() {
        out.push_str(
            "Bold marks the best value per column; stars give the paired t-test of that method \
             against the runner-up (\\* p < 0.05, \\*\\* p < 0.01, \\*\\*\\* p < 0.001).\n",
        );
    }
    out
}

/// Reads the rows of a table written by [`to_markdown`] back as
/// `(method, values)`.
pub fn parse_markdown_table(text: &str) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().filter(|l| l.starts_with('|')).enumerate() {
        if n < 2 {
            continue;
        }
        let cells: Vec<&str> = line.trim().trim_matches('|').split(" | ").map(str::trim).collect();
        let name = cells[0].to_string();
        let values = cells[1..]
            .iter()
            .map(|c| {
                let bare = c.replace("\\*", "").replace("**", "");
                bare.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::validation(format!("bad table cell '{c}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((name, values));
    }
    Ok(rows)
}

pub fn write_report(path: impl AsRef<Path>, r: &MetricsReport, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let body = match format {
        ReportFormat::Json => serde_json::to_string_pretty(r)? + "\n",
        ReportFormat::Markdown => to_markdown(r),
    };
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}
