//! Run comparison reports: one row per run directory with the method
//! label, split sizes, accuracies, and the generalization gap, emitted as
//! an aligned text table and as line-delimited records.
//!
//! Accuracies are carried in tenths of a percentage point so the gap is
//! integer arithmetic — `(96.0, 69.0)` yields exactly `−27.0`, never a
//! float artifact.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::trainer::{atomic_write, read_jsonl, EpochMetrics, RunLayout};

/// One run's summary line. The `_tenths` fields are the exact values
/// (96.0% → 960); the string fields are their one-decimal renderings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run_dir: String,
    pub method: String,
    pub epochs: usize,
    pub train_size: usize,
    pub val_acc_tenths: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_acc_tenths: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_tenths: Option<i64>,
    pub val_acc: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_acc: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

/// An accuracy fraction as tenths of a percentage point: 0.963 → 963.
pub fn percent_tenths(fraction: f64) -> i64 {
    (fraction * 1000.0).round() as i64
}

/// Tenths rendered with one decimal: 963 → "96.3". Negative values keep
/// an ASCII hyphen; gaps go through [`render_gap`] instead.
pub fn render_tenths(tenths: i64) -> String {
    let sign = if tenths < 0 { "-" } else { "" };
    let magnitude = tenths.abs();
    format!("{sign}{}.{}", magnitude / 10, magnitude % 10)
}

/// A gap in tenths rendered with an explicit sign: negative gaps use the
/// typographic minus (−27.0), positive a plus (+2.9), zero no sign (0.0).
pub fn render_gap(tenths: i64) -> String {
    match tenths.cmp(&0) {
        Ordering::Less => format!("\u{2212}{}", render_tenths(-tenths)),
        Ordering::Equal => "0.0".to_string(),
        Ordering::Greater => format!("+{}", render_tenths(tenths)),
    }
}

/// Build one report row from a run directory's config snapshot and final
/// metrics line. Runs without a test accuracy get `None` gap fields.
pub fn row_from_run_dir(run_dir: &Path) -> Result<ReportRow> {
    let layout = RunLayout::new(run_dir);
    let config = RunConfig::load(&layout.config_snapshot())?;
    let metrics: Vec<EpochMetrics> = read_jsonl(&layout.metrics())?;
    let last = metrics.last().ok_or_else(|| {
        Error::Precondition(format!("run directory {} has no metrics", run_dir.display()))
    })?;
    let val_acc_tenths = percent_tenths(last.val_acc);
    let test_acc_tenths = last.test_acc.map(percent_tenths);
    let gap_tenths = test_acc_tenths.map(|t| t - val_acc_tenths);
    let train_size = config
        .resolved
        .as_ref()
        .map(|r| r.train_size)
        .unwrap_or(0);
    Ok(ReportRow {
        run_dir: run_dir.display().to_string(),
        method: config.method_label().to_string(),
        epochs: config.run.epochs,
        train_size,
        val_acc_tenths,
        test_acc_tenths,
        gap_tenths,
        val_acc: render_tenths(val_acc_tenths),
        test_acc: test_acc_tenths.map(render_tenths),
        gap: gap_tenths.map(render_gap),
    })
}

/// Comparison report over several finished runs. Every run must have a
/// final metrics line carrying both validation and test accuracy.
pub fn make_report(run_dirs: &[PathBuf]) -> Result<Report> {
    if run_dirs.is_empty() {
        return Err(Error::Precondition("no run directories given".into()));
    }
    let mut rows = Vec::with_capacity(run_dirs.len());
    for dir in run_dirs {
        let row = row_from_run_dir(dir)?;
        if row.test_acc_tenths.is_none() {
            return Err(Error::Precondition(format!(
                "run directory {} has no test accuracy in its final metrics line",
                dir.display()
            )));
        }
        rows.push(row);
    }
    Ok(Report { rows })
}

/// Write a run's own single-row report files (report.txt, report.jsonl)
/// into its directory. Lenient about a missing test split.
pub fn write_run_report(run_dir: &Path) -> Result<()> {
    let layout = RunLayout::new(run_dir);
    let report = Report {
        rows: vec![row_from_run_dir(run_dir)?],
    };
    atomic_write(&layout.report_text(), report.render_table().as_bytes())?;
    atomic_write(&layout.report_records(), report.to_records()?.as_bytes())?;
    Ok(())
}

impl Report {
    /// Aligned text table: method column left-aligned, numbers right-aligned.
    pub fn render_table(&self) -> String {
        const HEADERS: [&str; 6] = ["Method", "Epochs", "Train Size", "Val Acc", "Test Acc", "Gap"];
        let cells: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|row| {
                [
                    row.method.clone(),
                    row.epochs.to_string(),
                    row.train_size.to_string(),
                    row.val_acc.clone(),
                    row.test_acc.clone().unwrap_or_else(|| "n/a".to_string()),
                    row.gap.clone().unwrap_or_else(|| "n/a".to_string()),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = HEADERS.iter().map(|h| h.chars().count()).collect();
        for row in &cells {
            for (w, cell) in widths.iter_mut().zip(row.iter()) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let render_line = |cols: &[String; 6]| -> String {
            let mut line = String::new();
            for (i, (cell, w)) in cols.iter().zip(&widths).enumerate() {
                if i > 0 {
                    line.push_str("  ");
                }
                let pad = w - cell.chars().count();
                if i == 0 {
                    line.push_str(cell);
                    line.push_str(&" ".repeat(pad));
                } else {
                    line.push_str(&" ".repeat(pad));
                    line.push_str(cell);
                }
            }
            while line.ends_with(' ') {
                line.pop();
            }
            line
        };
        let header: [String; 6] = HEADERS.map(str::to_string);
        out.push_str(&render_line(&header));
        out.push('\n');
        for row in &cells {
            out.push_str(&render_line(row));
            out.push('\n');
        }
        out
    }

    /// One JSON record per row, newline-delimited.
    pub fn to_records(&self) -> Result<String> {
        let mut out = String::new();
        for row in &self.rows {
            let line = serde_json::to_string(row)
                .map_err(|e| Error::Config(format!("report row serialization: {e}")))?;
            out.push_str(&line);
            out.push('\n');
        }
        Ok(out)
    }
}
