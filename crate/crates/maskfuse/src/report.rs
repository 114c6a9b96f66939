//! Report rendering: JSON with full-precision values and a plain-text table
//! with datasets as columns.

use maskfuse_core::MetricsReport;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub name: String,
    pub map: f64,
    pub mar: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_miou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub datasets: Vec<DatasetRow>,
    pub average_map: f64,
    pub average_mar: f64,
    pub combined: f64,
}

impl From<&MetricsReport> for ReportJson {
    fn from(r: &MetricsReport) -> Self {
        let miou = |name: &str| {
            r.semantic_miou
                .as_ref()
                .and_then(|v| v.iter().find(|(n, _)| n == name).map(|(_, x)| *x))
        };
        Self {
            datasets: r
                .per_dataset
                .iter()
                .map(|(name, m)| DatasetRow {
                    name: name.clone(),
                    map: m.map,
                    mar: m.mar,
                    semantic_miou: miou(name),
                })
                .collect(),
            average_map: r.average_map,
            average_mar: r.average_mar,
            combined: r.combined,
        }
    }
}

pub fn report_json(report: &MetricsReport) -> String {
    let mut s =
        serde_json::to_string_pretty(&ReportJson::from(report)).expect("reports always serialize");
    s.push('\n');
    s
}

/// Aligned table: mAP and mAR rows, plus a mean IoU row when semantic maps
/// were scored. Values are shown with two decimals.
pub fn report_table(report: &MetricsReport) -> String {
    let n = report.per_dataset.len();
    let fmt = |v: f64| format!("{v:.2}");
    let mut rows: Vec<Vec<String>> = Vec::new();

    let mut header = vec![String::new()];
    header.extend(report.per_dataset.iter().map(|(name, _)| name.clone()));
    header.push("Average".into());
    header.push("(mAP+mAR)/2".into());
    rows.push(header);

    let mut map_row = vec!["mAP".to_string()];
    map_row.extend(report.per_dataset.iter().map(|(_, m)| fmt(m.map)));
    map_row.push(fmt(report.average_map));
    map_row.push(fmt(report.combined));
    rows.push(map_row);

    let mut mar_row = vec!["mAR".to_string()];
    mar_row.extend(report.per_dataset.iter().map(|(_, m)| fmt(m.mar)));
    mar_row.push(fmt(report.average_mar));
    mar_row.push(String::new());
    rows.push(mar_row);

    if let Some(miou) = &report.semantic_miou {
        let mut row = vec!["mean IoU".to_string()];
        row.extend(report.per_dataset.iter().map(|(name, _)| {
            miou.iter()
                .find(|(n, _)| n == name)
                .map_or_else(|| "-".to_string(), |(_, v)| fmt(*v))
        }));
        row.extend([String::new(), String::new()]);
        rows.push(row);
    }

    let widths: Vec<usize> = (0..n + 3)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let mut line = format!("{:<w$}", row[0], w = widths[0]);
        for (cell, w) in row.iter().zip(&widths).skip(1) {
            line.push_str(&format!("  {cell:>w$}"));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
