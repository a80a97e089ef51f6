use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Metrics;
use crate::error::{Error, Result};
use crate::sim::Category;

/// Metrics of one test scene, optionally with those of the unprocessed
/// combined view for comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scene_id: String,
    pub category: Category,
    pub metrics: Metrics,
    pub baseline: Option<Metrics>,
}

/// One method's scores per category. `combined` averages every record, not
/// the two category means.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub indoor: Option<Metrics>,
    pub outdoor: Option<Metrics>,
    pub combined: Metrics,
    pub counts: [usize; 2],
}

impl ReportRow {
    pub fn from_records(method: impl Into<String>, records: &[MetricsRecord]) -> Result<Self> {
        let method = method.into();
        let pick = |cat: Option<Category>| -> Vec<Metrics> {
            records
                .iter()
                .filter(|r| cat.is_none_or(|c| r.category == c))
                .map(|r| r.metrics)
                .collect()
        };
        let combined = Metrics::mean(&pick(None)).ok_or_else(|| Error::Data(format!("no records for `{method}`")))?;
        let indoor = pick(Some(Category::Indoor));
        let outdoor = pick(Some(Category::Outdoor));
        Ok(Self {
            counts: [indoor.len(), outdoor.len()],
            indoor: Metrics::mean(&indoor),
            outdoor: Metrics::mean(&outdoor),
            combined,
            method,
        })
    }

    fn cells(&self) -> Vec<String> {
        let mut out = vec![self.method.clone()];
        for m in [self.indoor, self.outdoor, Some(self.combined)] {
            match m {
                Some(m) => out.extend([format!("{:.4}", m.psnr), format!("{:.4}", m.ssim), format!("{:.4}", m.mae)]),
                None => out.extend([String::new(), String::new(), String::new()]),
            }
        }
        out
    }
}

/// Rows of methods against indoor / outdoor / combined PSNR, SSIM and MAE.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

const COLUMNS: [&str; 10] = [
    "method",
    "indoor_psnr",
    "indoor_ssim",
    "indoor_mae",
    "outdoor_psnr",
    "outdoor_ssim",
    "outdoor_mae",
    "combined_psnr",
    "combined_ssim",
    "combined_mae",
];

impl ReportTable {
    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(COLUMNS)?;
        for row in &self.rows {
            w.write_record(row.cells())?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Fixed-width text with a category header line above the metric names.
    pub fn to_text(&self) -> String {
        let method_width = self.rows.iter().map(|r| r.method.len()).chain([6]).max().unwrap_or(6);
        let cell = 8;
        let group = 3 * cell + 2 * 2;
        let mut s = String::new();
        let _ = write!(s, "{:method_width$}", "");
        for name in ["indoor", "outdoor", "combined"] {
            let _ = write!(s, " | {name:^group$}");
        }
        s.push('\n');
        let _ = write!(s, "{:method_width$}", "method");
        for _ in 0..3 {
            let _ = write!(s, " | {:>cell$}  {:>cell$}  {:>cell$}", "PSNR", "SSIM", "MAE");
        }
        s.push('\n');
        for row in &self.rows {
            let cells = row.cells();
            let _ = write!(s, "{:method_width$}", cells[0]);
            for g in cells[1..].chunks(3) {
                let _ = write!(s, " | {:>cell$}  {:>cell$}  {:>cell$}", g[0], g[1], g[2]);
            }
            s.push('\n');
        }
        s
    }

    pub fn write(&self, csv_path: &Path, text_path: &Path) -> Result<()> {
        write_file(csv_path, self.to_csv()?.as_bytes())?;
        write_file(text_path, self.to_text().as_bytes())
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Per-scene CSV, one line per record in the given order.
pub fn records_csv(records: &[MetricsRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scene_id",
        "category",
        "psnr",
        "ssim",
        "mae",
        "input_psnr",
        "input_ssim",
        "input_mae",
    ])?;
    for r in records {
        let mut row = vec![
            r.scene_id.clone(),
            r.category.to_string(),
            format!("{:.6}", r.metrics.psnr),
            format!("{:.6}", r.metrics.ssim),
            format!("{:.6}", r.metrics.mae),
        ];
        match r.baseline {
            Some(b) => row.extend([format!("{:.6}", b.psnr), format!("{:.6}", b.ssim), format!("{:.6}", b.mae)]),
            None => row.extend([String::new(), String::new(), String::new()]),
        }
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
