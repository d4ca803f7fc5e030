//! Evaluation reports as CSV and as an aligned text table, columns in the
//! order MS-SSIM, NCC, MAE, MMD.

use std::fs;
use std::path::Path;

use alphagan_core::metrics::{MetricReport, Summary};

use crate::error::{Error, Result};

pub const REPORT_HEADER: &str = "model,ms_ssim_mean,ms_ssim_std,ncc_mean,ncc_std,mae_mean,mae_std,mmd_mean,mmd_std,\
ms_ssim_comparisons,pair_comparisons,mmd_trials";

fn cells(s: Option<&Summary>) -> String {
    match s {
        Some(s) => format!("{},{}", s.mean, s.std),
        None => ",".into(),
    }
}

/// A model row and a `real` row holding the real-set MS-SSIM.
pub fn report_csv(model: &str, report: &MetricReport) -> String {
    let p = &report.protocol;
    let counts = format!("{},{},{}", report.ms_ssim_comparisons(), p.pair_comparisons, p.mmd_trials);
    let model_row = [
        model.to_string(),
        cells(Some(&report.ms_ssim_generated)),
        cells(Some(&report.ncc)),
        cells(Some(&report.mae)),
        cells(Some(&report.mmd)),
        counts,
    ]
    .join(",");
    let real_row = [
        "real".to_string(),
        cells(Some(&report.ms_ssim_real)),
        cells(None),
        cells(None),
        cells(None),
        format!("{},,", report.ms_ssim_comparisons()),
    ]
    .join(",");
    format!("{REPORT_HEADER}\n{model_row}\n{real_row}\n")
}

pub fn report_table(model: &str, report: &MetricReport) -> String {
    let pm = |s: &Summary| format!("{:.4} ± {:.4}", s.mean, s.std);
    let rows = [
        [model.to_string(), pm(&report.ms_ssim_generated), pm(&report.ncc), pm(&report.mae), pm(&report.mmd)],
        ["real".to_string(), pm(&report.ms_ssim_real), "-".into(), "-".into(), "-".into()],
    ];
    let head = ["", "MS-SSIM", "NCC ↑", "MAE ↓", "MMD ↓"].map(String::from);
    let mut widths = [0usize; 5];
    for row in std::iter::once(&head).chain(&rows) {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |row: &[String; 5]| {
        let cols: Vec<String> = row
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("{}\n", cols.join("  ").trim_end())
    };
    let mut out = line(&head);
    for r in &rows {
        out.push_str(&line(r));
    }
    out
}

pub fn write_report(path: impl AsRef<Path>, model: &str, report: &MetricReport) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, report_csv(model, report)).map_err(|e| Error::io(path, e))
}
