use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::runner::VerifyReport;
use crate::error::Result;

pub const CSV_HEADER: &str = "radius,measured,ci_lo,ci_hi,bound_proj,bound_aniso_i,bound_aniso_ii,branch";

/// `plot.csv` → `plot.config.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("config.json")
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Writes one CSV row per verify row and the resolved config next to it.
/// Exact rows leave the interval columns empty; so do absent branches.
/// Returns the sidecar path.
pub fn emit_plot_data(report: &VerifyReport, config: &ExperimentConfig, path: &Path) -> Result<PathBuf> {
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for row in &report.rows {
        let branch = serde_json::to_value(row.branch)?;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            row.radius,
            row.measured,
            cell(row.interval.map(|i| i.lower)),
            cell(row.interval.map(|i| i.upper)),
            cell(row.bounds.proj.as_ref().map(|b| b.value)),
            cell(row.bounds.aniso_all_delta.as_ref().map(|b| b.value)),
            cell(row.bounds.aniso_small_delta.as_ref().map(|b| b.value)),
            branch.as_str().unwrap_or_default(),
        )
        .expect("writing to a String cannot fail");
    }
    std::fs::write(path, csv)?;
    let sidecar = sidecar_path(path);
    std::fs::write(&sidecar, config.to_json()?)?;
    Ok(sidecar)
}
