use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::evaluate::{read_metrics, METRICS_FILE};
use crate::plots::{self, SummaryRow};
use crate::write_file;

pub const REPORT_FILE: &str = "report.md";

fn cell(mean: f64, std: f64) -> String {
    if mean.is_finite() {
        format!("{mean:.2} ± {std:.2}")
    } else {
        format!("{mean}")
    }
}

/// Markdown table of per-group means with the evaluation settings that
/// define them.
pub fn render_report(summary: &[SummaryRow], cfg: &RunConfig) -> String {
    let mut out = String::from("# Reconstruction report\n\n");
    let e = &cfg.eval;
    let _ = writeln!(
        out,
        "Metric mask: ground-truth support dilated by {} voxels (volumes) or {} pixels (held-out renders). \
         Volume Dice binarizes at {} after clamping to [0, 1]; render Dice binarizes at {} of the ground-truth render maximum.\n",
        e.mask_dilation, e.mask_dilation, e.dsc_threshold, e.projection_threshold
    );
    out.push_str("| views | method | cases | DSC proj | PSNR proj (dB) | DSC vol | SSIM vol |\n");
    out.push_str("|---:|:---|---:|---:|---:|---:|---:|\n");
    for s in summary {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            s.views,
            s.method,
            s.cases,
            cell(s.dsc_proj_mean, s.dsc_proj_std),
            cell(s.psnr_proj_mean, s.psnr_proj_std),
            cell(s.dsc_vol_mean, s.dsc_vol_std),
            cell(s.ssim_vol_mean, s.ssim_vol_std)
        );
    }
    out.push_str(&format!("\nPlots: `{}`, `{}`.\n", plots::LINE_PLOT, plots::BAR_PLOT));
    out
}

/// Reads `metrics.csv` from `dir`, refreshes the summary and plots, and
/// writes `report.md` next to them. Returns the report path.
pub fn cmd_report(cfg: &RunConfig, dir: &Path) -> CliResult<PathBuf> {
    let rows = read_metrics(&dir.join(METRICS_FILE))?;
    let summary = plots::write_all(dir, &rows)?;
    let text = render_report(&summary, cfg);
    let path = dir.join(REPORT_FILE);
    write_file(&path, &text)?;
    print!("{text}");
    Ok(path)
}
