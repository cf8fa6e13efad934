//! Summary statistics and SVG plots of evaluation rows.

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::evaluate::MetricRow;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const LINE_PLOT: &str = "dsc_vol_vs_views.svg";
pub const BAR_PLOT: &str = "metrics_by_method.svg";

/// Mean and sample standard deviation over the cases of one
/// (views, method) group.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub views: usize,
    pub method: String,
    pub cases: usize,
    pub dsc_proj_mean: f64,
    pub dsc_proj_std: f64,
    pub psnr_proj_mean: f64,
    pub psnr_proj_std: f64,
    pub dsc_vol_mean: f64,
    pub dsc_vol_std: f64,
    pub ssim_vol_mean: f64,
    pub ssim_vol_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 || !mean.is_finite() {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(rows: &[MetricRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, String), Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.views, r.method.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((views, method), g)| {
            let stat = |f: fn(&MetricRow) -> f64| mean_std(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (dpm, dps) = stat(|r| r.dsc_proj);
            let (ppm, pps) = stat(|r| r.psnr_proj);
            let (dvm, dvs) = stat(|r| r.dsc_vol);
            let (svm, svs) = stat(|r| r.ssim_vol);
            SummaryRow {
                views,
                method,
                cases: g.len(),
                dsc_proj_mean: dpm,
                dsc_proj_std: dps,
                psnr_proj_mean: ppm,
                psnr_proj_std: pps,
                dsc_vol_mean: dvm,
                dsc_vol_std: dvs,
                ssim_vol_mean: svm,
                ssim_vol_std: svs,
            }
        })
        .collect()
}

fn plot_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("plot: {e}"))
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

fn methods(summary: &[SummaryRow]) -> Vec<String> {
    let mut m: Vec<String> = summary.iter().map(|s| s.method.clone()).collect();
    m.sort();
    m.dedup();
    m
}

/// Mean volume Dice against the number of training views, one line per
/// method.
pub fn line_plot(path: &Path, summary: &[SummaryRow]) -> CliResult<()> {
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let max_views = summary.iter().map(|s| s.views).max().unwrap_or(1) as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption("Volume DSC vs training views", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(0.0..max_views + 1.0, 0.0..100.0)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("views")
        .y_desc("masked DSC (%)")
        .draw()
        .map_err(plot_err)?;
    for (k, method) in methods(summary).iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> = summary
            .iter()
            .filter(|s| &s.method == method)
            .map(|s| (s.views as f64, s.dsc_vol_mean))
            .collect();
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(method.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        chart
            .draw_series(pts.iter().map(|&p| Circle::new(p, 4, color.filled())))
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Grouped bars of mean volume Dice and SSIM per method at the smallest
/// view count.
pub fn bar_plot(path: &Path, summary: &[SummaryRow]) -> CliResult<()> {
    let Some(views) = summary.iter().map(|s| s.views).min() else {
        return Err(CliError::Data("nothing to plot".into()));
    };
    let rows: Vec<&SummaryRow> = summary.iter().filter(|s| s.views == views).collect();
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let n = rows.len() as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("Volume metrics at {views} views"), ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(0.0..n, 0.0..100.0)
        .map_err(plot_err)?;
    let labels: Vec<String> = rows.iter().map(|r| r.method.clone()).collect();
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(rows.len().max(1))
        .x_label_formatter(&|x| {
            let i = x.floor() as usize;
            labels.get(i).cloned().unwrap_or_default()
        })
        .y_desc("percent")
        .draw()
        .map_err(plot_err)?;
    let metrics: [(&str, fn(&SummaryRow) -> f64); 2] = [("DSC", |r| r.dsc_vol_mean), ("SSIM", |r| r.ssim_vol_mean)];
    for (k, (name, get)) in metrics.iter().enumerate() {
        let color = PALETTE[k];
        chart
            .draw_series(rows.iter().enumerate().map(|(i, r)| {
                let x0 = i as f64 + 0.1 + 0.4 * k as f64;
                Rectangle::new([(x0, 0.0), (x0 + 0.38, get(r).clamp(0.0, 100.0))], color.filled())
            }))
            .map_err(plot_err)?
            .label(*name)
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 12, y + 5)], color.filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// `summary.csv` plus both plots.
pub fn write_all(dir: &Path, rows: &[MetricRow]) -> CliResult<Vec<SummaryRow>> {
    let summary = summarize(rows);
    let path = dir.join(SUMMARY_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for s in &summary {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    line_plot(&dir.join(LINE_PLOT), &summary)?;
    bar_plot(&dir.join(BAR_PLOT), &summary)?;
    Ok(summary)
}
