use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vesselgs_core::geometry::{make_schedule, ConeBeamGeometry};
use vesselgs_core::metrics::{masked_dsc, masked_psnr, ssim3d, BinaryVolume, EvalMask};
use vesselgs_core::projector::forward_project;
use vesselgs_core::volume::VoxelGrid;

use crate::config::{EvalConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::read_volume;
use crate::plots;
use crate::reconstruct::dataset_geometry;
use crate::simulate::read_manifest;
use crate::with_pool;

pub const METRICS_FILE: &str = "metrics.csv";
pub const FLAG_OK: &str = "ok";
pub const FLAG_COLLISION: &str = "angle_collision";

/// One line of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub case_id: String,
    pub views: usize,
    pub method: String,
    pub dsc_proj: f64,
    pub psnr_proj: f64,
    pub dsc_vol: f64,
    pub ssim_vol: f64,
    pub flag: String,
}

fn clamp01(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.clamp(0.0, 1.0)).collect()
}

/// Volume scores of `pred` against `gt`: masked Dice and 3D SSIM, both on
/// values clamped to `[0, 1]`.
pub fn volume_scores(pred: &VoxelGrid, gt: &VoxelGrid, cfg: &EvalConfig) -> CliResult<(f64, f64)> {
    pred.ensure_same_shape(gt)?;
    let shape = gt.spec.shape;
    let mask = EvalMask::from_ground_truth(shape, &gt.data, cfg.mask_dilation)?;
    let p = clamp01(&pred.data);
    let g = clamp01(&gt.data);
    Ok((masked_dsc(&p, &g, &mask, cfg.dsc_threshold)?, ssim3d(shape, &p, &g)?))
}

/// Renders `pred` and `gt` at `angles` and scores the renders: Dice at
/// `projection_threshold` and PSNR, both inside the dilated support of the
/// ground-truth renders and after dividing by their maximum.
pub fn projection_scores(
    pred: &VoxelGrid,
    gt: &VoxelGrid,
    geom: &ConeBeamGeometry,
    angles: &[f64],
    cfg: &EvalConfig,
) -> CliResult<(f64, f64)> {
    let rp = forward_project(pred, geom, angles)?;
    let rg = forward_project(gt, geom, angles)?;
    let peak = rg.max();
    if !(peak > 0.0) {
        return Err(CliError::Data(
            "ground truth renders are empty at the evaluation angles".into(),
        ));
    }
    let (rows, cols) = (geom.detector_rows, geom.detector_cols);
    let mut mask = Vec::with_capacity(rows * cols * angles.len());
    for img in &rg.images {
        mask.extend(
            EvalMask::from_ground_truth([cols, rows, 1], &img.data, cfg.mask_dilation)?
                .0
                .data,
        );
    }
    let mask = EvalMask(BinaryVolume::from_data([cols, rows, angles.len()], mask)?);
    let flat = |s: &vesselgs_core::projector::ProjectionSet| -> Vec<f64> {
        s.images.iter().flat_map(|i| i.data.iter().map(|v| v / peak)).collect()
    };
    let (p, g) = (flat(&rp), flat(&rg));
    let dsc = masked_dsc(&p, &g, &mask, cfg.projection_threshold)?;
    let psnr = masked_psnr(&p, &g, &mask)?;
    Ok((dsc, psnr))
}

fn sorted_subdirs(dir: &Path, prefix: &str) -> CliResult<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.path().is_dir() && name.starts_with(prefix) {
            out.push((name, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

fn collides(a: f64, training: &[f64]) -> bool {
    let tau = std::f64::consts::TAU;
    training.iter().any(|&t| {
        let d = (a - t).rem_euclid(tau);
        d.min(tau - d) < 1e-9
    })
}

struct CaseJob {
    views: usize,
    case: String,
    dir: PathBuf,
}

fn evaluate_case(
    job: &CaseJob,
    dataset: &Path,
    geom: &ConeBeamGeometry,
    heldout: &[f64],
    flag: &str,
    cfg: &EvalConfig,
) -> CliResult<Vec<MetricRow>> {
    let (gt, _) = read_volume(&dataset.join(&job.case).join("volume.raw"))?;
    let mut rows = Vec::new();
    for (file, fallback) in [("fbp.raw", "fbp"), ("volume.raw", "3dgr")] {
        let path = job.dir.join(file);
        if !path.exists() {
            continue;
        }
        let (pred, hdr) = read_volume(&path)?;
        let method = if file == "fbp.raw" {
            fallback
        } else {
            hdr.get("method").unwrap_or(fallback)
        };
        let (dsc_vol, ssim_vol) = volume_scores(&pred, &gt, cfg)?;
        let (dsc_proj, psnr_proj) = projection_scores(&pred, &gt, geom, heldout, cfg)?;
        rows.push(MetricRow {
            case_id: job.case.clone(),
            views: job.views,
            method: method.to_string(),
            dsc_proj,
            psnr_proj,
            dsc_vol,
            ssim_vol,
            flag: flag.to_string(),
        });
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no reconstructed volumes",
            job.dir.display()
        )));
    }
    Ok(rows)
}

/// Scores every `views_NN/case_XXXX` result under `results` against the
/// dataset's ground truth and writes `metrics.csv` plus summary plots into
/// `out`. Held-out angles default to the midpoints between each run's
/// training angles; explicit angles that coincide with a training view are
/// still evaluated but flagged.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    results: &Path,
    dataset: &Path,
    angles: Option<&[f64]>,
    out: &Path,
) -> CliResult<Vec<MetricRow>> {
    cfg.validate()
        .map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
    let geom = dataset_geometry(dataset)?;
    let known: Vec<String> = read_manifest(dataset)?.into_iter().map(|e| e.dir).collect();
    let mut jobs = Vec::new();
    for (name, vdir) in sorted_subdirs(results, "views_")? {
        let views: usize = name["views_".len()..]
            .parse()
            .map_err(|_| CliError::Data(format!("bad results directory name {name}")))?;
        for (case, dir) in sorted_subdirs(&vdir, "case_")? {
            if !known.contains(&case) {
                return Err(CliError::Data(format!("{case} is not in the dataset manifest")));
            }
            jobs.push(CaseJob { views, case, dir });
        }
    }
    if jobs.is_empty() {
        return Err(CliError::Data(format!("no results under {}", results.display())));
    }
    let per_job = with_pool(cfg.threads, || {
        jobs.par_iter()
            .map(|job| {
                let training = make_schedule(job.views)?.angles();
                let heldout = match angles {
                    Some(a) => a.to_vec(),
                    None => make_schedule(job.views)?.midpoint_angles(),
                };
                let flag = if heldout.iter().any(|&a| collides(a, &training)) {
                    eprintln!(
                        "warning: {} views={}: held-out angle coincides with a training view",
                        job.case, job.views
                    );
                    FLAG_COLLISION
                } else {
                    FLAG_OK
                };
                evaluate_case(job, dataset, &geom, &heldout, flag, &cfg.eval)
            })
            .collect::<CliResult<Vec<_>>>()
    })??;
    let rows: Vec<MetricRow> = per_job.into_iter().flatten().collect();

    crate::create_dir(out)?;
    write_metrics(&out.join(METRICS_FILE), &rows)?;
    plots::write_all(out, &rows)?;
    Ok(rows)
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_metrics(path: &Path) -> CliResult<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<MetricRow>, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use vesselgs_core::geometry::GridSpec;

    #[test]
    fn collision_detection_wraps() {
        assert!(collides(std::f64::consts::TAU, &[0.0]));
        assert!(collides(1.0, &[0.5, 1.0]));
        assert!(!collides(0.25, &[0.0, 0.5]));
    }

    #[test]
    fn identical_volumes_score_perfectly() {
        let geom = ConeBeamGeometry::standard(16, 16);
        let mut gt = VoxelGrid::zeros(GridSpec::cube(16));
        for z in 6..10 {
            gt.data[GridSpec::cube(16).index(8, 8, z)] = 1.0;
            gt.data[GridSpec::cube(16).index(7, 8, z)] = 0.6;
        }
        let cfg = EvalConfig::default();
        let (dsc, ssim) = volume_scores(&gt, &gt, &cfg).unwrap();
        assert_eq!(dsc, 100.0);
        assert!((ssim - 100.0).abs() < 1e-9);
        let (pdsc, psnr) = projection_scores(&gt, &gt, &geom, &[0.3, 1.2], &cfg).unwrap();
        assert_eq!(pdsc, 100.0);
        assert!(psnr.is_infinite());
    }
}
