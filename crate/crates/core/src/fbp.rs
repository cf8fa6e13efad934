//! FDK-style filtered backprojection and point extraction from its output.
//!
//! Each projection is cosine weighted, ramp filtered along detector rows on
//! the virtual detector through the isocentre, and backprojected voxel by
//! voxel with bilinear detector interpolation and the inverse-square
//! distance weight. Views are weighted `π / n_views`, which is the
//! quadrature weight for views spread evenly over either a half or a full
//! turn.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::PointCloud;
use crate::projector::ProjectionSet;
use crate::volume::{Image, VoxelGrid};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RampFilter {
    #[default]
    RamLak,
    SheppLogan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FbpConfig {
    pub filter: RampFilter,
    /// Fraction of the Nyquist frequency kept by the filter.
    pub cutoff: f64,
    /// Voxels strictly above this percentile become initialization points.
    pub percentile: f64,
    pub max_points: usize,
}

impl Default for FbpConfig {
    fn default() -> Self {
        Self {
            filter: RampFilter::RamLak,
            cutoff: 1.0,
            percentile: 99.9,
            max_points: 4096,
        }
    }
}

impl FbpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cutoff {} outside (0, 1]",
                self.cutoff
            )));
        }
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return Err(Error::InvalidParameter(format!(
                "percentile {} outside (0, 100)",
                self.percentile
            )));
        }
        if self.max_points == 0 {
            return Err(Error::InvalidParameter("max_points must be at least 1".into()));
        }
        Ok(())
    }
}

/// Frequency response of the band-limited ramp for rows of `cols` samples
/// at spacing `tau`, on an FFT length `len`.
fn filter_response(cols: usize, len: usize, tau: f64, cfg: &FbpConfig) -> Vec<Complex<f64>> {
    let mut h = vec![Complex::new(0.0, 0.0); len];
    h[0].re = 1.0 / (4.0 * tau * tau);
    for n in (1..cols).step_by(2) {
        let v = -1.0 / (PI * PI * (n * n) as f64 * tau * tau);
        h[n].re = v;
        h[len - n].re = v;
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut h);
    for (k, c) in h.iter_mut().enumerate() {
        // |frequency| as a fraction of Nyquist
        let f = k.min(len - k) as f64 / (0.5 * len as f64);
        let window = if f > cfg.cutoff {
            0.0
        } else {
            match cfg.filter {
                RampFilter::RamLak => 1.0,
                RampFilter::SheppLogan => {
                    let x = 0.5 * PI * f / cfg.cutoff;
                    if x == 0.0 {
                        1.0
                    } else {
                        x.sin() / x
                    }
                }
            }
        };
        *c *= window * tau;
    }
    h
}

/// Cosine-weighted, ramp-filtered copy of every view.
pub fn filter_projections(meas: &ProjectionSet, cfg: &FbpConfig) -> Result<Vec<Image>> {
    cfg.validate()?;
    meas.validate()?;
    let g = &meas.geometry;
    let (rows, cols) = (g.detector_rows, g.detector_cols);
    let mag = g.source_to_isocenter / g.source_to_detector;
    let tau = g.detector_pixel_pitch * mag;
    let d = g.source_to_isocenter;
    let len = (2 * cols).next_power_of_two();
    let response = filter_response(cols, len, tau, cfg);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let scale = 1.0 / len as f64;
    Ok(meas
        .images
        .iter()
        .map(|img| {
            let mut out = Image::zeros(rows, cols);
            out.data.par_chunks_mut(cols).enumerate().for_each(|(r, line)| {
                let v = (r as f64 + 0.5 - 0.5 * rows as f64) * tau;
                let mut buf = vec![Complex::new(0.0, 0.0); len];
                for c in 0..cols {
                    let u = (c as f64 + 0.5 - 0.5 * cols as f64) * tau;
                    buf[c].re = img.get(r, c) * d / (d * d + u * u + v * v).sqrt();
                }
                fwd.process(&mut buf);
                buf.iter_mut().zip(&response).for_each(|(b, h)| *b *= h);
                inv.process(&mut buf);
                for (o, b) in line.iter_mut().zip(&buf) {
                    *o = b.re * scale;
                }
            });
            out
        })
        .collect())
}

fn bilinear(img: &Image, cu: f64, cv: f64) -> f64 {
    let (x, y) = (cu - 0.5, cv - 0.5);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let mut acc = 0.0;
    for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            let (c, r) = (x0 + dx, y0 + dy);
            if c >= 0 && r >= 0 && (c as usize) < img.cols && (r as usize) < img.rows {
                acc += wx * wy * img.get(r as usize, c as usize);
            }
        }
    }
    acc
}

/// Filtered backprojection before the non-negativity clamp; linear in the
/// projections.
pub fn fbp_unclamped(meas: &ProjectionSet, cfg: &FbpConfig) -> Result<VoxelGrid> {
    if meas.is_empty() {
        return Err(Error::Empty("FBP needs at least one view".into()));
    }
    let filtered = filter_projections(meas, cfg)?;
    let g = &meas.geometry;
    let grid = g.grid();
    let frames: Vec<_> = meas.angles.iter().map(|&a| g.frame(a)).collect();
    let weight = PI / meas.len() as f64;
    let d2 = g.source_to_isocenter * g.source_to_isocenter;
    let [nx, ny, _] = grid.shape;
    let mut out = VoxelGrid::zeros(grid);
    out.data.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slice)| {
        for y in 0..ny {
            for x in 0..nx {
                let p = grid.voxel_center(x, y, z);
                let mut acc = 0.0;
                for (frame, img) in frames.iter().zip(&filtered) {
                    if let Some((cu, cv, depth)) = g.project_point(frame, &p) {
                        acc += d2 / (depth * depth) * bilinear(img, cu, cv);
                    }
                }
                slice[y * nx + x] = weight * acc;
            }
        }
    });
    Ok(out)
}

/// FDK reconstruction clamped at zero.
pub fn fbp_reconstruct(meas: &ProjectionSet, cfg: &FbpConfig) -> Result<VoxelGrid> {
    let mut vol = fbp_unclamped(meas, cfg)?;
    vol.data.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(vol)
}

/// Centres of the voxels strictly above the configured percentile (and
/// positive), keeping at most `max_points` of the brightest; ties go to the
/// lower index.
pub fn extract_init_points(vol: &VoxelGrid, cfg: &FbpConfig) -> Result<PointCloud> {
    cfg.validate()?;
    if vol.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("volume has non-finite values".into()));
    }
    if !vol.data.iter().any(|&v| v > 0.0) {
        return Err(Error::Empty("no positive voxels to extract points from".into()));
    }
    let mut sorted = vol.data.clone();
    sorted.sort_by(f64::total_cmp);
    let rank = ((cfg.percentile / 100.0 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    let threshold = sorted[rank];
    let mut picked: Vec<usize> = (0..vol.data.len())
        .filter(|&i| vol.data[i] > threshold && vol.data[i] > 0.0)
        .collect();
    if picked.is_empty() {
        // the top values tie at the percentile value itself
        picked = (0..vol.data.len())
            .filter(|&i| vol.data[i] >= threshold && vol.data[i] > 0.0)
            .collect();
    }
    if picked.len() > cfg.max_points {
        picked.sort_by(|&a, &b| vol.data[b].total_cmp(&vol.data[a]).then(a.cmp(&b)));
        picked.truncate(cfg.max_points);
        picked.sort_unstable();
    }
    let spec = &vol.spec;
    Ok(PointCloud::new(
        picked
            .into_iter()
            .map(|i| {
                let [x, y, z] = spec.coords(i);
                spec.voxel_center(x, y, z)
            })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ConeBeamGeometry, GridSpec, Vec3};
    use crate::projector::forward_project;

    #[test]
    fn zero_in_zero_out() {
        let geom = ConeBeamGeometry::standard(12, 16);
        let p = ProjectionSet::zeros(&geom, &[0.0, 1.0]);
        let v = fbp_reconstruct(&p, &FbpConfig::default()).unwrap();
        assert!(v.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn ramp_response_is_nonnegative_and_rises() {
        let h = filter_response(64, 128, 0.5, &FbpConfig::default());
        assert!(h.iter().all(|c| c.im.abs() < 1e-9));
        assert!(h[0].re.abs() < 0.02 * h[64].re);
        assert!(h[10].re < h[20].re && h[20].re < h[40].re);
        let cut = FbpConfig {
            cutoff: 0.5,
            ..Default::default()
        };
        let hc = filter_response(64, 128, 0.5, &cut);
        assert_eq!(hc[50].re, 0.0);
        assert_eq!(hc[20].re, h[20].re);
    }

    #[test]
    fn linear_before_clamp() {
        let geom = ConeBeamGeometry::standard(12, 16);
        let angles = [0.0, 0.8, 1.9];
        let mut a = ProjectionSet::zeros(&geom, &angles);
        let mut b = ProjectionSet::zeros(&geom, &angles);
        for (k, (ia, ib)) in a.images.iter_mut().zip(&mut b.images).enumerate() {
            for (i, (x, y)) in ia.data.iter_mut().zip(&mut ib.data).enumerate() {
                *x = ((i * 7 + k) % 13) as f64 / 13.0;
                *y = ((i * 3 + 5 * k) % 11) as f64 / 11.0 - 0.4;
            }
        }
        let mut sum = a.clone();
        for (s, ib) in sum.images.iter_mut().zip(&b.images) {
            s.data.iter_mut().zip(&ib.data).for_each(|(x, y)| *x += 2.5 * y);
        }
        let cfg = FbpConfig::default();
        let (fa, fb, fs) = (
            fbp_unclamped(&a, &cfg).unwrap(),
            fbp_unclamped(&b, &cfg).unwrap(),
            fbp_unclamped(&sum, &cfg).unwrap(),
        );
        for i in 0..fa.data.len() {
            assert!((fs.data[i] - fa.data[i] - 2.5 * fb.data[i]).abs() < 1e-9);
        }
    }

    fn sphere(grid: &GridSpec, r: f64) -> VoxelGrid {
        let mut v = VoxelGrid::zeros(*grid);
        for i in 0..grid.len() {
            let [x, y, z] = grid.coords(i);
            if grid.voxel_center(x, y, z).norm() <= r {
                v.data[i] = 1.0;
            }
        }
        v
    }

    #[test]
    fn dense_sphere_is_recovered() {
        let geom = ConeBeamGeometry::standard(40, 64);
        let grid = geom.grid();
        let truth = sphere(&grid, 0.5);
        let angles: Vec<f64> = (0..180).map(|k| k as f64 * 2.0 * PI / 180.0).collect();
        let meas = forward_project(&truth, &geom, &angles).unwrap();
        let rec = fbp_reconstruct(&meas, &FbpConfig::default()).unwrap();
        let interior: Vec<f64> = (0..grid.len())
            .filter(|&i| {
                let [x, y, z] = grid.coords(i);
                grid.voxel_center(x, y, z).norm() < 0.35
            })
            .map(|i| rec.data[i])
            .collect();
        let mean = interior.iter().sum::<f64>() / interior.len() as f64;
        assert!((mean - 1.0).abs() < 0.2, "interior mean {mean}");
        let mse = rec
            .data
            .iter()
            .zip(&truth.data)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / grid.len() as f64;
        let psnr = 10.0 * (1.0 / mse).log10();
        assert!(psnr >= 25.0, "psnr {psnr}");
    }

    #[test]
    fn two_view_point_streaks() {
        let geom = ConeBeamGeometry::standard(32, 48);
        let grid = geom.grid();
        let mut vol = VoxelGrid::zeros(grid);
        let c = grid.index(18, 13, 16);
        vol.data[c] = 1.0;
        let p0 = grid.voxel_center(18, 13, 16);
        let angles = [0.0, PI / 2.0];
        let meas = forward_project(&vol, &geom, &angles).unwrap();
        let rec = fbp_reconstruct(&meas, &FbpConfig::default()).unwrap();
        let near_ray = |p: &Vec3| {
            angles.iter().any(|&a| {
                let src = geom.frame(a).source;
                let dir = (p0 - src).normalize();
                let rel = p - src;
                (rel - dir * rel.dot(&dir)).norm() <= 2.0 * grid.voxel_size
            })
        };
        let (mut on, mut total) = (0.0, 0.0);
        for i in 0..grid.len() {
            let [x, y, z] = grid.coords(i);
            total += rec.data[i];
            if near_ray(&grid.voxel_center(x, y, z)) {
                on += rec.data[i];
            }
        }
        assert!(on > 0.8 * total, "{on} / {total}");
        // the crossing point outshines both streaks at equal distance from the source
        let along = |k: usize| rec.data[grid.index(18, k, 16)];
        assert!(rec.data[c] > along(5) && rec.data[c] > along(22));
    }

    #[test]
    fn one_hot_voxel_one_point() {
        let grid = GridSpec::cube(16);
        let mut v = VoxelGrid::zeros(grid);
        let i = grid.index(3, 9, 12);
        v.data[i] = 0.4;
        let pts = extract_init_points(&v, &FbpConfig::default()).unwrap();
        assert_eq!(pts.points, vec![grid.voxel_center(3, 9, 12)]);
        assert!(extract_init_points(&VoxelGrid::zeros(grid), &FbpConfig::default()).is_err());
    }

    #[test]
    fn cap_keeps_brightest() {
        let grid = GridSpec::cube(64);
        let mut v = VoxelGrid::zeros(grid);
        // 10^5 hot voxels with distinct-ish values, the rest zero
        for k in 0..100_000usize {
            let i = (k * 2_654_435_761) % grid.len();
            v.data[i] = 1.0 + ((k * 7919) % 10_007) as f64;
        }
        let hot = v.count_nonzero();
        let cfg = FbpConfig {
            percentile: 50.0,
            ..Default::default()
        };
        let pts = extract_init_points(&v, &cfg).unwrap();
        assert_eq!(pts.len(), 4096);
        let kept: std::collections::HashSet<usize> = pts
            .points
            .iter()
            .map(|p| {
                let c = grid.continuous_index(p).map(|c| c.floor() as usize);
                grid.index(c[0], c[1], c[2])
            })
            .collect();
        let min_kept = kept.iter().map(|&i| v.data[i]).fold(f64::INFINITY, f64::min);
        let max_dropped = (0..grid.len())
            .filter(|i| !kept.contains(i))
            .map(|i| v.data[i])
            .fold(0.0, f64::max);
        assert!(min_kept >= max_dropped);
        assert!(hot > 90_000);
        let (lo, hi) = (grid.lower(), grid.upper());
        assert!(pts.points.iter().all(|p| (0..3).all(|k| p[k] > lo[k] && p[k] < hi[k])));
    }
}
