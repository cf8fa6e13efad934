//! Cone-beam acquisition geometry.
//!
//! The volume is an axis-aligned box (by default the cube `[-1, 1]^3`) whose
//! centre is the isocenter. The source and a flat detector rotate about the
//! world z-axis. At angle `θ` the central ray points along
//! `e = (cos θ, sin θ, 0)`, the detector column axis is `(-sin θ, cos θ, 0)`
//! and the detector row axis is `+z`.
//!
//! Detector coordinates are continuous pixel units: column `i` covers
//! `[i, i + 1)` and has its centre at `i + 0.5`; the detector centre sits at
//! `(cols / 2, rows / 2)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Regular voxel lattice. Voxel `(x, y, z)` has its centre at
/// `origin + (index + 0.5) * voxel_size`; `x` is the fastest-varying index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub shape: [usize; 3],
    pub voxel_size: f64,
    pub origin: [f64; 3],
}

impl GridSpec {
    /// `n^3` voxels covering `[-1, 1]^3`.
    pub fn cube(n: usize) -> Self {
        Self {
            shape: [n, n, n],
            voxel_size: 2.0 / n as f64,
            origin: [-1.0; 3],
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.shape[1] + y) * self.shape[0] + x
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.shape;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    #[inline]
    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        let h = self.voxel_size;
        Vec3::new(
            self.origin[0] + (x as f64 + 0.5) * h,
            self.origin[1] + (y as f64 + 0.5) * h,
            self.origin[2] + (z as f64 + 0.5) * h,
        )
    }

    pub fn lower(&self) -> Vec3 {
        Vec3::from(self.origin)
    }

    pub fn upper(&self) -> Vec3 {
        let h = self.voxel_size;
        Vec3::new(
            self.origin[0] + self.shape[0] as f64 * h,
            self.origin[1] + self.shape[1] as f64 * h,
            self.origin[2] + self.shape[2] as f64 * h,
        )
    }

    pub fn center(&self) -> Vec3 {
        (self.lower() + self.upper()) * 0.5
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let (lo, hi) = (self.lower(), self.upper());
        (0..3).all(|k| p[k] >= lo[k] && p[k] <= hi[k])
    }

    /// Continuous voxel index of a world point: voxel centres sit on integers.
    #[inline]
    pub fn continuous_index(&self, p: &Vec3) -> [f64; 3] {
        let inv = 1.0 / self.voxel_size;
        [
            (p[0] - self.origin[0]) * inv - 0.5,
            (p[1] - self.origin[1]) * inv - 0.5,
            (p[2] - self.origin[2]) * inv - 0.5,
        ]
    }

    /// Half of the box diagonal.
    pub fn half_diagonal(&self) -> f64 {
        (self.upper() - self.lower()).norm() * 0.5
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RotationAxis {
    #[default]
    Z,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeBeamGeometry {
    pub source_to_isocenter: f64,
    pub source_to_detector: f64,
    pub detector_rows: usize,
    pub detector_cols: usize,
    pub detector_pixel_pitch: f64,
    pub volume_shape: [usize; 3],
    pub voxel_size: f64,
    /// Minimum corner of the volume box.
    pub volume_origin: [f64; 3],
    /// Ray-marching step of the projector, in world units.
    pub ray_step: f64,
}

impl ConeBeamGeometry {
    /// Default acquisition for an `volume_n^3` cube on `[-1, 1]^3` and a square
    /// `detector_n^2` detector: source at 3, detector at 6, march step of half
    /// a voxel, pitch such that the detector half-width covers the projected
    /// volume with a 10% margin.
    pub fn standard(volume_n: usize, detector_n: usize) -> Self {
        let grid = GridSpec::cube(volume_n);
        let mut geom = Self {
            source_to_isocenter: 3.0,
            source_to_detector: 6.0,
            detector_rows: detector_n,
            detector_cols: detector_n,
            detector_pixel_pitch: 1.0,
            volume_shape: grid.shape,
            voxel_size: grid.voxel_size,
            volume_origin: grid.origin,
            ray_step: 0.5 * grid.voxel_size,
        };
        let (hu, hv) = geom.projected_half_extents();
        geom.detector_pixel_pitch = f64::max(2.0 * 1.1 * hu / detector_n as f64, 2.0 * 1.1 * hv / detector_n as f64);
        geom
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            shape: self.volume_shape,
            voxel_size: self.voxel_size,
            origin: self.volume_origin,
        }
    }

    pub fn isocenter(&self) -> Vec3 {
        self.grid().center()
    }

    pub fn pixel_count(&self) -> usize {
        self.detector_rows * self.detector_cols
    }

    /// Largest |u| and |v| (world units on the detector plane) reached by the
    /// projected volume box over a full rotation.
    ///
    /// With in-plane corner radius `ρ` and half-height `h`, the column extent
    /// peaks at `sdd·ρ/sqrt(sid² − ρ²)` and the row extent at
    /// `sdd·h/(sid − ρ)` (corner nearest the source).
    pub fn projected_half_extents(&self) -> (f64, f64) {
        let grid = self.grid();
        let half = (grid.upper() - grid.lower()) * 0.5;
        let rho = (half.x * half.x + half.y * half.y).sqrt();
        let (sid, sdd) = (self.source_to_isocenter, self.source_to_detector);
        if sid <= rho {
            return (f64::INFINITY, f64::INFINITY);
        }
        let hu = sdd * rho / (sid * sid - rho * rho).sqrt();
        let hv = sdd * half.z / (sid - rho);
        (hu, hv)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid();
        if self.volume_shape.contains(&0) || self.detector_rows == 0 || self.detector_cols == 0 {
            return Err(Error::Geometry("volume and detector sizes must be positive".into()));
        }
        for (name, value) in [
            ("voxel_size", self.voxel_size),
            ("detector_pixel_pitch", self.detector_pixel_pitch),
            ("ray_step", self.ray_step),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Geometry(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.source_to_detector > self.source_to_isocenter) {
            return Err(Error::Geometry(format!(
                "source_to_detector ({}) must exceed source_to_isocenter ({})",
                self.source_to_detector, self.source_to_isocenter
            )));
        }
        if !(self.source_to_isocenter > grid.half_diagonal()) {
            return Err(Error::Geometry(format!(
                "source at {} lies inside the volume (half-diagonal {})",
                self.source_to_isocenter,
                grid.half_diagonal()
            )));
        }
        let (hu, hv) = self.projected_half_extents();
        let half_w = 0.5 * self.detector_cols as f64 * self.detector_pixel_pitch;
        let half_h = 0.5 * self.detector_rows as f64 * self.detector_pixel_pitch;
        if half_w < hu || half_h < hv {
            return Err(Error::Geometry(format!(
                "detector {half_w:.4}x{half_h:.4} does not cover the projected volume {hu:.4}x{hv:.4}"
            )));
        }
        Ok(())
    }

    pub fn frame(&self, angle: f64) -> ViewFrame {
        let iso = self.isocenter();
        let (s, c) = angle.sin_cos();
        let axis = Vec3::new(c, s, 0.0);
        ViewFrame {
            source: iso - self.source_to_isocenter * axis,
            detector_center: iso + (self.source_to_detector - self.source_to_isocenter) * axis,
            axis,
            u_axis: Vec3::new(-s, c, 0.0),
            v_axis: Vec3::new(0.0, 0.0, 1.0),
        }
    }

    /// World position of a continuous detector coordinate.
    #[inline]
    pub fn detector_point(&self, frame: &ViewFrame, cu: f64, cv: f64) -> Vec3 {
        let u = (cu - 0.5 * self.detector_cols as f64) * self.detector_pixel_pitch;
        let v = (cv - 0.5 * self.detector_rows as f64) * self.detector_pixel_pitch;
        frame.detector_center + u * frame.u_axis + v * frame.v_axis
    }

    #[inline]
    pub fn ray_through(&self, frame: &ViewFrame, cu: f64, cv: f64) -> Ray {
        let target = self.detector_point(frame, cu, cv);
        Ray {
            origin: frame.source,
            direction: (target - frame.source).normalize(),
        }
    }

    /// Ray from the source through the centre of pixel `(u, v)` (column, row).
    pub fn ray_for_pixel(&self, angle: f64, u: usize, v: usize) -> Result<Ray> {
        if u >= self.detector_cols || v >= self.detector_rows {
            return Err(Error::PixelOutOfRange {
                u,
                v,
                cols: self.detector_cols,
                rows: self.detector_rows,
            });
        }
        Ok(self.ray_through(&self.frame(angle), u as f64 + 0.5, v as f64 + 0.5))
    }

    /// Continuous detector coordinates `(cu, cv)` of a world point, together
    /// with its depth along the central axis. `None` when the point is not in
    /// front of the source.
    #[inline]
    pub fn project_point(&self, frame: &ViewFrame, p: &Vec3) -> Option<(f64, f64, f64)> {
        let rel = p - frame.source;
        let depth = rel.dot(&frame.axis);
        if depth <= 0.0 {
            return None;
        }
        let mag = self.source_to_detector / depth;
        let cu = rel.dot(&frame.u_axis) * mag / self.detector_pixel_pitch + 0.5 * self.detector_cols as f64;
        let cv = rel.dot(&frame.v_axis) * mag / self.detector_pixel_pitch + 0.5 * self.detector_rows as f64;
        Some((cu, cv, depth))
    }
}

/// Source and detector placement for one view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewFrame {
    pub source: Vec3,
    pub detector_center: Vec3,
    /// Unit central-ray direction, source towards detector.
    pub axis: Vec3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
}

impl ViewFrame {
    /// Rotates the whole frame by `angle` about the z-axis through `pivot`.
    pub fn rotated(&self, angle: f64, pivot: &Vec3) -> ViewFrame {
        let (s, c) = angle.sin_cos();
        let rot = |v: &Vec3| Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z);
        ViewFrame {
            source: pivot + rot(&(self.source - pivot)),
            detector_center: pivot + rot(&(self.detector_center - pivot)),
            axis: rot(&self.axis),
            u_axis: rot(&self.u_axis),
            v_axis: rot(&self.v_axis),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + t * self.direction
    }

    /// Parameter interval where the ray is inside the box, if any (slab test).
    #[inline]
    pub fn clip_to_box(&self, lower: &Vec3, upper: &Vec3) -> Option<(f64, f64)> {
        let mut t0 = 0.0_f64;
        let mut t1 = f64::INFINITY;
        for k in 0..3 {
            let d = self.direction[k];
            let o = self.origin[k];
            if d.abs() < 1e-300 {
                if o < lower[k] || o > upper[k] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let (mut a, mut b) = ((lower[k] - o) * inv, (upper[k] - o) * inv);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
        (t1 > t0).then_some((t0, t1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSchedule {
    pub n_views: usize,
    pub angle_interval: f64,
    #[serde(default)]
    pub start_angle: f64,
    #[serde(default)]
    pub axis: RotationAxis,
}

/// Evenly spaced views over a half turn: interval `π / n`, which gives the
/// standard sparse pairings 2→π/2, 4→π/4, 8→π/8 and 16→π/16.
pub fn make_schedule(n_views: usize) -> Result<ViewSchedule> {
    if n_views == 0 {
        return Err(Error::InvalidParameter(
            "a view schedule needs at least one view".into(),
        ));
    }
    ViewSchedule::with_interval(n_views, PI / n_views as f64, 0.0)
}

impl ViewSchedule {
    pub fn with_interval(n_views: usize, angle_interval: f64, start_angle: f64) -> Result<Self> {
        let schedule = Self {
            n_views,
            angle_interval,
            start_angle,
            axis: RotationAxis::Z,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_views == 0 {
            return Err(Error::InvalidParameter(
                "a view schedule needs at least one view".into(),
            ));
        }
        if !(self.angle_interval > 0.0) && self.n_views > 1 {
            return Err(Error::InvalidParameter("angle interval must be positive".into()));
        }
        if !(0.0..2.0 * PI).contains(&self.start_angle) {
            return Err(Error::InvalidParameter("start angle must lie in [0, 2π)".into()));
        }
        let last = self.start_angle + (self.n_views - 1) as f64 * self.angle_interval;
        if last >= 2.0 * PI {
            return Err(Error::InvalidParameter(format!(
                "{} views at interval {} wrap past 2π",
                self.n_views, self.angle_interval
            )));
        }
        Ok(())
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.n_views)
            .map(|i| self.start_angle + i as f64 * self.angle_interval)
            .collect()
    }

    /// Angles halfway between consecutive training views; used for
    /// evaluating renders at unseen angles.
    pub fn midpoint_angles(&self) -> Vec<f64> {
        self.angles()
            .into_iter()
            .map(|a| a + 0.5 * self.angle_interval)
            .collect()
    }
}
