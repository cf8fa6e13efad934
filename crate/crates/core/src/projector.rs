//! Ray-driven cone-beam projector and its matched adjoint.
//!
//! Every detector pixel owns one ray from the source through the pixel
//! centre. The ray is clipped to the volume box and sampled at the midpoints
//! of `n = ceil(chord / ray_step)` equal sub-intervals of length `dt`; each
//! sample reads the volume by trilinear interpolation (zero outside the
//! lattice). The forward value is `dt * Σ samples`; the adjoint scatters
//! `dt * w * y` with the same taps, so the pair is an exact transpose.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ConeBeamGeometry, GridSpec, Ray};
use crate::volume::{Image, VoxelGrid};

/// Fixed number of adjoint accumulation buffers. Independent of the thread
/// count so the merged result is bit-identical on every machine.
const ADJOINT_PARTITIONS: usize = 4;

const BLOCK: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionSet {
    pub geometry: ConeBeamGeometry,
    pub angles: Vec<f64>,
    pub images: Vec<Image>,
}

impl ProjectionSet {
    pub fn zeros(geometry: &ConeBeamGeometry, angles: &[f64]) -> Self {
        Self {
            images: angles
                .iter()
                .map(|_| Image::zeros(geometry.detector_rows, geometry.detector_cols))
                .collect(),
            geometry: geometry.clone(),
            angles: angles.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.len() != self.angles.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} images for {} angles",
                self.images.len(),
                self.angles.len()
            )));
        }
        for (i, img) in self.images.iter().enumerate() {
            if img.rows != self.geometry.detector_rows || img.cols != self.geometry.detector_cols {
                return Err(Error::ShapeMismatch(format!(
                    "image {i} is {}x{}, detector is {}x{}",
                    img.rows, img.cols, self.geometry.detector_rows, self.geometry.detector_cols
                )));
            }
            if img.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("image {i} has non-finite pixels")));
            }
        }
        Ok(())
    }

    pub fn dot(&self, other: &ProjectionSet) -> f64 {
        self.images.iter().zip(&other.images).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn max(&self) -> f64 {
        self.images.iter().map(Image::max).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Views whose angle matches one of `angles` (within 1e-9 rad).
    pub fn select(&self, angles: &[f64]) -> Result<ProjectionSet> {
        let mut images = Vec::with_capacity(angles.len());
        for &a in angles {
            let i = self
                .angles
                .iter()
                .position(|&b| (a - b).abs() < 1e-9)
                .ok_or_else(|| Error::InvalidParameter(format!("no view at angle {a:.6}")))?;
            images.push(self.images[i].clone());
        }
        Ok(ProjectionSet {
            geometry: self.geometry.clone(),
            angles: angles.to_vec(),
            images,
        })
    }
}

/// Coarse occupancy over 8^3 voxel blocks. A sample is processed only when
/// the block of its base cell is active; blocks are marked so that every
/// sample touching a marked voxel is processed.
#[derive(Clone, Debug)]
pub struct BlockMask {
    dims: [usize; 3],
    active: Vec<bool>,
}

impl BlockMask {
    fn dims_for(grid: &GridSpec) -> [usize; 3] {
        grid.shape.map(|n| n.div_ceil(BLOCK))
    }

    pub fn all(grid: &GridSpec) -> Self {
        let dims = Self::dims_for(grid);
        Self {
            dims,
            active: vec![true; dims.iter().product()],
        }
    }

    pub fn none(grid: &GridSpec) -> Self {
        let dims = Self::dims_for(grid);
        Self {
            dims,
            active: vec![false; dims.iter().product()],
        }
    }

    pub fn from_nonzero(vol: &VoxelGrid) -> Self {
        let mut mask = Self::none(&vol.spec);
        for (i, &v) in vol.data.iter().enumerate() {
            if v != 0.0 {
                mask.mark_voxel(vol.spec.coords(i));
            }
        }
        mask
    }

    /// Marks the blocks of every cell that has `voxel` as a corner.
    pub fn mark_voxel(&mut self, voxel: [usize; 3]) {
        let cand = |i: usize| [i / BLOCK, i.saturating_sub(1) / BLOCK];
        let (bx, by, bz) = (cand(voxel[0]), cand(voxel[1]), cand(voxel[2]));
        for z in bz {
            for y in by {
                for x in bx {
                    let idx = (z * self.dims[1] + y) * self.dims[0] + x;
                    self.active[idx] = true;
                }
            }
        }
    }

    /// Marks all voxels in an inclusive index box.
    pub fn mark_box(&mut self, lo: [usize; 3], hi: [usize; 3]) {
        let lo_b = lo.map(|i| i.saturating_sub(1) / BLOCK);
        let hi_b = hi.map(|i| i / BLOCK);
        for z in lo_b[2]..=hi_b[2].min(self.dims[2] - 1) {
            for y in lo_b[1]..=hi_b[1].min(self.dims[1] - 1) {
                for x in lo_b[0]..=hi_b[0].min(self.dims[0] - 1) {
                    let idx = (z * self.dims[1] + y) * self.dims[0] + x;
                    self.active[idx] = true;
                }
            }
        }
    }

    pub fn active_fraction(&self) -> f64 {
        self.active.iter().filter(|&&a| a).count() as f64 / self.active.len() as f64
    }

    /// Active blocks plus every block directly above one in x, y or z.
    fn grown_upwards(&self) -> Vec<bool> {
        let mut out = self.active.clone();
        let d = self.dims;
        for bz in 0..d[2] {
            for by in 0..d[1] {
                for bx in 0..d[0] {
                    if !self.active[self.block_index([bx, by, bz])] {
                        continue;
                    }
                    for off in 1..8usize {
                        let b = [bx + (off & 1), by + ((off >> 1) & 1), bz + ((off >> 2) & 1)];
                        if b[0] < d[0] && b[1] < d[1] && b[2] < d[2] {
                            out[self.block_index(b)] = true;
                        }
                    }
                }
            }
        }
        out
    }

    /// Block holding cell `base`; out-of-range cells map to the border block.
    #[inline]
    fn block_of(&self, base: [i64; 3]) -> [usize; 3] {
        [0, 1, 2].map(|k| ((base[k].max(0) as usize) / BLOCK).min(self.dims[k] - 1))
    }

    #[inline]
    fn block_index(&self, b: [usize; 3]) -> usize {
        (b[2] * self.dims[1] + b[1]) * self.dims[0] + b[0]
    }
}

/// One trilinear sample: up to eight `(voxel index, weight)` taps.
struct Taps {
    len: usize,
    taps: [(usize, f64); 8],
}

/// Sampling plan for one ray.
#[derive(Clone, Copy)]
struct Segment {
    ray: Ray,
    t0: f64,
    dt: f64,
    n: usize,
}

#[inline]
fn segment(
    geom: &ConeBeamGeometry,
    ray: Ray,
    lower: &nalgebra::Vector3<f64>,
    upper: &nalgebra::Vector3<f64>,
) -> Option<Segment> {
    let (t0, t1) = ray.clip_to_box(lower, upper)?;
    let chord = t1 - t0;
    let n = (chord / geom.ray_step).ceil().max(1.0) as usize;
    Some(Segment {
        ray,
        t0,
        dt: chord / n as f64,
        n,
    })
}

/// Walks the samples of a segment, yielding the trilinear taps of those whose
/// base cell is active.
#[inline]
fn for_each_sample<F: FnMut(&Taps)>(grid: &GridSpec, seg: &Segment, mask: &BlockMask, mut f: F) {
    let [nx, ny, nz] = grid.shape.map(|n| n as i64);
    let inv = 1.0 / grid.voxel_size;
    let o = seg.ray.origin;
    let d = seg.ray.direction;
    // continuous index along the ray is affine in t
    let c0 = [
        (o.x - grid.origin[0]) * inv - 0.5,
        (o.y - grid.origin[1]) * inv - 0.5,
        (o.z - grid.origin[2]) * inv - 0.5,
    ];
    let dc = [d.x * inv, d.y * inv, d.z * inv];
    let mut taps = Taps {
        len: 0,
        taps: [(0, 0.0); 8],
    };
    let mut k = 0;
    while k < seg.n {
        let t = seg.t0 + (k as f64 + 0.5) * seg.dt;
        let c = [c0[0] + t * dc[0], c0[1] + t * dc[1], c0[2] + t * dc[2]];
        let base = [c[0].floor(), c[1].floor(), c[2].floor()];
        let bi = [base[0] as i64, base[1] as i64, base[2] as i64];
        k += 1;
        let block = mask.block_of(bi);
        if !mask.active[mask.block_index(block)] {
            // skip to one sample before the ray leaves this block; that
            // sample is tested again, so rounding cannot drop an active one
            let mut t_exit = f64::INFINITY;
            for a in 0..3 {
                let lo = if block[a] == 0 {
                    f64::NEG_INFINITY
                } else {
                    (block[a] * BLOCK) as f64
                };
                let hi = if block[a] + 1 == mask.dims[a] {
                    f64::INFINITY
                } else {
                    ((block[a] + 1) * BLOCK) as f64
                };
                let bound = if dc[a] > 0.0 {
                    hi
                } else if dc[a] < 0.0 {
                    lo
                } else {
                    continue;
                };
                t_exit = t_exit.min((bound - c0[a]) / dc[a]);
            }
            if !t_exit.is_finite() {
                break;
            }
            let next = ((t_exit - seg.t0) / seg.dt - 0.5).ceil() - 1.0;
            if next > k as f64 {
                k = if next >= seg.n as f64 { seg.n } else { next as usize };
            }
            continue;
        }
        let fr = [c[0] - base[0], c[1] - base[1], c[2] - base[2]];
        taps.len = 0;
        if bi[0] >= 0 && bi[1] >= 0 && bi[2] >= 0 && bi[0] + 1 < nx && bi[1] + 1 < ny && bi[2] + 1 < nz {
            let i000 = ((bi[2] * ny + bi[1]) * nx + bi[0]) as usize;
            let (sx, sy, sz) = (1usize, nx as usize, (nx * ny) as usize);
            let (wx0, wx1) = (1.0 - fr[0], fr[0]);
            let (wy0, wy1) = (1.0 - fr[1], fr[1]);
            let (wz0, wz1) = (1.0 - fr[2], fr[2]);
            taps.taps = [
                (i000, wx0 * wy0 * wz0),
                (i000 + sx, wx1 * wy0 * wz0),
                (i000 + sy, wx0 * wy1 * wz0),
                (i000 + sx + sy, wx1 * wy1 * wz0),
                (i000 + sz, wx0 * wy0 * wz1),
                (i000 + sx + sz, wx1 * wy0 * wz1),
                (i000 + sy + sz, wx0 * wy1 * wz1),
                (i000 + sx + sy + sz, wx1 * wy1 * wz1),
            ];
            taps.len = 8;
        } else {
            for corner in 0..8 {
                let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
                let idx = [bi[0] + off[0] as i64, bi[1] + off[1] as i64, bi[2] + off[2] as i64];
                if idx[0] < 0 || idx[1] < 0 || idx[2] < 0 || idx[0] >= nx || idx[1] >= ny || idx[2] >= nz {
                    continue;
                }
                let mut w = 1.0;
                for a in 0..3 {
                    w *= if off[a] == 1 { fr[a] } else { 1.0 - fr[a] };
                }
                let flat = ((idx[2] * ny + idx[1]) * nx + idx[0]) as usize;
                taps.taps[taps.len] = (flat, w);
                taps.len += 1;
            }
        }
        f(&taps);
    }
}

fn touched_index(dims: &[usize; 3], b: [usize; 3]) -> usize {
    (b[2] * dims[1] + b[1]) * dims[0] + b[0]
}

fn check_grid(vol: &VoxelGrid, geom: &ConeBeamGeometry) -> Result<()> {
    let grid = geom.grid();
    if vol.spec.shape != grid.shape || vol.spec.voxel_size != grid.voxel_size || vol.spec.origin != grid.origin {
        return Err(Error::ShapeMismatch(format!(
            "volume {:?} does not match geometry {:?}",
            vol.spec, grid
        )));
    }
    Ok(())
}

/// Line integrals of `vol` for every pixel of every view.
pub fn forward_project(vol: &VoxelGrid, geom: &ConeBeamGeometry, angles: &[f64]) -> Result<ProjectionSet> {
    forward_project_masked(vol, geom, angles, &BlockMask::from_nonzero(vol))
}

/// Forward projection restricted to the active blocks of `mask`. Identical to
/// [`forward_project`] whenever every nonzero voxel is covered by the mask.
pub fn forward_project_masked(
    vol: &VoxelGrid,
    geom: &ConeBeamGeometry,
    angles: &[f64],
    mask: &BlockMask,
) -> Result<ProjectionSet> {
    geom.validate()?;
    check_grid(vol, geom)?;
    let grid = geom.grid();
    let (lower, upper) = (grid.lower(), grid.upper());
    let (rows, cols) = (geom.detector_rows, geom.detector_cols);
    let mut out = ProjectionSet::zeros(geom, angles);
    for (img, &angle) in out.images.iter_mut().zip(angles) {
        let frame = geom.frame(angle);
        img.data.par_chunks_mut(cols).enumerate().for_each(|(row, line)| {
            debug_assert!(row < rows);
            for (col, px) in line.iter_mut().enumerate() {
                let ray = geom.ray_through(&frame, col as f64 + 0.5, row as f64 + 0.5);
                let Some(seg) = segment(geom, ray, &lower, &upper) else {
                    continue;
                };
                let mut acc = 0.0;
                for_each_sample(&grid, &seg, mask, |taps| {
                    for &(idx, w) in &taps.taps[..taps.len] {
                        acc += w * vol.data[idx];
                    }
                });
                *px = acc * seg.dt;
            }
        });
    }
    Ok(out)
}

/// Exact adjoint of [`forward_project`].
pub fn backproject(proj: &ProjectionSet) -> Result<VoxelGrid> {
    backproject_masked(proj, &BlockMask::all(&proj.geometry.grid()))
}

/// Adjoint restricted to the active blocks of `mask`: exact on every voxel
/// that was used to build the mask, partial elsewhere.
pub fn backproject_masked(proj: &ProjectionSet, mask: &BlockMask) -> Result<VoxelGrid> {
    proj.validate()?;
    let geom = &proj.geometry;
    geom.validate()?;
    let grid = geom.grid();
    let (lower, upper) = (grid.lower(), grid.upper());
    let (rows, cols) = (geom.detector_rows, geom.detector_cols);
    let frames: Vec<_> = proj.angles.iter().map(|&a| geom.frame(a)).collect();

    let units = proj.len() * rows;
    let per_part = units.div_ceil(ADJOINT_PARTITIONS).max(1);
    let partials: Vec<Vec<f64>> = (0..ADJOINT_PARTITIONS)
        .into_par_iter()
        .map(|part| {
            let mut acc = vec![0.0; grid.len()];
            let start = part * per_part;
            let end = ((part + 1) * per_part).min(units);
            for unit in start..end {
                let (view, row) = (unit / rows, unit % rows);
                let img = &proj.images[view];
                for col in 0..cols {
                    let y = img.get(row, col);
                    if y == 0.0 {
                        continue;
                    }
                    let ray = geom.ray_through(&frames[view], col as f64 + 0.5, row as f64 + 0.5);
                    let Some(seg) = segment(geom, ray, &lower, &upper) else {
                        continue;
                    };
                    let scaled = y * seg.dt;
                    for_each_sample(&grid, &seg, mask, |taps| {
                        for &(idx, w) in &taps.taps[..taps.len] {
                            acc[idx] += w * scaled;
                        }
                    });
                }
            }
            acc
        })
        .collect();

    // taps of an active cell reach one voxel past its block on the upper
    // faces, so merge the active blocks grown by one block upwards
    let touched = mask.grown_upwards();
    let [nx, ny, _] = grid.shape;
    let mut out = VoxelGrid::zeros(grid);
    out.data.par_chunks_mut(nx * ny).enumerate().for_each(|(z, dst)| {
        let bz = z / BLOCK;
        for by in 0..mask.dims[1] {
            for bx in 0..mask.dims[0] {
                if !touched[touched_index(&mask.dims, [bx, by, bz])] {
                    continue;
                }
                for y in by * BLOCK..((by + 1) * BLOCK).min(ny) {
                    let row = y * nx;
                    let (x0, x1) = (bx * BLOCK, ((bx + 1) * BLOCK).min(nx));
                    for p in &partials {
                        let src = &p[z * nx * ny + row + x0..z * nx * ny + row + x1];
                        for (d, v) in dst[row + x0..row + x1].iter_mut().zip(src) {
                            *d += v;
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}
