//! Additive 3D Gaussian representation of a volume.
//!
//! Each Gaussian has a centre `μ`, log-scales `s`, a rotation quaternion `q`
//! and a raw intensity `a`. Its covariance is `R(q) diag(exp(s))² R(q)ᵀ`
//! and its amplitude is `softplus(a)`, so every parameter vector is valid.
//! The composed volume at `X` sums `I · exp(-½ (X-μ)ᵀ Σ⁻¹ (X-μ))` over the
//! Gaussians whose Mahalanobis distance to `X` is within the truncation
//! radius.

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Vec3};
use crate::projector::BlockMask;
use crate::volume::VoxelGrid;

#[inline]
pub fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for `y > 0`.
#[inline]
pub fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

/// Rotation matrix of a (not necessarily unit) quaternion `(w, x, y, z)`.
pub fn quaternion_to_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = q.map(|c| c / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Chain rule from `∂L/∂R` to `∂L/∂q` through `R(q/|q|)`.
fn quaternion_gradient(q: [f64; 4], grad_r: &Matrix3<f64>) -> [f64; 4] {
    let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = q.map(|c| c / norm);
    let dw = Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * 2.0;
    let dx = Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * 2.0;
    let dy = Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * 2.0;
    let dz = Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * 2.0;
    let gn = [grad_r.dot(&dw), grad_r.dot(&dx), grad_r.dot(&dy), grad_r.dot(&dz)];
    let n = [w, x, y, z];
    let proj: f64 = (0..4).map(|i| gn[i] * n[i]).sum();
    std::array::from_fn(|i| (gn[i] - proj * n[i]) / norm)
}

/// One Gaussian's parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian {
    pub center: Vec3,
    pub log_scale: Vec3,
    /// `(w, x, y, z)`
    pub rotation: [f64; 4],
    pub raw_intensity: f64,
}

impl Gaussian {
    pub fn isotropic(center: Vec3, sigma: f64, intensity: f64) -> Self {
        Self {
            center,
            log_scale: Vec3::repeat(sigma.ln()),
            rotation: [1.0, 0.0, 0.0, 0.0],
            raw_intensity: softplus_inverse(intensity),
        }
    }

    pub fn intensity(&self) -> f64 {
        softplus(self.raw_intensity)
    }

    /// Standard deviations along the principal axes, floored at `min_radius`.
    pub fn scales(&self, min_radius: f64) -> Vec3 {
        self.log_scale.map(|s| s.exp().max(min_radius))
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        quaternion_to_matrix(self.rotation)
    }

    pub fn covariance(&self, min_radius: f64) -> Matrix3<f64> {
        let r = self.rotation_matrix();
        let s2 = Matrix3::from_diagonal(&self.scales(min_radius).map(|s| s * s));
        r * s2 * r.transpose()
    }

    pub fn precision(&self, min_radius: f64) -> Matrix3<f64> {
        let r = self.rotation_matrix();
        let inv = Matrix3::from_diagonal(&self.scales(min_radius).map(|s| 1.0 / (s * s)));
        r * inv * r.transpose()
    }

    /// `I · exp(-½ (x-μ)ᵀ Σ⁻¹ (x-μ))`, without truncation.
    pub fn evaluate(&self, x: &Vec3, min_radius: f64) -> f64 {
        let d = x - self.center;
        let m2 = d.dot(&(self.precision(min_radius) * d));
        self.intensity() * (-0.5 * m2).exp()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianCloud {
    pub centers: Vec<Vec3>,
    pub log_scales: Vec<Vec3>,
    pub rotations: Vec<[f64; 4]>,
    pub raw_intensities: Vec<f64>,
}

impl GaussianCloud {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            centers: Vec::with_capacity(n),
            log_scales: Vec::with_capacity(n),
            rotations: Vec::with_capacity(n),
            raw_intensities: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn push(&mut self, g: Gaussian) {
        self.centers.push(g.center);
        self.log_scales.push(g.log_scale);
        self.rotations.push(g.rotation);
        self.raw_intensities.push(g.raw_intensity);
    }

    pub fn get(&self, i: usize) -> Gaussian {
        Gaussian {
            center: self.centers[i],
            log_scale: self.log_scales[i],
            rotation: self.rotations[i],
            raw_intensity: self.raw_intensities[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Gaussian> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    pub fn intensity(&self, i: usize) -> f64 {
        softplus(self.raw_intensities[i])
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.raw_intensities.iter().map(|&a| softplus(a)).collect()
    }

    pub fn normalize_rotations(&mut self) {
        for q in &mut self.rotations {
            let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
            if n > 0.0 && n.is_finite() {
                q.iter_mut().for_each(|c| *c /= n);
            } else {
                *q = [1.0, 0.0, 0.0, 0.0];
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.log_scales.len() != n || self.rotations.len() != n || self.raw_intensities.len() != n {
            return Err(Error::ShapeMismatch(
                "Gaussian parameter arrays differ in length".into(),
            ));
        }
        for i in 0..n {
            let g = self.get(i);
            let finite = g.center.iter().chain(g.log_scale.iter()).all(|v| v.is_finite())
                && g.rotation.iter().all(|v| v.is_finite())
                && g.raw_intensity.is_finite();
            if !finite {
                return Err(Error::InvalidParameter(format!(
                    "Gaussian {i} has non-finite parameters"
                )));
            }
            let qn = g.rotation.iter().map(|c| c * c).sum::<f64>().sqrt();
            if (qn - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidParameter(format!("Gaussian {i} quaternion norm {qn}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComposeConfig {
    /// Support of each Gaussian, as a Mahalanobis radius.
    pub truncation_radius: f64,
    /// Floor on the principal standard deviations, in voxels.
    pub min_radius_voxels: f64,
}

impl Default for ComposeConfig {
    fn default() -> Self {
        Self {
            truncation_radius: 3.0,
            min_radius_voxels: 0.25,
        }
    }
}

impl ComposeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.truncation_radius > 0.0) || !(self.min_radius_voxels > 0.0) {
            return Err(Error::InvalidParameter(
                "truncation radius and scale floor must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn min_radius(&self, grid: &GridSpec) -> f64 {
        self.min_radius_voxels * grid.voxel_size
    }
}

/// `evaluate_gaussian` with the scale floor of `cfg` on `grid`.
pub fn evaluate_gaussian(g: &Gaussian, x: &Vec3, cfg: &ComposeConfig, grid: &GridSpec) -> f64 {
    g.evaluate(x, cfg.min_radius(grid))
}

/// Per-Gaussian quantities shared by composition and gradients.
struct Prepared {
    center: Vec3,
    rot: Matrix3<f64>,
    inv_s2: Vec3,
    clamped: [bool; 3],
    precision: Matrix3<f64>,
    intensity: f64,
    lo: [usize; 3],
    hi: [usize; 3],
    empty: bool,
}

impl Prepared {
    fn new(g: &Gaussian, grid: &GridSpec, cfg: &ComposeConfig) -> Self {
        let min_radius = cfg.min_radius(grid);
        let rot = g.rotation_matrix();
        let raw = g.log_scale.map(f64::exp);
        let s = raw.map(|v| v.max(min_radius));
        let clamped = [raw.x < min_radius, raw.y < min_radius, raw.z < min_radius];
        let inv_s2 = s.map(|v| 1.0 / (v * v));
        let precision = rot * Matrix3::from_diagonal(&inv_s2) * rot.transpose();
        let r = cfg.truncation_radius;
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut empty = false;
        for k in 0..3 {
            let var: f64 = (0..3).map(|j| rot[(k, j)] * rot[(k, j)] * s[j] * s[j]).sum();
            let half = r * var.sqrt();
            let h = grid.voxel_size;
            let first = ((g.center[k] - half - grid.origin[k]) / h - 0.5).ceil();
            let last = ((g.center[k] + half - grid.origin[k]) / h - 0.5).floor();
            let n = grid.shape[k] as f64;
            if last < 0.0 || first > n - 1.0 || first > last || !first.is_finite() || !last.is_finite() {
                empty = true;
                continue;
            }
            lo[k] = first.max(0.0) as usize;
            hi[k] = last.min(n - 1.0) as usize;
        }
        Self {
            center: g.center,
            rot,
            inv_s2,
            clamped,
            precision,
            intensity: g.intensity(),
            lo,
            hi,
            empty,
        }
    }

    /// Visits the voxels of slice `z` inside the truncation ellipsoid,
    /// passing the flat in-slice index `y * nx + x`, the offset `X - μ` and
    /// the squared Mahalanobis distance.
    #[inline]
    fn for_each_in_slice<F: FnMut(usize, Vec3, f64)>(&self, grid: &GridSpec, r2: f64, z: usize, mut f: F) {
        let h = grid.voxel_size;
        let p = &self.precision;
        let dz = grid.origin[2] + (z as f64 + 0.5) * h - self.center.z;
        for y in self.lo[1]..=self.hi[1] {
            let dy = grid.origin[1] + (y as f64 + 0.5) * h - self.center.y;
            let b = p[(0, 1)] * dy + p[(0, 2)] * dz;
            let c = p[(1, 1)] * dy * dy + 2.0 * p[(1, 2)] * dy * dz + p[(2, 2)] * dz * dz;
            let a = p[(0, 0)];
            let disc = b * b - a * (c - r2);
            if disc < 0.0 {
                continue;
            }
            let root = disc.sqrt();
            let (dx_lo, dx_hi) = ((-b - root) / a, (-b + root) / a);
            let x_first = ((self.center.x + dx_lo - grid.origin[0]) / h - 0.5).ceil() - 1.0;
            let x_last = ((self.center.x + dx_hi - grid.origin[0]) / h - 0.5).floor() + 1.0;
            let x0 = x_first.max(self.lo[0] as f64) as usize;
            let x1 = x_last.min(self.hi[0] as f64);
            if x1 < x0 as f64 {
                continue;
            }
            let x1 = x1 as usize;
            let row = y * grid.shape[0];
            for x in x0..=x1 {
                let dx = grid.origin[0] + (x as f64 + 0.5) * h - self.center.x;
                let m2 = a * dx * dx + 2.0 * b * dx + c;
                if m2 <= r2 {
                    f(row + x, Vec3::new(dx, dy, dz), m2);
                }
            }
        }
    }
}

fn prepare(cloud: &GaussianCloud, grid: &GridSpec, cfg: &ComposeConfig) -> Vec<Prepared> {
    (0..cloud.len())
        .into_par_iter()
        .map(|i| Prepared::new(&cloud.get(i), grid, cfg))
        .collect()
}

/// Sum of truncated Gaussians on the grid.
pub fn compose_volume(cloud: &GaussianCloud, grid: &GridSpec, cfg: &ComposeConfig) -> VoxelGrid {
    compose_with_support(cloud, grid, cfg).0
}

/// Composition plus a block mask covering every voxel any Gaussian touches.
pub fn compose_with_support(cloud: &GaussianCloud, grid: &GridSpec, cfg: &ComposeConfig) -> (VoxelGrid, BlockMask) {
    let prepared = prepare(cloud, grid, cfg);
    let r2 = cfg.truncation_radius * cfg.truncation_radius;
    let [nx, ny, nz] = grid.shape;
    let mut support = BlockMask::none(grid);
    let mut slabs: Vec<Vec<u32>> = vec![Vec::new(); nz];
    for (i, p) in prepared.iter().enumerate() {
        if p.empty {
            continue;
        }
        support.mark_box(p.lo, p.hi);
        for slab in &mut slabs[p.lo[2]..=p.hi[2]] {
            slab.push(i as u32);
        }
    }
    let mut out = VoxelGrid::zeros(*grid);
    out.data.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slice)| {
        for &i in &slabs[z] {
            let p = &prepared[i as usize];
            p.for_each_in_slice(grid, r2, z, |idx, _d, m2| {
                slice[idx] += p.intensity * (-0.5 * m2).exp();
            });
        }
    });
    (out, support)
}

/// Gradients of a scalar `L` with respect to every Gaussian parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CloudGradients {
    pub centers: Vec<Vec3>,
    pub log_scales: Vec<Vec3>,
    pub rotations: Vec<[f64; 4]>,
    pub raw_intensities: Vec<f64>,
}

impl CloudGradients {
    pub fn zeros(n: usize) -> Self {
        Self {
            centers: vec![Vec3::zeros(); n],
            log_scales: vec![Vec3::zeros(); n],
            rotations: vec![[0.0; 4]; n],
            raw_intensities: vec![0.0; n],
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.centers.iter_mut().for_each(|g| *g *= factor);
        self.log_scales.iter_mut().for_each(|g| *g *= factor);
        self.rotations
            .iter_mut()
            .for_each(|g| g.iter_mut().for_each(|c| *c *= factor));
        self.raw_intensities.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.centers.iter().all(|g| g.iter().all(|v| v.is_finite()))
            && self.log_scales.iter().all(|g| g.iter().all(|v| v.is_finite()))
            && self.rotations.iter().all(|g| g.iter().all(|v| v.is_finite()))
            && self.raw_intensities.iter().all(|v| v.is_finite())
    }
}

/// Analytic gradients of `L = Σ_X upstream(X) · V(X)`, where `V` is
/// [`compose_volume`] of `cloud`.
pub fn compose_gradients(
    cloud: &GaussianCloud,
    grid: &GridSpec,
    cfg: &ComposeConfig,
    upstream: &VoxelGrid,
) -> Result<CloudGradients> {
    if upstream.spec.shape != grid.shape {
        return Err(Error::ShapeMismatch(format!(
            "upstream {:?} vs grid {:?}",
            upstream.spec.shape, grid.shape
        )));
    }
    let r2 = cfg.truncation_radius * cfg.truncation_radius;
    let slice_len = grid.shape[0] * grid.shape[1];
    let per: Vec<_> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let g = cloud.get(i);
            let p = Prepared::new(&g, grid, cfg);
            let mut d_intensity = 0.0;
            let mut z_sum = Vec3::zeros();
            let mut local = Matrix3::<f64>::zeros();
            if !p.empty {
                let rt = p.rot.transpose();
                for z in p.lo[2]..=p.hi[2] {
                    let up = &upstream.data[z * slice_len..(z + 1) * slice_len];
                    p.for_each_in_slice(grid, r2, z, |idx, d, m2| {
                        let u = up[idx];
                        if u == 0.0 {
                            return;
                        }
                        let e = (-0.5 * m2).exp();
                        d_intensity += u * e;
                        let w = u * p.intensity * e;
                        let y = rt * d;
                        let zl = y.component_mul(&p.inv_s2);
                        z_sum += w * zl;
                        local += (w * y) * zl.transpose();
                    });
                }
            }
            let d_center = p.rot * z_sum;
            let d_log_scale = Vec3::from_fn(|k, _| if p.clamped[k] { 0.0 } else { local[(k, k)] });
            let grad_r = -(p.rot * local);
            let d_rotation = quaternion_gradient(g.rotation, &grad_r);
            let d_raw = d_intensity * sigmoid(g.raw_intensity);
            (d_center, d_log_scale, d_rotation, d_raw)
        })
        .collect();
    let mut grads = CloudGradients::with_capacity(per.len());
    for (c, s, q, a) in per {
        grads.centers.push(c);
        grads.log_scales.push(s);
        grads.rotations.push(q);
        grads.raw_intensities.push(a);
    }
    Ok(grads)
}

impl CloudGradients {
    fn with_capacity(n: usize) -> Self {
        Self {
            centers: Vec::with_capacity(n),
            log_scales: Vec::with_capacity(n),
            rotations: Vec::with_capacity(n),
            raw_intensities: Vec::with_capacity(n),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_gaussian(rng: &mut ChaCha8Rng, spread: f64, scale: (f64, f64)) -> Gaussian {
        let mut q = [0.0; 4];
        q.iter_mut().for_each(|c| *c = rng.gen_range(-1.0..1.0));
        let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        q.iter_mut().for_each(|c| *c /= n);
        Gaussian {
            center: Vec3::new(
                rng.gen_range(-spread..spread),
                rng.gen_range(-spread..spread),
                rng.gen_range(-spread..spread),
            ),
            log_scale: Vec3::from_fn(|_, _| rng.gen_range(scale.0..scale.1)),
            rotation: q,
            raw_intensity: rng.gen_range(-1.0..1.5),
        }
    }

    #[test]
    fn value_at_center_is_intensity() {
        let g = Gaussian::isotropic(Vec3::new(0.1, 0.2, -0.3), 0.2, 0.7);
        assert!((g.evaluate(&g.center, 1e-6) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn unit_mahalanobis_distance() {
        let sigma = 0.13;
        let g = Gaussian::isotropic(Vec3::zeros(), sigma, 2.0);
        let x = Vec3::new(0.6, 0.0, 0.8) * sigma;
        assert!((g.evaluate(&x, 1e-6) - 2.0 * (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn anisotropic_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let g = random_gaussian(&mut rng, 0.5, (-3.0, -0.5));
            let s = g.log_scale.map(f64::exp);
            // independent route: explicit covariance, general 3x3 inverse
            let r = quaternion_to_matrix(g.rotation);
            let cov: Matrix3<f64> = r * Matrix3::from_diagonal(&s.map(|v| v * v)) * r.transpose();
            let inv = cov.try_inverse().unwrap();
            let x = g.center + Vec3::from_fn(|_, _| rng.gen_range(-0.2..0.2));
            let d = x - g.center;
            let expect = softplus(g.raw_intensity) * (-0.5 * (d.transpose() * inv * d)[(0, 0)]).exp();
            assert!((g.evaluate(&x, 1e-9) - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn quaternion_matrix_is_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let r = quaternion_to_matrix(q);
            assert!((r * r.transpose() - Matrix3::identity()).norm() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softplus_round_trip() {
        for y in [1e-6, 0.01, 0.5, 3.0, 40.0] {
            assert!((softplus(softplus_inverse(y)) - y).abs() < 1e-9 * y.max(1.0));
        }
        assert!(softplus(-800.0) >= 0.0);
    }

    #[test]
    fn empty_cloud_composes_to_zero() {
        let grid = GridSpec::cube(8);
        let v = compose_volume(&GaussianCloud::default(), &grid, &ComposeConfig::default());
        assert!(v.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn far_gaussian_composes_to_zero() {
        let grid = GridSpec::cube(8);
        let mut cloud = GaussianCloud::default();
        cloud.push(Gaussian::isotropic(Vec3::new(5.0, 0.0, 0.0), 0.1, 1.0));
        let v = compose_volume(&cloud, &grid, &ComposeConfig::default());
        assert!(v.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn doubling_intensity_doubles_contribution() {
        let grid = GridSpec::cube(12);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = random_gaussian(&mut rng, 0.4, (-2.5, -1.5));
        let mut one = GaussianCloud::default();
        one.push(g);
        let mut two = GaussianCloud::default();
        two.push(Gaussian {
            raw_intensity: softplus_inverse(2.0 * g.intensity()),
            ..g
        });
        let cfg = ComposeConfig::default();
        let (a, b) = (compose_volume(&one, &grid, &cfg), compose_volume(&two, &grid, &cfg));
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1e-300));
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let grid = GridSpec::cube(10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut cloud = GaussianCloud::default();
        for _ in 0..5 {
            cloud.push(random_gaussian(&mut rng, 0.5, (-2.0, -1.5)));
        }
        let g = compose_gradients(&cloud, &grid, &ComposeConfig::default(), &VoxelGrid::zeros(grid)).unwrap();
        assert_eq!(g, CloudGradients::zeros(5));
    }

    #[test]
    fn delta_at_center_is_stationary() {
        let grid = GridSpec::cube(9);
        let center = grid.voxel_center(4, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut g = random_gaussian(&mut rng, 0.1, (-1.5, -1.0));
        g.center = center;
        let mut cloud = GaussianCloud::default();
        cloud.push(g);
        let mut up = VoxelGrid::zeros(grid);
        up.data[grid.index(4, 4, 4)] = 1.0;
        let grads = compose_gradients(&cloud, &grid, &ComposeConfig::default(), &up).unwrap();
        assert!(grads.centers[0].norm() < 1e-14);
        assert!(grads.raw_intensities[0] > 0.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let cloud = GaussianCloud::default();
        let up = VoxelGrid::zeros(GridSpec::cube(4));
        assert!(compose_gradients(&cloud, &GridSpec::cube(5), &ComposeConfig::default(), &up).is_err());
    }

    #[test]
    fn scale_floor_applies() {
        let grid = GridSpec::cube(16);
        let cfg = ComposeConfig::default();
        let g = Gaussian::isotropic(Vec3::zeros(), 1e-6, 1.0);
        let s = g.scales(cfg.min_radius(&grid));
        assert!((s.x - 0.25 * grid.voxel_size).abs() < 1e-15);
    }
}
