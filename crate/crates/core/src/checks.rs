//! Numerical self-checks shared by the test suites: the projector
//! dot-product test, central finite differences of the reconstruction loss,
//! and the truncation bound of the composition.

use rand::Rng;

use crate::error::Result;
use crate::gaussian::{evaluate_gaussian, softplus_inverse, ComposeConfig, Gaussian, GaussianCloud};
use crate::geometry::{ConeBeamGeometry, GridSpec, Vec3};
use crate::projector::{backproject, forward_project, ProjectionSet};
use crate::recon::{loss_and_gradients, ReconConfig};
use crate::volume::VoxelGrid;

/// Volume with independent uniform `[0, 1)` voxels.
pub fn random_volume<R: Rng>(grid: &GridSpec, rng: &mut R) -> VoxelGrid {
    VoxelGrid {
        spec: *grid,
        data: (0..grid.len()).map(|_| rng.gen::<f64>()).collect(),
    }
}

/// Projection set with independent uniform `[0, 1)` pixels.
pub fn random_projections<R: Rng>(geom: &ConeBeamGeometry, angles: &[f64], rng: &mut R) -> ProjectionSet {
    let mut set = ProjectionSet::zeros(geom, angles);
    for img in &mut set.images {
        img.data.iter_mut().for_each(|v| *v = rng.gen());
    }
    set
}

/// `|<Ax, y> - <x, Aᵀy>| / max(|<Ax, y>|, |<x, Aᵀy>|)`.
pub fn adjoint_discrepancy(x: &VoxelGrid, y: &ProjectionSet) -> Result<f64> {
    let ax = forward_project(x, &y.geometry, &y.angles)?;
    let aty = backproject(y)?;
    let lhs = ax.dot(y);
    let rhs = x.dot(&aty);
    Ok((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE))
}

/// `n` random anisotropic Gaussians well inside `grid`, with scales between
/// 0.7 and 2 voxels and intensities in `[0.2, 1.2)`.
pub fn random_cloud<R: Rng>(n: usize, grid: &GridSpec, rng: &mut R) -> GaussianCloud {
    let (lo, hi) = (grid.lower(), grid.upper());
    let h = grid.voxel_size;
    let mut cloud = GaussianCloud::default();
    for _ in 0..n {
        let center = Vec3::from_fn(|k, _| {
            let margin = 0.2 * (hi[k] - lo[k]);
            rng.gen_range(lo[k] + margin..hi[k] - margin)
        });
        let log_scale = Vec3::from_fn(|_, _| (rng.gen_range(0.7..2.0) * h).ln());
        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-3);
        cloud.push(Gaussian {
            center,
            log_scale,
            rotation: q.map(|c| c / norm),
            raw_intensity: softplus_inverse(rng.gen_range(0.2..1.2)),
        });
    }
    cloud
}

/// Untruncated reference composition: every Gaussian evaluated at every
/// voxel.
pub fn brute_force_compose(cloud: &GaussianCloud, grid: &GridSpec, cfg: &ComposeConfig) -> VoxelGrid {
    let mut vol = VoxelGrid::zeros(*grid);
    for i in 0..grid.len() {
        let [x, y, z] = grid.coords(i);
        let p = grid.voxel_center(x, y, z);
        vol.data[i] = cloud.iter().map(|g| evaluate_gaussian(&g, &p, cfg, grid)).sum();
    }
    vol
}

/// Bound on the per-voxel truncation error: `e^{-r²/2} · ΣI`.
pub fn truncation_bound(cloud: &GaussianCloud, cfg: &ComposeConfig) -> f64 {
    let r = cfg.truncation_radius;
    (-0.5 * r * r).exp() * cloud.intensities().iter().sum::<f64>()
}

/// Relative error `‖g_analytic - g_fd‖ / ‖g_fd‖` per parameter group.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientErrors {
    pub centers: f64,
    pub log_scales: f64,
    pub rotations: f64,
    pub intensities: f64,
}

impl GradientErrors {
    pub fn max(&self) -> f64 {
        self.centers
            .max(self.log_scales)
            .max(self.rotations)
            .max(self.intensities)
    }
}

fn relative(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum();
    let norm: f64 = numeric.iter().map(|n| n * n).sum();
    (diff / norm.max(f64::MIN_POSITIVE)).sqrt()
}

/// Compares the analytic gradient of `L_G` against central differences with
/// step `step` in every scalar parameter of `cloud`.
pub fn gradient_check(
    cloud: &GaussianCloud,
    meas: &ProjectionSet,
    cfg: &ReconConfig,
    step: f64,
) -> Result<GradientErrors> {
    let (_, g) = loss_and_gradients(cloud, meas, cfg)?;
    let loss = |c: &GaussianCloud| -> Result<f64> { Ok(loss_and_gradients(c, meas, cfg)?.0.total) };
    let central = |edit: &dyn Fn(&mut GaussianCloud, f64)| -> Result<f64> {
        let mut plus = cloud.clone();
        edit(&mut plus, step);
        let mut minus = cloud.clone();
        edit(&mut minus, -step);
        Ok((loss(&plus)? - loss(&minus)?) / (2.0 * step))
    };
    let n = cloud.len();
    let (mut ca, mut cn, mut sa, mut sn, mut ra, mut rn, mut ia, mut inum) =
        (vec![], vec![], vec![], vec![], vec![], vec![], vec![], vec![]);
    for i in 0..n {
        for k in 0..3 {
            ca.push(g.centers[i][k]);
            cn.push(central(&|c, d| c.centers[i][k] += d)?);
            sa.push(g.log_scales[i][k]);
            sn.push(central(&|c, d| c.log_scales[i][k] += d)?);
        }
        for k in 0..4 {
            ra.push(g.rotations[i][k]);
            rn.push(central(&|c, d| c.rotations[i][k] += d)?);
        }
        ia.push(g.raw_intensities[i]);
        inum.push(central(&|c, d| c.raw_intensities[i] += d)?);
    }
    Ok(GradientErrors {
        centers: relative(&ca, &cn),
        log_scales: relative(&sa, &sn),
        rotations: relative(&ra, &rn),
        intensities: relative(&ia, &inum),
    })
}

/// Target projections rendered from `cloud` at `angles`.
pub fn render_cloud(
    cloud: &GaussianCloud,
    geom: &ConeBeamGeometry,
    angles: &[f64],
    cfg: &ComposeConfig,
) -> Result<ProjectionSet> {
    let vol = crate::gaussian::compose_volume(cloud, &geom.grid(), cfg);
    forward_project(&vol, geom, angles)
}
