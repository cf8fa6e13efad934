//! Gaussian reconstruction from sparse projections.
//!
//! Every iteration composes the cloud into a volume, projects it, compares
//! against the measured views with the projection + centreline loss, pulls
//! the pixel cotangents back through the adjoint projector and the
//! composition gradients, and takes an Adam step. Density control runs on a
//! fixed cadence.

mod centerline;
mod density;
mod loss;
mod optimizer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use centerline::extract_centerline_mask;
pub use density::{density_control_step, DensityControlConfig, DensityOutcome};
pub use loss::{recon_loss, LossValue, ReconLossConfig};
pub use optimizer::{Adam, OptimizerConfig};

use crate::error::{Error, Result};
use crate::gaussian::{
    compose_gradients, compose_with_support, CloudGradients, ComposeConfig, Gaussian, GaussianCloud,
};
use crate::geometry::GridSpec;
use crate::metrics::PointCloud;
use crate::projector::{backproject_masked, forward_project_masked, ProjectionSet};
use crate::volume::{Image, VoxelGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    /// Isotropic starting standard deviation, in voxels.
    pub sigma_voxels: f64,
    /// Starting intensity as a fraction of the largest measured pixel.
    pub intensity_frac: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            sigma_voxels: 1.5,
            intensity_frac: 0.1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    pub loss: ReconLossConfig,
    pub optimizer: OptimizerConfig,
    pub density: DensityControlConfig,
    pub compose: ComposeConfig,
    pub init: InitConfig,
    /// Seeds the per-iteration view sampling.
    pub seed: u64,
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.optimizer.validate()?;
        self.density.validate()?;
        self.compose.validate()?;
        if !(self.init.sigma_voxels > 0.0 && self.init.intensity_frac > 0.0) {
            return Err(Error::InvalidParameter(
                "initial sigma and intensity must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One Gaussian per point: isotropic, identity rotation. Points outside the
/// grid are clipped onto its boundary; the second value counts them.
pub fn init_from_pointcloud(
    points: &PointCloud,
    grid: &GridSpec,
    cfg: &InitConfig,
    meas_max: f64,
) -> Result<(GaussianCloud, usize)> {
    if points.is_empty() {
        return Err(Error::Empty("initialization point cloud has no points".into()));
    }
    points.validate()?;
    let (lo, hi) = (grid.lower(), grid.upper());
    let sigma = cfg.sigma_voxels * grid.voxel_size;
    let intensity = (cfg.intensity_frac * meas_max).max(1e-6);
    let mut cloud = GaussianCloud::with_capacity(points.len());
    let mut clipped = 0;
    for p in &points.points {
        let q = p.sup(&lo).inf(&hi);
        clipped += (q != *p) as usize;
        cloud.push(Gaussian::isotropic(q, sigma, intensity));
    }
    Ok((cloud, clipped))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: LossValue,
    pub gaussian_count: usize,
}

#[derive(Clone, Debug)]
pub struct ReconOutput {
    pub cloud: GaussianCloud,
    pub volume: VoxelGrid,
    /// One row per iteration (loss before that iteration's update) plus a
    /// final row for the returned cloud, all evaluated on every view.
    pub trace: Vec<TraceRow>,
    pub clipped_points: usize,
}

/// Initialize from `init` and optimize against `meas`.
pub fn reconstruct(meas: &ProjectionSet, init: &PointCloud, cfg: &ReconConfig) -> Result<ReconOutput> {
    meas.validate()?;
    let grid = meas.geometry.grid();
    let (cloud, clipped) = init_from_pointcloud(init, &grid, &cfg.init, meas.max())?;
    let mut out = reconstruct_from_cloud(meas, cloud, cfg)?;
    out.clipped_points = clipped;
    Ok(out)
}

struct Evaluation {
    loss: LossValue,
    volume: VoxelGrid,
}

/// Loss of `cloud` on the views `idx`, with the gradients of that loss when
/// `want_grad` is set.
fn evaluate(
    cloud: &GaussianCloud,
    meas: &ProjectionSet,
    masks: &[Image],
    idx: &[usize],
    cfg: &ReconConfig,
    want_grad: bool,
) -> Result<(Evaluation, Option<CloudGradients>)> {
    let geom = &meas.geometry;
    let grid = geom.grid();
    let (volume, support) = compose_with_support(cloud, &grid, &cfg.compose);
    let angles: Vec<f64> = idx.iter().map(|&k| meas.angles[k]).collect();
    let pred = forward_project_masked(&volume, geom, &angles, &support)?;
    let sub = ProjectionSet {
        geometry: geom.clone(),
        angles,
        images: idx.iter().map(|&k| meas.images[k].clone()).collect(),
    };
    let sub_masks: Vec<Image> = idx.iter().map(|&k| masks[k].clone()).collect();
    let (loss, cot) = recon_loss(&pred, &sub, &sub_masks, cfg.loss.alpha)?;
    let grads = if want_grad {
        let upstream = backproject_masked(&cot, &support)?;
        Some(compose_gradients(cloud, &grid, &cfg.compose, &upstream)?)
    } else {
        None
    };
    Ok((Evaluation { loss, volume }, grads))
}

/// `L_G` of `cloud` on every view of `meas`, with centreline masks taken
/// from the measurements, and its gradients with respect to all parameters.
pub fn loss_and_gradients(
    cloud: &GaussianCloud,
    meas: &ProjectionSet,
    cfg: &ReconConfig,
) -> Result<(LossValue, CloudGradients)> {
    meas.validate()?;
    let masks: Vec<Image> = meas
        .images
        .iter()
        .map(|img| extract_centerline_mask(img, cfg.loss.centerline_threshold))
        .collect();
    let all: Vec<usize> = (0..meas.len()).collect();
    let (eval, grads) = evaluate(cloud, meas, &masks, &all, cfg, true)?;
    Ok((eval.loss, grads.expect("gradients requested")))
}

fn check_finite(loss: &LossValue, iteration: usize) -> Result<()> {
    if loss.total.is_finite() && loss.l2.is_finite() && loss.centerline.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            iteration,
            detail: format!("loss became {}", loss.total),
        })
    }
}

/// Optimize a given starting cloud against `meas`.
pub fn reconstruct_from_cloud(
    meas: &ProjectionSet,
    mut cloud: GaussianCloud,
    cfg: &ReconConfig,
) -> Result<ReconOutput> {
    cfg.validate()?;
    meas.validate()?;
    if meas.is_empty() {
        return Err(Error::Empty("reconstruction needs at least one view".into()));
    }
    cloud.validate()?;
    if cloud.is_empty() {
        return Err(Error::Empty("reconstruction needs at least one Gaussian".into()));
    }
    let grid = meas.geometry.grid();
    let extent = 0.5 * (grid.upper() - grid.lower()).max();
    let log_floor = cfg.compose.min_radius(&grid).ln();
    let masks: Vec<Image> = meas
        .images
        .iter()
        .map(|img| extract_centerline_mask(img, cfg.loss.centerline_threshold))
        .collect();
    let n_views = meas.len();
    let batch = match cfg.optimizer.views_per_iteration {
        0 => n_views,
        b => b.min(n_views),
    };
    let all: Vec<usize> = (0..n_views).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cloud.len());
    let mut grad_accum = vec![0.0; cloud.len()];
    let mut accum_steps = 0usize;
    let mut trace = Vec::with_capacity(cfg.optimizer.iterations + 1);

    for it in 0..cfg.optimizer.iterations {
        let idx = if batch == n_views {
            all.clone()
        } else {
            let mut pick = rand::seq::index::sample(&mut rng, n_views, batch).into_vec();
            pick.sort_unstable();
            pick
        };
        let (eval, grads) = evaluate(&cloud, meas, &masks, &idx, cfg, true)?;
        let factor = n_views as f64 / batch as f64;
        let mut loss = eval.loss;
        loss.l2 *= factor;
        loss.centerline *= factor;
        loss.total *= factor;
        check_finite(&loss, it)?;
        trace.push(TraceRow {
            iteration: it,
            loss,
            gaussian_count: cloud.len(),
        });
        let mut grads = grads.expect("gradients requested");
        grads.scale(factor);
        if !grads.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                detail: "non-finite gradient".into(),
            });
        }
        for (acc, g) in grad_accum.iter_mut().zip(&grads.centers) {
            *acc += g.norm();
        }
        accum_steps += 1;
        adam.step(&mut cloud, &grads, &cfg.optimizer, extent);
        for s in &mut cloud.log_scales {
            s.iter_mut().for_each(|v| *v = v.max(log_floor));
        }
        cloud.normalize_rotations();

        let done = it + 1;
        if cfg.density.enabled
            && done % cfg.density.interval == 0
            && cfg.density.until.is_none_or(|u| done <= u)
            && done < cfg.optimizer.iterations
        {
            let mean: Vec<f64> = grad_accum.iter().map(|a| a / accum_steps as f64).collect();
            let outcome = density_control_step(&cloud, &mean, &cfg.density);
            adam.remap(&outcome.source);
            cloud = outcome.cloud;
            grad_accum = vec![0.0; cloud.len()];
            accum_steps = 0;
        }
    }

    let (eval, _) = evaluate(&cloud, meas, &masks, &all, cfg, false)?;
    check_finite(&eval.loss, cfg.optimizer.iterations)?;
    trace.push(TraceRow {
        iteration: cfg.optimizer.iterations,
        loss: eval.loss,
        gaussian_count: cloud.len(),
    });
    Ok(ReconOutput {
        cloud,
        volume: eval.volume,
        trace,
        clipped_points: 0,
    })
}
