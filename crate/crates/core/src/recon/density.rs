use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{quaternion_to_matrix, softplus_inverse, GaussianCloud};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityControlConfig {
    pub enabled: bool,
    /// Iterations between density steps.
    pub interval: usize,
    /// No density steps after this iteration; unset means no limit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub until: Option<usize>,
    /// Prune when intensity falls below this fraction of the current maximum.
    pub prune_intensity_frac: f64,
    /// Split when the mean centre-gradient norm since the last step exceeds this.
    pub split_grad_threshold: f64,
    /// Children scales are the parent's divided by this.
    pub split_scale_factor: f64,
    pub max_gaussians: usize,
}

impl Default for DensityControlConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            interval: 100,
            until: None,
            prune_intensity_frac: 1e-3,
            split_grad_threshold: 2e-4,
            split_scale_factor: 1.6,
            max_gaussians: 8192,
        }
    }
}

impl DensityControlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 || self.max_gaussians == 0 {
            return Err(Error::InvalidParameter(
                "density interval and max_gaussians must be at least 1".into(),
            ));
        }
        if !(self.prune_intensity_frac > 0.0 && self.split_grad_threshold > 0.0 && self.split_scale_factor > 1.0) {
            return Err(Error::InvalidParameter(
                "prune and split thresholds must be positive, split factor above 1".into(),
            ));
        }
        Ok(())
    }
}

/// Result of one density step. `source[j]` is the index in the old cloud
/// that new Gaussian `j` came from; split children carry `None`.
#[derive(Clone, Debug)]
pub struct DensityOutcome {
    pub cloud: GaussianCloud,
    pub source: Vec<Option<usize>>,
    pub pruned: usize,
    pub split: usize,
}

/// Prune faint Gaussians, then split those with large accumulated centre
/// gradients into two children along their widest axis.
pub fn density_control_step(cloud: &GaussianCloud, grad_norms: &[f64], cfg: &DensityControlConfig) -> DensityOutcome {
    assert_eq!(
        grad_norms.len(),
        cloud.len(),
        "gradient accumulators must align with the cloud"
    );
    let n = cloud.len();
    let intensities = cloud.intensities();
    let max_i = intensities.iter().copied().fold(0.0, f64::max);
    let mut keep: Vec<usize> = (0..n)
        .filter(|&i| intensities[i] >= cfg.prune_intensity_frac * max_i && intensities[i] > 0.0)
        .collect();
    if keep.is_empty() && n > 0 {
        let brightest = (0..n)
            .max_by(|&a, &b| intensities[a].total_cmp(&intensities[b]))
            .unwrap();
        keep.push(brightest);
    }
    let pruned = n - keep.len();
    if keep.len() > cfg.max_gaussians {
        // keep the brightest ones, in original order
        keep.sort_by(|&a, &b| intensities[b].total_cmp(&intensities[a]).then(a.cmp(&b)));
        keep.truncate(cfg.max_gaussians);
        keep.sort_unstable();
    }
    let room = cfg.max_gaussians - keep.len();
    let mut candidates: Vec<usize> = keep
        .iter()
        .copied()
        .filter(|&i| grad_norms[i] > cfg.split_grad_threshold)
        .collect();
    candidates.sort_by(|&a, &b| grad_norms[b].total_cmp(&grad_norms[a]).then(a.cmp(&b)));
    candidates.truncate(room);
    let mut splitting = vec![false; n];
    candidates.iter().for_each(|&i| splitting[i] = true);

    let mut out = GaussianCloud::with_capacity(keep.len() + candidates.len());
    let mut source = Vec::with_capacity(keep.len() + candidates.len());
    let shrink = cfg.split_scale_factor.ln();
    for &i in &keep {
        let g = cloud.get(i);
        if !splitting[i] {
            out.push(g);
            source.push(Some(i));
            continue;
        }
        let scales = g.log_scale.map(f64::exp);
        let axis = scales.imax();
        let dir = quaternion_to_matrix(g.rotation).column(axis).into_owned() * scales[axis];
        let raw = softplus_inverse(0.5 * intensities[i]);
        for sign in [1.0, -1.0] {
            let mut child = g;
            child.center += dir * sign;
            child.log_scale = g.log_scale.map(|s| s - shrink);
            child.raw_intensity = raw;
            out.push(child);
            source.push(None);
        }
    }
    DensityOutcome {
        cloud: out,
        source,
        pruned,
        split: candidates.len(),
    }
}
