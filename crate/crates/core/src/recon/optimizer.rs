use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{CloudGradients, GaussianCloud};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub iterations: usize,
    /// Centre step as a fraction of the scene extent (half the volume width).
    pub lr_center: f64,
    /// Centre rate at the last iteration as a fraction of `lr_center`; the
    /// rate decays log-linearly in between. 1 keeps it constant.
    pub lr_center_final: f64,
    pub lr_scale: f64,
    pub lr_rotation: f64,
    pub lr_intensity: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Views sampled per iteration; 0 uses every view.
    pub views_per_iteration: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            lr_center: 2e-3,
            lr_center_final: 1.0,
            lr_scale: 5e-3,
            lr_rotation: 1e-3,
            lr_intensity: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            views_per_iteration: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [self.lr_center, self.lr_scale, self.lr_rotation, self.lr_intensity];
        if rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidParameter("learning rates must be positive".into()));
        }
        if !(self.lr_center_final > 0.0 && self.lr_center_final <= 1.0) {
            return Err(Error::InvalidParameter("lr_center_final must lie in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(
                "moment decays must lie in [0, 1) and epsilon be positive".into(),
            ));
        }
        Ok(())
    }
}

/// First and second moments per parameter, with one shared step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub m: CloudGradients,
    pub v: CloudGradients,
    pub step: u64,
}

#[inline]
fn update(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64, c: &Coeffs) {
    *m = c.b1 * *m + (1.0 - c.b1) * g;
    *v = c.b2 * *v + (1.0 - c.b2) * g * g;
    let mh = *m / c.bias1;
    let vh = *v / c.bias2;
    *p -= lr * mh / (vh.sqrt() + c.eps);
}

struct Coeffs {
    b1: f64,
    b2: f64,
    bias1: f64,
    bias2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: CloudGradients::zeros(n),
            v: CloudGradients::zeros(n),
            step: 0,
        }
    }

    /// One update of every parameter group. `extent` scales the centre rate.
    pub fn step(&mut self, cloud: &mut GaussianCloud, g: &CloudGradients, cfg: &OptimizerConfig, extent: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c = Coeffs {
            b1: cfg.beta1,
            b2: cfg.beta2,
            bias1: 1.0 - cfg.beta1.powi(t),
            bias2: 1.0 - cfg.beta2.powi(t),
            eps: cfg.epsilon,
        };
        let progress = (self.step as f64 / cfg.iterations.max(1) as f64).min(1.0);
        let lr_c = cfg.lr_center * extent * cfg.lr_center_final.powf(progress);
        for i in 0..cloud.len() {
            for k in 0..3 {
                update(
                    &mut cloud.centers[i][k],
                    g.centers[i][k],
                    &mut self.m.centers[i][k],
                    &mut self.v.centers[i][k],
                    lr_c,
                    &c,
                );
                update(
                    &mut cloud.log_scales[i][k],
                    g.log_scales[i][k],
                    &mut self.m.log_scales[i][k],
                    &mut self.v.log_scales[i][k],
                    cfg.lr_scale,
                    &c,
                );
            }
            for k in 0..4 {
                update(
                    &mut cloud.rotations[i][k],
                    g.rotations[i][k],
                    &mut self.m.rotations[i][k],
                    &mut self.v.rotations[i][k],
                    cfg.lr_rotation,
                    &c,
                );
            }
            update(
                &mut cloud.raw_intensities[i],
                g.raw_intensities[i],
                &mut self.m.raw_intensities[i],
                &mut self.v.raw_intensities[i],
                cfg.lr_intensity,
                &c,
            );
        }
    }

    /// Reorders the moments to follow a cloud rebuilt from `source`, where
    /// `source[j]` is the old index of new Gaussian `j` (`None` starts fresh).
    pub fn remap(&mut self, source: &[Option<usize>]) {
        fn pick<T: Copy + Default>(old: &[T], source: &[Option<usize>]) -> Vec<T> {
            source.iter().map(|s| s.map_or_else(T::default, |i| old[i])).collect()
        }
        for state in [&mut self.m, &mut self.v] {
            *state = CloudGradients {
                centers: pick(&state.centers, source),
                log_scales: pick(&state.log_scales, source),
                rotations: pick(&state.rotations, source),
                raw_intensities: pick(&state.raw_intensities, source),
            };
        }
    }
}
