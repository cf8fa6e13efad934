use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vesselgs_core::fbp::FbpConfig;
use vesselgs_core::geometry::{make_schedule, ConeBeamGeometry, ViewSchedule};
use vesselgs_core::phantom::PhantomConfig;
use vesselgs_core::recon::ReconConfig;
use vesselgs_core::{Error, Result};

/// Evaluation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Binarization level for volume Dice, on volumes clamped to `[0, 1]`.
    pub dsc_threshold: f64,
    /// Binarization level for projection Dice, as a fraction of the
    /// ground-truth render maximum.
    pub projection_threshold: f64,
    /// Dilation of the ground-truth support that defines the metric mask.
    pub mask_dilation: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            dsc_threshold: 0.5,
            projection_threshold: 0.1,
            mask_dilation: 3,
        }
    }
}

/// Everything a run needs. Loaded from TOML; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Base seed; case `i` uses `seed + i`.
    pub seed: u64,
    /// Number of phantoms per dataset.
    pub cases: usize,
    /// Training view counts used by `reconstruct` and `evaluate`.
    pub views: Vec<usize>,
    pub out: PathBuf,
    /// Number of worker threads; 0 uses all cores.
    pub threads: usize,
    pub geometry: ConeBeamGeometry,
    /// Views rendered by `simulate`; reconstruction subsets are drawn from it.
    pub schedule: ViewSchedule,
    pub phantom: PhantomConfig,
    pub fbp: FbpConfig,
    pub recon: ReconConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            cases: 5,
            views: vec![2],
            out: PathBuf::from("runs"),
            threads: 0,
            geometry: ConeBeamGeometry::standard(128, 128),
            schedule: make_schedule(16).expect("16 views form a valid schedule"),
            phantom: PhantomConfig::default(),
            fbp: FbpConfig::default(),
            recon: ReconConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Format(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config serialization: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.cases == 0 {
            return Err(Error::InvalidParameter("cases must be at least 1".into()));
        }
        if self.views.is_empty() || self.views.contains(&0) {
            return Err(Error::InvalidParameter("views must list positive counts".into()));
        }
        self.geometry.validate()?;
        self.schedule.validate()?;
        self.phantom.tree.validate()?;
        if !(self.phantom.smoothing_sigma >= 0.0) {
            return Err(Error::InvalidParameter("smoothing sigma must be non-negative".into()));
        }
        self.fbp.validate()?;
        self.recon.validate()?;
        let e = &self.eval;
        if !(e.dsc_threshold > 0.0
            && e.dsc_threshold <= 1.0
            && e.projection_threshold > 0.0
            && e.projection_threshold <= 1.0)
        {
            return Err(Error::InvalidParameter(
                "evaluation thresholds must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Training angles for `n` views: evenly spaced over a half turn.
    pub fn training_angles(n: usize) -> Result<Vec<f64>> {
        Ok(make_schedule(n)?.angles())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn tweaked_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.recon.density.until = Some(300);
        cfg.recon.optimizer.lr_intensity = 0.05;
        cfg.views = vec![2, 4, 8, 16];
        cfg.geometry = ConeBeamGeometry::standard(32, 40);
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("cases = 2\nbogus = 1\n").is_err());
        assert!(RunConfig::from_toml("[recon.optimizer]\nlearning_rate = 1.0\n").is_err());
        assert!(RunConfig::from_toml("[geometry]\nsource_to_isocenter = 3.0\n").is_err());
    }

    #[test]
    fn partial_config_uses_defaults() {
        let cfg = RunConfig::from_toml("cases = 2\n[recon.loss]\nalpha = 1.0\n").unwrap();
        assert_eq!(cfg.cases, 2);
        assert_eq!(cfg.recon.loss.alpha, 1.0);
        assert_eq!(cfg.recon.optimizer, Default::default());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml("cases = 0\n").is_err());
        assert!(RunConfig::from_toml("views = []\n").is_err());
        assert!(RunConfig::from_toml("[recon.loss]\nalpha = 1.5\n").is_err());
    }
}
