#![allow(dead_code)]

use std::path::{Path, PathBuf};

use vesselgs::{cmd_simulate, RunConfig};
use vesselgs_core::geometry::{make_schedule, ConeBeamGeometry};

/// A run small enough for integration tests: one 32³ phantom, short
/// reconstructions.
pub fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.cases = 1;
    cfg.views = vec![2];
    cfg.threads = 1;
    cfg.geometry = ConeBeamGeometry::standard(32, 32);
    cfg.recon.optimizer.iterations = 8;
    cfg.recon.density.interval = 4;
    cfg
}

pub fn with_schedule(mut cfg: RunConfig, views: usize) -> RunConfig {
    cfg.schedule = make_schedule(views).unwrap();
    cfg
}

pub fn simulate(cfg: &RunConfig, root: &Path) -> PathBuf {
    cmd_simulate(cfg, &root.join("data")).unwrap()
}

/// Every regular file below `dir`, relative, sorted.
pub fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}
