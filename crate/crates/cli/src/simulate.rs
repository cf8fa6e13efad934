use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vesselgs_core::phantom::{depth_map, Phantom};
use vesselgs_core::projector::forward_project;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{write_stack, write_volume, Header, PointCloudFile};
use crate::{case_dir_name, create_dir, with_pool, write_file, Staging};

pub const MANIFEST: &str = "manifest.csv";
pub const CONFIG_COPY: &str = "config.toml";

/// One dataset case as listed in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub case_id: usize,
    pub seed: u64,
    pub dir: String,
    pub views: usize,
    pub occupancy: f64,
    pub vessel_points: usize,
    pub projection_scale: f64,
}

pub fn read_manifest(dataset: &Path) -> CliResult<Vec<ManifestEntry>> {
    let path = dataset.join(MANIFEST);
    let mut reader = csv::Reader::from_path(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let entries = reader
        .deserialize()
        .collect::<Result<Vec<ManifestEntry>, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if entries.is_empty() {
        return Err(CliError::Data(format!("{} lists no cases", path.display())));
    }
    Ok(entries)
}

fn simulate_case(cfg: &RunConfig, case: usize, dir: &Path) -> CliResult<ManifestEntry> {
    let seed = cfg.seed.wrapping_add(case as u64);
    let geom = &cfg.geometry;
    let grid = geom.grid();
    let phantom = Phantom::generate(seed, &cfg.phantom, &grid)?;
    let angles = cfg.schedule.angles();
    let projections = forward_project(&phantom.volume, geom, &angles)?;
    let (depths, masks): (Vec<_>, Vec<_>) = angles.iter().map(|&a| depth_map(&phantom.tree, geom, a)).unzip();

    let sub = dir.join(case_dir_name(case));
    create_dir(&sub)?;
    let mut hdr = Header::default();
    hdr.set("seed", seed).set_list("angles", &angles);
    let scale = write_stack(
        &sub.join("projections.raw"),
        "projection",
        &projections.images,
        true,
        &hdr,
    )?;
    write_stack(&sub.join("depth.raw"), "depth", &depths, false, &hdr)?;
    write_stack(&sub.join("mask.raw"), "mask", &masks, false, &hdr)?;
    let mut vhdr = Header::default();
    vhdr.set("seed", seed)
        .set("occupancy", format!("{:?}", phantom.occupancy));
    write_volume(&sub.join("volume.raw"), &phantom.volume, &vhdr)?;
    PointCloudFile::from_points(&phantom.points).write(&sub.join("points.gcpc"))?;
    Ok(ManifestEntry {
        case_id: case,
        seed,
        dir: case_dir_name(case),
        views: angles.len(),
        occupancy: phantom.occupancy,
        vessel_points: phantom.points.len(),
        projection_scale: scale,
    })
}

/// Generates `cfg.cases` phantoms with all `cfg.schedule` views into `out`:
/// a manifest, a copy of the config, and one directory per case holding
/// projections, depth maps, depth masks, the volume and its vessel points.
/// Nothing is left in `out` on failure.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> CliResult<PathBuf> {
    cfg.validate()
        .map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
    let config_text = cfg.to_toml()?;
    let staging = Staging::begin(out)?;
    let dir = staging.path().to_path_buf();
    let entries = with_pool(cfg.threads, || {
        (0..cfg.cases)
            .into_par_iter()
            .map(|case| simulate_case(cfg, case, &dir))
            .collect::<CliResult<Vec<_>>>()
    })??;
    let mut writer = csv::Writer::from_writer(Vec::new());
    for e in &entries {
        writer.serialize(e)?;
    }
    let manifest = writer.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    write_file(&dir.join(MANIFEST), manifest)?;
    write_file(&dir.join(CONFIG_COPY), config_text)?;
    staging.commit()
}
