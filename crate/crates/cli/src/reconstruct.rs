use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use vesselgs_core::fbp::{extract_init_points, fbp_reconstruct};
use vesselgs_core::geometry::ConeBeamGeometry;
use vesselgs_core::metrics::PointCloud;
use vesselgs_core::projector::ProjectionSet;
use vesselgs_core::recon::{reconstruct, TraceRow};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{read_stack, write_volume, Header, PointCloudFile};
use crate::simulate::{read_manifest, ManifestEntry, CONFIG_COPY};
use crate::{create_dir, views_dir_name, with_pool, write_file, Staging};

pub const TRACE_HEADER: &str = "iteration,L_L2,L_clL2,L_G,gaussian_count";

/// Where the starting Gaussian centres come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitSource {
    /// Voxels extracted from the FBP reconstruction of the same views.
    Fbp,
    /// The ground-truth vessel points of each case.
    GroundTruth,
    /// A point-cloud file shared by every case, or a directory holding
    /// `case_XXXX.gcpc` per case.
    File(PathBuf),
}

impl InitSource {
    pub fn parse(text: &str) -> Self {
        match text {
            "fbp" => InitSource::Fbp,
            "gt" => InitSource::GroundTruth,
            path => InitSource::File(PathBuf::from(path)),
        }
    }

    /// Method label used in result and metric files.
    pub fn method(&self) -> &'static str {
        match self {
            InitSource::Fbp => "3dgr-fbp",
            InitSource::GroundTruth => "3dgr-gt",
            InitSource::File(_) => "3dgr-file",
        }
    }
}

impl fmt::Display for InitSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitSource::Fbp => f.write_str("fbp"),
            InitSource::GroundTruth => f.write_str("gt"),
            InitSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

/// Geometry the dataset was simulated with.
pub fn dataset_geometry(dataset: &Path) -> CliResult<ConeBeamGeometry> {
    let path = dataset.join(CONFIG_COPY);
    let cfg = RunConfig::load(&path).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(cfg.geometry)
}

/// All stored views of one case, in physical units.
pub fn load_projections(dataset: &Path, entry: &ManifestEntry, geom: &ConeBeamGeometry) -> CliResult<ProjectionSet> {
    let path = dataset.join(&entry.dir).join("projections.raw");
    let stack = read_stack(&path, "projection")?;
    let angles: Vec<f64> = stack.header.parse_list("angles")?;
    if angles.len() != stack.images.len() {
        return Err(CliError::Data(format!(
            "{}: angle list does not match view count",
            path.display()
        )));
    }
    let set = ProjectionSet {
        geometry: geom.clone(),
        angles,
        images: stack.images,
    };
    set.validate()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(set)
}

/// The `n` training views of a case, drawn from its stored views.
pub fn training_views(all: &ProjectionSet, n: usize, case: &str) -> CliResult<ProjectionSet> {
    let angles = RunConfig::training_angles(n)?;
    all.select(&angles)
        .map_err(|e| CliError::Data(format!("{case}: missing views for a {n}-view run ({e})")))
}

fn init_points(
    init: &InitSource,
    dataset: &Path,
    entry: &ManifestEntry,
    fbp_points: impl FnOnce() -> CliResult<PointCloud>,
) -> CliResult<PointCloud> {
    let file = match init {
        InitSource::Fbp => return fbp_points(),
        InitSource::GroundTruth => dataset.join(&entry.dir).join("points.gcpc"),
        InitSource::File(p) if p.is_dir() => p.join(format!("{}.gcpc", entry.dir)),
        InitSource::File(p) => p.clone(),
    };
    let points = PointCloudFile::read(&file)?.points()?;
    if points.is_empty() {
        return Err(CliError::Data(format!("{}: point cloud has no points", file.display())));
    }
    Ok(points)
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        out.push_str(&format!(
            "{},{:?},{:?},{:?},{}\n",
            r.iteration, r.loss.l2, r.loss.centerline, r.loss.total, r.gaussian_count
        ));
    }
    out
}

fn reconstruct_case(
    cfg: &RunConfig,
    dataset: &Path,
    entry: &ManifestEntry,
    geom: &ConeBeamGeometry,
    n: usize,
    init: &InitSource,
    dir: &Path,
) -> CliResult<()> {
    let all = load_projections(dataset, entry, geom)?;
    let meas = training_views(&all, n, &entry.dir)?;
    let sub = dir.join(&entry.dir);
    create_dir(&sub)?;
    let mut hdr = Header::default();
    hdr.set("views", n).set_list("angles", &meas.angles);

    let fbp = fbp_reconstruct(&meas, &cfg.fbp)?;
    write_volume(&sub.join("fbp.raw"), &fbp, &hdr)?;
    let points = init_points(init, dataset, entry, || Ok(extract_init_points(&fbp, &cfg.fbp)?))?;
    PointCloudFile::from_points(&points).write(&sub.join("init.gcpc"))?;

    let t = Instant::now();
    let out = reconstruct(&meas, &points, &cfg.recon)?;
    eprintln!(
        "{} views={n} init={init}: {} Gaussians, final L_G {:.4e}, {:.1}s",
        entry.dir,
        out.cloud.len(),
        out.trace.last().map_or(f64::NAN, |r| r.loss.total),
        t.elapsed().as_secs_f64()
    );
    if out.clipped_points > 0 {
        eprintln!(
            "{}: {} initialization points clipped to the volume",
            entry.dir, out.clipped_points
        );
    }
    hdr.set("method", init.method());
    write_volume(&sub.join("volume.raw"), &out.volume, &hdr)?;
    PointCloudFile::from_cloud(&out.cloud).write(&sub.join("cloud.gcpc"))?;
    write_file(&sub.join("trace.csv"), trace_csv(&out.trace))
}

/// Reconstructs every case of `dataset` for each view count in `cfg.views`.
///
/// Layout: `out/views_NN/case_XXXX/` with `fbp.raw`, `volume.raw` (+ `.hdr`),
/// `init.gcpc`, `cloud.gcpc` and `trace.csv`; `out/config.toml` and
/// `out/run.toml` record how the results were produced.
pub fn cmd_reconstruct(cfg: &RunConfig, dataset: &Path, init: &InitSource, out: &Path) -> CliResult<PathBuf> {
    cfg.validate()
        .map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
    let entries = read_manifest(dataset)?;
    let geom = dataset_geometry(dataset)?;
    if let InitSource::File(p) = init {
        if !p.exists() {
            return Err(CliError::Data(format!("initialization file {} not found", p.display())));
        }
    }
    let staging = Staging::begin(out)?;
    let root = staging.path().to_path_buf();
    for &n in &cfg.views {
        let dir = root.join(views_dir_name(n));
        create_dir(&dir)?;
        with_pool(cfg.threads, || {
            entries
                .par_iter()
                .map(|e| reconstruct_case(cfg, dataset, e, &geom, n, init, &dir))
                .collect::<CliResult<Vec<()>>>()
        })??;
    }
    write_file(&root.join(CONFIG_COPY), cfg.to_toml()?)?;
    let run = format!(
        "dataset = {:?}\ninit = {:?}\nmethod = {:?}\n",
        dataset.display().to_string(),
        init.to_string(),
        init.method()
    );
    write_file(&root.join("run.toml"), run)?;
    staging.commit()
}
