//! On-disk formats.
//!
//! Volumes and image stacks are raw little-endian `f32` files with a `.hdr`
//! sidecar of `key = value` lines. Point clouds use the `GCAR-PC1` layout: a
//! short text header followed by a row-major little-endian `f32` body.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use vesselgs_core::gaussian::GaussianCloud;
use vesselgs_core::geometry::{GridSpec, Vec3};
use vesselgs_core::metrics::PointCloud;
use vesselgs_core::volume::{Image, VoxelGrid};
use vesselgs_core::{Error, Result};

pub const POINT_CLOUD_MAGIC: &str = "GCAR-PC1";

/// Columns written for a Gaussian cloud; the first three are the centres.
pub const CLOUD_COLUMNS: [&str; 11] = [
    "x",
    "y",
    "z",
    "log_sx",
    "log_sy",
    "log_sz",
    "qw",
    "qx",
    "qy",
    "qz",
    "intensity",
];

fn format_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {msg}", path.display()))
}

/// `path` with its extension replaced by `hdr`.
pub fn header_path(raw: &Path) -> PathBuf {
    raw.with_extension("hdr")
}

/// Ordered `key = value` sidecar. Values are kept as text; the typed getters
/// parse on demand.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Header {
    entries: BTreeMap<String, String>,
}

impl Header {
    pub fn set(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.entries.insert(key.to_string(), value.to_string());
        self
    }

    pub fn set_list(&mut self, key: &str, values: &[f64]) -> &mut Self {
        let text = values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ");
        self.set(key, text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Format(format!("header is missing `{key}`")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::Format(format!("header `{key}` has bad value `{raw}`")))
    }

    pub fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.require(key)?
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::Format(format!("header `{key}` has bad entry `{t}`")))
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("header line {} is not `key = value`", n + 1)))?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?).map_err(|e| format_err(path, e))
    }
}

fn write_f32(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_f32(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected * 4 {
        return Err(format_err(
            path,
            format!("expected {} bytes, found {}", expected * 4, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Writes a volume and its sidecar. `extra` entries are merged into the
/// header.
pub fn write_volume(path: &Path, vol: &VoxelGrid, extra: &Header) -> Result<()> {
    let mut hdr = extra.clone();
    let s = vol.spec;
    hdr.set("format", "f32le")
        .set("kind", "volume")
        .set("dims", format!("{} {} {}", s.shape[0], s.shape[1], s.shape[2]))
        .set("voxel_size", format!("{:?}", s.voxel_size))
        .set_list("origin", &s.origin);
    write_f32(path, vol.data.iter().copied())?;
    hdr.write(&header_path(path))
}

pub fn read_volume(path: &Path) -> Result<(VoxelGrid, Header)> {
    let hdr = Header::read(&header_path(path))?;
    check_kind(&hdr, "volume", path)?;
    let dims: Vec<usize> = hdr.parse_list("dims")?;
    let origin: Vec<f64> = hdr.parse_list("origin")?;
    if dims.len() != 3 || origin.len() != 3 {
        return Err(format_err(path, "dims and origin need three entries"));
    }
    let spec = GridSpec {
        shape: [dims[0], dims[1], dims[2]],
        voxel_size: hdr.parse("voxel_size")?,
        origin: [origin[0], origin[1], origin[2]],
    };
    let data = read_f32(path, spec.len())?;
    Ok((VoxelGrid::from_data(spec, data)?, hdr))
}

fn check_kind(hdr: &Header, kind: &str, path: &Path) -> Result<()> {
    if hdr.get("format") != Some("f32le") {
        return Err(format_err(path, "unsupported format (expected f32le)"));
    }
    match hdr.get("kind") {
        Some(k) if k == kind => Ok(()),
        other => Err(format_err(path, format!("expected kind `{kind}`, found {other:?}"))),
    }
}

/// A stack of equally sized images, stored divided by `scale` so that the
/// stored values lie in `[0, 1]` when every input is non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageStack {
    pub images: Vec<Image>,
    pub scale: f64,
    pub header: Header,
}

/// Writes `images` normalized by their joint maximum (or unscaled when
/// `normalize` is false or the maximum is not positive).
pub fn write_stack(path: &Path, kind: &str, images: &[Image], normalize: bool, extra: &Header) -> Result<f64> {
    let (rows, cols) = images.first().map_or((0, 0), |i| (i.rows, i.cols));
    if images.iter().any(|i| i.rows != rows || i.cols != cols) {
        return Err(Error::ShapeMismatch("stacked images differ in shape".into()));
    }
    let peak = images
        .iter()
        .flat_map(|i| i.data.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let scale = if normalize && peak > 0.0 { peak } else { 1.0 };
    let mut hdr = extra.clone();
    hdr.set("format", "f32le")
        .set("kind", kind)
        .set("dims", format!("{cols} {rows} {}", images.len()))
        .set("scale", format!("{scale:?}"));
    write_f32(path, images.iter().flat_map(|i| i.data.iter().map(move |v| v / scale)))?;
    hdr.write(&header_path(path))?;
    Ok(scale)
}

/// Reads a stack back; values are multiplied by the stored scale.
pub fn read_stack(path: &Path, kind: &str) -> Result<ImageStack> {
    let header = Header::read(&header_path(path))?;
    check_kind(&header, kind, path)?;
    let dims: Vec<usize> = header.parse_list("dims")?;
    if dims.len() != 3 {
        return Err(format_err(path, "stack dims need three entries"));
    }
    let (cols, rows, count) = (dims[0], dims[1], dims[2]);
    let scale: f64 = header.parse("scale")?;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(format_err(path, format!("scale {scale} must be positive")));
    }
    let data = read_f32(path, cols * rows * count)?;
    let images = data
        .chunks(cols * rows.max(1))
        .take(count)
        .map(|c| Image::from_data(rows, cols, c.iter().map(|v| v * scale).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ImageStack { images, scale, header })
}

/// A parsed `GCAR-PC1` file.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloudFile {
    pub columns: Vec<String>,
    /// Row-major, `count * columns.len()` values.
    pub values: Vec<f32>,
}

impl PointCloudFile {
    pub fn from_points(points: &PointCloud) -> Self {
        Self {
            columns: vec!["x".into(), "y".into(), "z".into()],
            values: points
                .points
                .iter()
                .flat_map(|p| [p.x as f32, p.y as f32, p.z as f32])
                .collect(),
        }
    }

    pub fn from_cloud(cloud: &GaussianCloud) -> Self {
        let mut values = Vec::with_capacity(cloud.len() * CLOUD_COLUMNS.len());
        for (i, g) in cloud.iter().enumerate() {
            let row = [
                g.center.x,
                g.center.y,
                g.center.z,
                g.log_scale.x,
                g.log_scale.y,
                g.log_scale.z,
                g.rotation[0],
                g.rotation[1],
                g.rotation[2],
                g.rotation[3],
                cloud.intensity(i),
            ];
            values.extend(row.iter().map(|&v| v as f32));
        }
        Self {
            columns: CLOUD_COLUMNS.iter().map(|c| c.to_string()).collect(),
            values,
        }
    }

    pub fn count(&self) -> usize {
        if self.columns.is_empty() {
            0
        } else {
            self.values.len() / self.columns.len()
        }
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// The x, y, z columns as world points.
    pub fn points(&self) -> Result<PointCloud> {
        let idx = ["x", "y", "z"].map(|c| self.column(c));
        let [Some(ix), Some(iy), Some(iz)] = idx else {
            return Err(Error::Format("point cloud lacks x, y, z columns".into()));
        };
        let w = self.columns.len();
        let points = self
            .values
            .chunks_exact(w)
            .map(|r| Vec3::new(r[ix] as f64, r[iy] as f64, r[iz] as f64))
            .collect();
        let cloud = PointCloud::new(points);
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!(
            "{POINT_CLOUD_MAGIC}\ncount {}\ncolumns {}\nend_header\n",
            self.count(),
            self.columns.join(" ")
        )
        .into_bytes();
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut reader = BufReader::new(reader);
        let mut line = String::new();
        let mut next_line = |what: &str| -> Result<String> {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 || !line.ends_with('\n') {
                return Err(Error::Format(format!("point cloud header ends before {what}")));
            }
            Ok(line.trim_end_matches('\n').to_string())
        };
        let magic = next_line("the magic line")?;
        if magic != POINT_CLOUD_MAGIC {
            return Err(Error::Format(format!(
                "bad magic `{magic}`, expected {POINT_CLOUD_MAGIC}"
            )));
        }
        let count_line = next_line("the count")?;
        let count: usize = count_line
            .strip_prefix("count ")
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| Error::Format(format!("bad count line `{count_line}`")))?;
        let columns_line = next_line("the column list")?;
        let columns: Vec<String> = columns_line
            .strip_prefix("columns ")
            .ok_or_else(|| Error::Format(format!("bad columns line `{columns_line}`")))?
            .split_whitespace()
            .map(String::from)
            .collect();
        for required in ["x", "y", "z"] {
            if !columns.iter().any(|c| c == required) {
                return Err(Error::Format(format!("point cloud lacks column `{required}`")));
            }
        }
        if next_line("end_header")? != "end_header" {
            return Err(Error::Format("missing end_header".into()));
        }
        let mut body = Vec::new();
        reader.read_to_end(&mut body)?;
        let expected = count
            .checked_mul(columns.len() * 4)
            .ok_or_else(|| Error::Format("point count overflows".into()))?;
        if body.len() != expected {
            return Err(Error::Format(format!(
                "declared {count} rows of {} columns ({expected} bytes) but body has {} bytes",
                columns.len(),
                body.len()
            )));
        }
        let values: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("point cloud contains non-finite values".into()));
        }
        Ok(Self { columns, values })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_reader(fs::File::open(path)?).map_err(|e| match e {
            Error::Format(m) => format_err(path, m),
            other => other,
        })
    }
}
