//! Procedural vessel trees and the simulated acquisitions built from them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConeBeamGeometry, GridSpec, Ray, Vec3};
use crate::metrics::PointCloud;
use crate::projector::forward_project;
use crate::volume::{Image, VoxelGrid};

/// Branching-tree generator settings. Lengths are in world units on the
/// `[-1, 1]^3` scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeParams {
    /// Branching levels; 1 gives a single unbranched tube.
    pub depth: usize,
    pub segments_per_branch: usize,
    pub segment_length: f64,
    pub root_radius: f64,
    /// Radius ratio child/parent at a bifurcation.
    pub radius_decay: f64,
    /// Radius ratio between consecutive segments of one branch.
    pub taper: f64,
    /// Half-angle between the two children of a bifurcation, radians.
    pub branch_angle: f64,
    /// Random perturbation of the heading per segment.
    pub jitter: f64,
    /// Attempts to place a segment inside the bounds before the branch stops.
    pub max_retries: usize,
    /// Tube surfaces stay inside `[-bound, bound]^3`.
    pub bound: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            depth: 4,
            segments_per_branch: 4,
            segment_length: 0.12,
            root_radius: 0.035,
            radius_decay: 0.79,
            taper: 0.97,
            branch_angle: 0.6,
            jitter: 0.25,
            max_retries: 8,
            bound: 0.9,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.into()));
        if self.depth == 0 {
            return bad("tree depth must be at least 1");
        }
        if self.segments_per_branch == 0 {
            return bad("segments_per_branch must be at least 1");
        }
        if !(self.radius_decay > 0.0 && self.radius_decay < 1.0) {
            return bad("radius_decay must lie in (0, 1)");
        }
        if !(self.taper > 0.0 && self.taper < 1.0) {
            return bad("taper must lie in (0, 1)");
        }
        if !(self.segment_length > 0.0 && self.root_radius > 0.0 && self.bound > self.root_radius) {
            return bad("segment length, root radius and bound must be positive with bound > root radius");
        }
        if !(self.branch_angle.is_finite() && self.jitter >= 0.0 && self.jitter.is_finite()) {
            return bad("branch angle and jitter must be finite, jitter non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeNode {
    pub position: Vec3,
    pub radius: f64,
}

/// Tree of tubes. Edge `(parent, child)` is a capsule between the two node
/// positions with the child's radius.
#[derive(Clone, Debug, PartialEq)]
pub struct VesselTree {
    pub nodes: Vec<TreeNode>,
    pub edges: Vec<(usize, usize)>,
    pub root_radius: f64,
    pub params: TreeParams,
}

impl VesselTree {
    /// A single capsule from `a` to `b`; with `a == b` it is a ball.
    pub fn capsule(a: Vec3, b: Vec3, radius: f64) -> Self {
        Self {
            nodes: vec![TreeNode { position: a, radius }, TreeNode { position: b, radius }],
            edges: vec![(0, 1)],
            root_radius: radius,
            params: TreeParams::default(),
        }
    }

    pub fn empty() -> Self {
        Self {
            nodes: Vec::new(),
            edges: Vec::new(),
            root_radius: 0.0,
            params: TreeParams::default(),
        }
    }

    fn tube(&self, edge: (usize, usize)) -> (Vec3, Vec3, f64) {
        let (p, c) = edge;
        (self.nodes[p].position, self.nodes[c].position, self.nodes[c].radius)
    }

    /// Connected, acyclic, strictly decreasing radii, inside the bounds.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 {
            return Ok(());
        }
        if self.edges.len() + 1 != n {
            return Err(Error::InvalidParameter(format!(
                "{n} nodes need {} edges, found {}",
                n - 1,
                self.edges.len()
            )));
        }
        let mut parent = vec![usize::MAX; n];
        for &(p, c) in &self.edges {
            if p >= n || c >= n || c == 0 || parent[c] != usize::MAX {
                return Err(Error::InvalidParameter(format!(
                    "edge ({p}, {c}) breaks the tree structure"
                )));
            }
            parent[c] = p;
            if !(self.nodes[c].radius < self.nodes[p].radius) {
                return Err(Error::InvalidParameter(format!(
                    "radius does not decrease along edge ({p}, {c})"
                )));
            }
        }
        // every node reaches the root without revisiting
        for start in 1..n {
            let (mut v, mut steps) = (start, 0);
            while v != 0 {
                v = parent[v];
                steps += 1;
                if v == usize::MAX || steps > n {
                    return Err(Error::InvalidParameter(format!(
                        "node {start} is not connected to the root"
                    )));
                }
            }
        }
        let b = self.params.bound;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.position.iter().any(|c| c.abs() + node.radius > b + 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "node {i} tube surface leaves the bounds"
                )));
            }
        }
        Ok(())
    }

    /// Point-in-tube test against every capsule.
    pub fn contains(&self, p: &Vec3) -> bool {
        self.edges.iter().any(|&e| {
            let (a, b, r) = self.tube(e);
            segment_distance_sq(p, &a, &b) <= r * r
        })
    }

    /// Smallest ray parameter `t >= 0` at which the ray enters any tube.
    pub fn first_hit(&self, ray: &Ray) -> Option<f64> {
        self.edges
            .iter()
            .filter_map(|&e| {
                let (a, b, r) = self.tube(e);
                ray_capsule(ray, &a, &b, r)
            })
            .min_by(f64::total_cmp)
    }
}

fn segment_distance_sq(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm_squared()
}

fn ray_sphere(ray: &Ray, c: &Vec3, r: f64) -> Option<f64> {
    let oc = ray.origin - c;
    let b = oc.dot(&ray.direction);
    let disc = b * b - (oc.norm_squared() - r * r);
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let t0 = -b - s;
    if t0 >= 0.0 {
        Some(t0)
    } else if -b + s >= 0.0 {
        Some(0.0)
    } else {
        None
    }
}

/// Entry parameter of a unit-direction ray into a capsule.
fn ray_capsule(ray: &Ray, a: &Vec3, b: &Vec3, r: f64) -> Option<f64> {
    if segment_distance_sq(&ray.origin, a, b) <= r * r {
        return Some(0.0);
    }
    let mut best: Option<f64> = None;
    let mut take = |t: f64| {
        if t >= 0.0 && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    let ba = b - a;
    let len2 = ba.norm_squared();
    if len2 > 0.0 {
        // infinite cylinder around the axis, kept where the foot lies on the segment
        let oa = ray.origin - a;
        let d = ray.direction;
        let bd = ba.dot(&d);
        let bo = ba.dot(&oa);
        let qa = len2 - bd * bd;
        let qb = len2 * oa.dot(&d) - bo * bd;
        let qc = len2 * oa.norm_squared() - bo * bo - r * r * len2;
        if qa > 0.0 {
            let disc = qb * qb - qa * qc;
            if disc >= 0.0 {
                let t = (-qb - disc.sqrt()) / qa;
                let foot = bo + t * bd;
                if foot >= 0.0 && foot <= len2 {
                    take(t);
                }
            }
        }
    }
    for c in [a, b] {
        if let Some(t) = ray_sphere(ray, c, r) {
            take(t);
        }
    }
    best
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn rotate_about(v: &Vec3, axis: &Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    v * c + axis.cross(v) * s + axis * axis.dot(v) * (1.0 - c)
}

struct Branch {
    start: usize,
    heading: Vec3,
    radius: f64,
    level: usize,
}

/// Random branching tree, deterministic in `seed`.
pub fn generate_tree(seed: u64, params: &TreeParams) -> Result<VesselTree> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = params;
    let root = Vec3::new(
        rng.gen_range(-0.3..0.3),
        rng.gen_range(-0.3..0.3),
        0.75f64.min(p.bound - p.root_radius),
    );
    let mut tree = VesselTree {
        nodes: vec![TreeNode {
            position: root,
            radius: p.root_radius,
        }],
        edges: Vec::new(),
        root_radius: p.root_radius,
        params: p.clone(),
    };
    let inside = |q: &Vec3, r: f64| q.iter().all(|c| c.abs() + r <= p.bound);
    let mut queue = std::collections::VecDeque::from([Branch {
        start: 0,
        heading: (Vec3::new(0.0, 0.0, -1.0) + random_unit(&mut rng) * 0.2).normalize(),
        radius: p.root_radius * p.taper,
        level: 1,
    }]);
    while let Some(branch) = queue.pop_front() {
        let mut node = branch.start;
        let mut heading = branch.heading;
        let mut radius = branch.radius;
        let mut complete = true;
        for _ in 0..p.segments_per_branch {
            let from = tree.nodes[node].position;
            let mut placed = None;
            for _ in 0..p.max_retries {
                let dir = (heading + random_unit(&mut rng) * p.jitter).normalize();
                let to = from + dir * p.segment_length;
                if inside(&to, radius) {
                    placed = Some((dir, to));
                    break;
                }
            }
            let Some((dir, to)) = placed else {
                complete = false;
                break;
            };
            tree.nodes.push(TreeNode { position: to, radius });
            let child = tree.nodes.len() - 1;
            tree.edges.push((node, child));
            node = child;
            heading = dir;
            radius *= p.taper;
        }
        if complete && branch.level < p.depth {
            let mut normal = random_unit(&mut rng).cross(&heading);
            if normal.norm() < 1e-6 {
                normal = Vec3::x().cross(&heading);
            }
            let normal = normal.normalize();
            let child_radius = tree.nodes[node].radius * p.radius_decay;
            for sign in [1.0, -1.0] {
                queue.push_back(Branch {
                    start: node,
                    heading: rotate_about(&heading, &normal, sign * p.branch_angle),
                    radius: child_radius,
                    level: branch.level + 1,
                });
            }
        }
    }
    Ok(tree)
}

/// Binary occupancy of voxel centres inside any tube.
pub fn voxelize_binary(tree: &VesselTree, grid: &GridSpec) -> VoxelGrid {
    let mut vol = VoxelGrid::zeros(*grid);
    let h = grid.voxel_size;
    let lower = grid.lower();
    for &edge in &tree.edges {
        let (a, b, r) = tree.tube(edge);
        let lo = a.inf(&b).add_scalar(-r);
        let hi = a.sup(&b).add_scalar(r);
        let range = |k: usize| {
            let i0 = ((lo[k] - lower[k]) / h - 0.5).ceil().max(0.0) as usize;
            let i1 = ((hi[k] - lower[k]) / h - 0.5).floor();
            if i1 < 0.0 {
                return i0..i0;
            }
            i0..(i1 as usize + 1).min(grid.shape[k])
        };
        let (rx, ry, rz) = (range(0), range(1), range(2));
        for z in rz {
            for y in ry.clone() {
                for x in rx.clone() {
                    let p = grid.voxel_center(x, y, z);
                    if segment_distance_sq(&p, &a, &b) <= r * r {
                        let i = grid.index(x, y, z);
                        vol.data[i] = 1.0;
                    }
                }
            }
        }
    }
    vol
}

/// Separable Gaussian blur, `sigma` in voxels, kernel radius `ceil(2 sigma)`.
pub fn smooth(vol: &VoxelGrid, sigma: f64) -> VoxelGrid {
    if sigma <= 0.0 {
        return vol.clone();
    }
    let radius = (2.0 * sigma).ceil() as usize;
    let mut kernel: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let [nx, ny, _] = vol.spec.shape;
    let strides = [1, nx, nx * ny];
    let mut cur = vol.data.clone();
    for axis in 0..3 {
        let n = vol.spec.shape[axis];
        let s = strides[axis];
        let mut next = vec![0.0; cur.len()];
        for (i, &v) in cur.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let pos = [i % nx, (i / nx) % ny, i / (nx * ny)][axis];
            for (k, w) in kernel.iter().enumerate() {
                let q = pos as i64 + k as i64 - radius as i64;
                if q >= 0 && (q as usize) < n {
                    next[(i as i64 + (q - pos as i64) * s as i64) as usize] += w * v;
                }
            }
        }
        cur = next;
    }
    VoxelGrid {
        spec: vol.spec,
        data: cur,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub tree: TreeParams,
    /// Blur width in voxels applied after voxelization; 0 disables it.
    pub smoothing_sigma: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            tree: TreeParams::default(),
            smoothing_sigma: 0.5,
        }
    }
}

/// A voxelized tree with its vessel point set.
#[derive(Clone, Debug)]
pub struct Phantom {
    pub tree: VesselTree,
    pub volume: VoxelGrid,
    /// Fraction of voxels inside a tube before smoothing.
    pub occupancy: f64,
    pub points: PointCloud,
}

impl Phantom {
    pub fn build(tree: VesselTree, grid: &GridSpec, smoothing_sigma: f64) -> Self {
        let binary = voxelize_binary(&tree, grid);
        let occupancy = binary.count_nonzero() as f64 / grid.len() as f64;
        let volume = smooth(&binary, smoothing_sigma);
        let points = PointCloud::from_voxels(grid, &volume.data, f64::MIN_POSITIVE);
        Self {
            tree,
            volume,
            occupancy,
            points,
        }
    }

    pub fn generate(seed: u64, cfg: &PhantomConfig, grid: &GridSpec) -> Result<Self> {
        Ok(Self::build(generate_tree(seed, &cfg.tree)?, grid, cfg.smoothing_sigma))
    }

    pub fn render(&self, geom: &ConeBeamGeometry, angle: f64) -> Result<TrainingSample> {
        let projection = forward_project(&self.volume, geom, &[angle])?.images.remove(0);
        let (depth, mask) = depth_map(&self.tree, geom, angle);
        Ok(TrainingSample {
            projection,
            points: self.points.clone(),
            volume: self.volume.clone(),
            depth,
            mask,
        })
    }
}

/// Projection, vessel points, volume, depth map and depth validity mask of
/// one view.
#[derive(Clone, Debug)]
pub struct TrainingSample {
    pub projection: Image,
    pub points: PointCloud,
    pub volume: VoxelGrid,
    /// Distance from the source to the first tube surface; `+inf` off-mask.
    pub depth: Image,
    /// 1 where the pixel ray meets a tube in front of the detector, else 0.
    pub mask: Image,
}

/// Voxelize `tree` on the geometry's grid and render one view.
pub fn render_sample(
    tree: &VesselTree,
    geom: &ConeBeamGeometry,
    angle: f64,
    smoothing_sigma: f64,
) -> Result<TrainingSample> {
    geom.validate()?;
    Phantom::build(tree.clone(), &geom.grid(), smoothing_sigma).render(geom, angle)
}

/// First-intersection depth per pixel and its validity mask. Hits beyond
/// the detector plane do not count.
pub fn depth_map(tree: &VesselTree, geom: &ConeBeamGeometry, angle: f64) -> (Image, Image) {
    let (rows, cols) = (geom.detector_rows, geom.detector_cols);
    let frame = geom.frame(angle);
    let mut depth = Image::from_data(rows, cols, vec![f64::INFINITY; rows * cols]).expect("shape");
    let mut mask = Image::zeros(rows, cols);
    for v in 0..rows {
        for u in 0..cols {
            let ray = geom.ray_through(&frame, u as f64 + 0.5, v as f64 + 0.5);
            let limit = geom.source_to_detector / ray.direction.dot(&frame.axis);
            if let Some(t) = tree.first_hit(&ray).filter(|&t| t <= limit) {
                depth.set(v, u, t);
                mask.set(v, u, 1.0);
            }
        }
    }
    (depth, mask)
}
