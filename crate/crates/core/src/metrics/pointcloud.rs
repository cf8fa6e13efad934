use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Vec3};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        match self.points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            Some(i) => Err(Error::InvalidParameter(format!("point {i} is not finite"))),
            None => Ok(()),
        }
    }

    /// World-space centres of the voxels with `value >= threshold`.
    pub fn from_voxels(grid: &GridSpec, values: &[f64], threshold: f64) -> Self {
        let points = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= threshold && v != 0.0)
            .map(|(i, _)| {
                let [x, y, z] = grid.coords(i);
                grid.voxel_center(x, y, z)
            })
            .collect();
        Self { points }
    }
}

/// Uniform bucket grid for exact nearest-neighbour queries.
struct BucketGrid<'a> {
    points: &'a [Vec3],
    lower: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl<'a> BucketGrid<'a> {
    fn new(points: &'a [Vec3]) -> Self {
        let mut lower = Vec3::repeat(f64::INFINITY);
        let mut upper = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            lower = lower.inf(p);
            upper = upper.sup(p);
        }
        let extent = upper - lower;
        let volume = extent.iter().map(|e| e.max(1e-12)).product::<f64>();
        let cell = (volume / points.len() as f64).cbrt().max(extent.max() / 64.0).max(1e-9);
        let dims = [0, 1, 2].map(|k| ((extent[k] / cell).floor() as usize + 1).min(1024));
        let mut grid = Self {
            points,
            lower,
            cell,
            dims,
            starts: Vec::new(),
            order: Vec::new(),
        };
        let n_cells = dims.iter().product::<usize>();
        let mut counts = vec![0usize; n_cells + 1];
        let cells: Vec<usize> = points.iter().map(|p| grid.cell_index(&grid.cell_of(p))).collect();
        for &c in &cells {
            counts[c + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = vec![0; points.len()];
        for (i, &c) in cells.iter().enumerate() {
            order[fill[c]] = i;
            fill[c] += 1;
        }
        grid.starts = counts;
        grid.order = order;
        grid
    }

    fn cell_of(&self, p: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|k| {
            let c = ((p[k] - self.lower[k]) / self.cell).floor() as i64;
            c.clamp(0, self.dims[k] as i64 - 1)
        })
    }

    fn cell_index(&self, c: &[i64; 3]) -> usize {
        (c[2] as usize * self.dims[1] + c[1] as usize) * self.dims[0] + c[0] as usize
    }

    /// Squared distance to the nearest stored point.
    fn nearest_sq(&self, q: &Vec3) -> f64 {
        let home = self.cell_of(q);
        let mut best = f64::INFINITY;
        let max_ring = *self.dims.iter().max().unwrap() as i64;
        for ring in 0..=max_ring {
            // cells `ring` steps from home are at least `ring - 1` cells away,
            // also when the query was clamped into the grid from outside
            if ring > 0 {
                let reach = (ring - 1) as f64 * self.cell;
                if reach * reach > best {
                    break;
                }
            }
            for dz in -ring..=ring {
                for dy in -ring..=ring {
                    for dx in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let c = [home[0] + dx, home[1] + dy, home[2] + dz];
                        if (0..3).any(|k| c[k] < 0 || c[k] >= self.dims[k] as i64) {
                            continue;
                        }
                        let ci = self.cell_index(&c);
                        for &i in &self.order[self.starts[ci]..self.starts[ci + 1]] {
                            let d = self.points[i] - q;
                            let d2 = d.x * d.x + d.y * d.y + d.z * d.z;
                            if d2 < best {
                                best = d2;
                            }
                        }
                    }
                }
            }
        }
        best
    }
}

fn mean_nearest_sq(from: &[Vec3], to: &[Vec3]) -> f64 {
    let index = BucketGrid::new(to);
    let sum: f64 = from.iter().map(|p| index.nearest_sq(p)).sum();
    sum / from.len() as f64
}

/// Symmetric Chamfer distance: mean squared nearest-neighbour distance from
/// `a` to `b` plus the same from `b` to `a`.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("Chamfer distance needs two non-empty point sets".into()));
    }
    Ok(mean_nearest_sq(&a.points, &b.points) + mean_nearest_sq(&b.points, &a.points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(a: &[Vec3], b: &[Vec3]) -> f64 {
        let one = |from: &[Vec3], to: &[Vec3]| {
            from.iter()
                .map(|p| to.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / from.len() as f64
        };
        one(a, b) + one(b, a)
    }

    fn cloud(rng: &mut ChaCha8Rng, n: usize, spread: f64, offset: f64) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| Vec3::from_fn(|_, _| offset + rng.gen_range(-spread..spread)))
                .collect(),
        )
    }

    #[test]
    fn identical_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = cloud(&mut rng, 50, 1.0, 0.0);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn singleton_unit_offset() {
        let a = PointCloud::new(vec![Vec3::zeros()]);
        let b = PointCloud::new(vec![Vec3::new(1.0, 0.0, 0.0)]);
        assert_eq!(chamfer(&a, &b).unwrap(), 2.0);
    }

    #[test]
    fn empty_rejected() {
        let a = PointCloud::new(vec![Vec3::zeros()]);
        assert!(chamfer(&a, &PointCloud::default()).is_err());
        assert!(chamfer(&PointCloud::default(), &a).is_err());
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..20 {
            let a = cloud(&mut rng, 200, 1.0, 0.0);
            let b = cloud(&mut rng, 150 + trial, 0.5, 0.3 * trial as f64);
            let fast = chamfer(&a, &b).unwrap();
            let slow = brute(&a.points, &b.points);
            assert!((fast - slow).abs() <= 1e-9 * slow.max(1.0), "{fast} vs {slow}");
            assert_eq!(fast, chamfer(&b, &a).unwrap());
        }
    }

    #[test]
    fn lattice_points_with_shared_coordinates() {
        let grid = GridSpec::cube(16);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let va: Vec<f64> = (0..grid.len())
            .map(|_| if rng.gen_bool(0.05) { 1.0 } else { 0.0 })
            .collect();
        let vb: Vec<f64> = (0..grid.len())
            .map(|_| if rng.gen_bool(0.02) { 1.0 } else { 0.0 })
            .collect();
        let a = PointCloud::from_voxels(&grid, &va, 0.5);
        let b = PointCloud::from_voxels(&grid, &vb, 0.5);
        let slow = brute(&a.points, &b.points);
        assert!((chamfer(&a, &b).unwrap() - slow).abs() <= 1e-12);
    }
}
