//! Binary volumes, 26-connected components and topology-preserving 3D
//! thinning.
//!
//! Thinning peels border voxels direction by direction (±x, ±y, ±z). A voxel
//! is removed only if it is simple in the (26, 6) topology and is not an
//! end point. Simplicity is decided from topological numbers: exactly one
//! 26-component of foreground in the 26-neighbourhood, and exactly one
//! 6-component of background in the 18-neighbourhood that touches a face
//! neighbour. Candidates of a sub-iteration are re-checked one at a time at
//! deletion, so every single deletion preserves topology.

use std::collections::VecDeque;
use std::sync::OnceLock;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryVolume {
    /// `[nx, ny, nz]`; a 2D mask has `nz == 1`.
    pub shape: [usize; 3],
    pub data: Vec<bool>,
}

/// A thinned binary volume.
pub type SkeletonMask = BinaryVolume;

impl BinaryVolume {
    pub fn empty(shape: [usize; 3]) -> Self {
        Self {
            shape,
            data: vec![false; shape.iter().product()],
        }
    }

    pub fn from_data(shape: [usize; 3], data: Vec<bool>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!("{shape:?} vs {} values", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn threshold(shape: [usize; 3], values: &[f64], threshold: f64) -> Result<Self> {
        Self::from_data(shape, values.iter().map(|&v| v >= threshold).collect())
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.shape[1] + y) * self.shape[0] + x
    }

    #[inline]
    fn get_signed(&self, x: i64, y: i64, z: i64) -> bool {
        let [nx, ny, nz] = self.shape.map(|n| n as i64);
        if x < 0 || y < 0 || z < 0 || x >= nx || y >= ny || z >= nz {
            return false;
        }
        self.data[((z * ny + y) * nx + x) as usize]
    }

    fn coords(&self, i: usize) -> [i64; 3] {
        let [nx, ny, _] = self.shape;
        [(i % nx) as i64, ((i / nx) % ny) as i64, (i / (nx * ny)) as i64]
    }

    /// 3x3x3 neighbourhood, index `(dx+1) + 3(dy+1) + 9(dz+1)`.
    fn neighbourhood(&self, p: [i64; 3]) -> [bool; 27] {
        let mut n = [false; 27];
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    n[((dx + 1) + 3 * (dy + 1) + 9 * (dz + 1)) as usize] =
                        self.get_signed(p[0] + dx, p[1] + dy, p[2] + dz);
                }
            }
        }
        n
    }

    pub fn intersection_count(&self, other: &BinaryVolume) -> usize {
        self.data.iter().zip(&other.data).filter(|(a, b)| **a && **b).count()
    }

    /// Chebyshev (box) dilation by `radius` voxels.
    pub fn dilate(&self, radius: usize) -> BinaryVolume {
        let mut out = self.clone();
        for axis in 0..3 {
            out = out.dilate_axis(axis, radius);
        }
        out
    }

    fn dilate_axis(&self, axis: usize, radius: usize) -> BinaryVolume {
        let [nx, ny, _] = self.shape;
        let stride = [1, nx, nx * ny][axis];
        let n = self.shape[axis];
        let mut out = BinaryVolume::empty(self.shape);
        for i in 0..self.data.len() {
            if !self.data[i] {
                continue;
            }
            let pos = [i % nx, (i / nx) % ny, i / (nx * ny)][axis];
            let base = i - pos * stride;
            let lo = pos.saturating_sub(radius);
            let hi = (pos + radius).min(n - 1);
            for k in lo..=hi {
                out.data[base + k * stride] = true;
            }
        }
        out
    }
}

struct Tables {
    /// 26-adjacency among the 26 neighbour positions.
    adj26: Vec<Vec<usize>>,
    /// 6-adjacency among the 18-neighbourhood.
    adj6: Vec<Vec<usize>>,
    in18: [bool; 27],
    faces: [usize; 6],
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let off = |i: usize| [(i % 3) as i64 - 1, ((i / 3) % 3) as i64 - 1, (i / 9) as i64 - 1];
        let mut in18 = [false; 27];
        for (i, slot) in in18.iter_mut().enumerate() {
            let o = off(i);
            let l1: i64 = o.iter().map(|c| c.abs()).sum();
            *slot = i != 13 && l1 <= 2;
        }
        let mut adj26 = vec![Vec::new(); 27];
        let mut adj6 = vec![Vec::new(); 27];
        for a in 0..27 {
            for b in 0..27 {
                if a == b || a == 13 || b == 13 {
                    continue;
                }
                let (oa, ob) = (off(a), off(b));
                let d: Vec<i64> = (0..3).map(|k| (oa[k] - ob[k]).abs()).collect();
                if d.iter().all(|&c| c <= 1) {
                    adj26[a].push(b);
                }
                if d.iter().sum::<i64>() == 1 && in18[a] && in18[b] {
                    adj6[a].push(b);
                }
            }
        }
        Tables {
            adj26,
            adj6,
            in18,
            faces: [4, 10, 12, 14, 16, 22],
        }
    })
}

/// Number of 26-components of foreground in the punctured neighbourhood.
fn t26(n: &[bool; 27]) -> usize {
    let t = tables();
    let mut seen = [false; 27];
    let mut count = 0;
    let mut stack = Vec::with_capacity(26);
    for start in 0..27 {
        if start == 13 || !n[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(a) = stack.pop() {
            for &b in &t.adj26[a] {
                if n[b] && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
    }
    count
}

/// Number of 6-components of background in the 18-neighbourhood that are
/// 6-adjacent to the centre.
fn t6_background(n: &[bool; 27]) -> usize {
    let t = tables();
    let mut seen = [false; 27];
    let mut count = 0;
    let mut stack = Vec::with_capacity(18);
    for &start in &t.faces {
        if n[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(a) = stack.pop() {
            for &b in &t.adj6[a] {
                if t.in18[b] && !n[b] && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
    }
    count
}

fn is_simple(n: &[bool; 27]) -> bool {
    t26(n) == 1 && t6_background(n) == 1
}

fn neighbour_count(n: &[bool; 27]) -> usize {
    n.iter().enumerate().filter(|(i, &b)| *i != 13 && b).count()
}

/// Topology-preserving thinning to a centreline.
pub fn skeletonize3d(vol: &BinaryVolume) -> SkeletonMask {
    let mut img = vol.clone();
    let mut points: Vec<usize> = (0..img.data.len()).filter(|&i| img.data[i]).collect();
    const DIRECTIONS: [[i64; 3]; 6] = [[0, -1, 0], [0, 1, 0], [1, 0, 0], [-1, 0, 0], [0, 0, 1], [0, 0, -1]];
    loop {
        let mut removed = 0;
        for dir in DIRECTIONS {
            let candidates: Vec<usize> = points
                .iter()
                .copied()
                .filter(|&i| {
                    if !img.data[i] {
                        return false;
                    }
                    let p = img.coords(i);
                    if img.get_signed(p[0] + dir[0], p[1] + dir[1], p[2] + dir[2]) {
                        return false;
                    }
                    let n = img.neighbourhood(p);
                    neighbour_count(&n) > 1 && is_simple(&n)
                })
                .collect();
            for i in candidates {
                let n = img.neighbourhood(img.coords(i));
                if neighbour_count(&n) > 1 && is_simple(&n) {
                    img.data[i] = false;
                    removed += 1;
                }
            }
            points.retain(|&i| img.data[i]);
        }
        if removed == 0 {
            break;
        }
    }
    img
}

/// Number of 26-connected foreground components.
pub fn count_components_26(vol: &BinaryVolume) -> usize {
    let mut seen = vec![false; vol.data.len()];
    let mut queue = VecDeque::new();
    let mut count = 0;
    for start in 0..vol.data.len() {
        if !vol.data[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let p = vol.coords(i);
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let q = [p[0] + dx, p[1] + dy, p[2] + dz];
                        if vol.get_signed(q[0], q[1], q[2]) {
                            let j = vol.index(q[0] as usize, q[1] as usize, q[2] as usize);
                            if !seen[j] {
                                seen[j] = true;
                                queue.push_back(j);
                            }
                        }
                    }
                }
            }
        }
    }
    count
}

/// True when some 2x2x2 cube is entirely foreground.
pub fn has_full_2x2x2_block(vol: &BinaryVolume) -> bool {
    let [nx, ny, nz] = vol.shape;
    if nx < 2 || ny < 2 || nz < 2 {
        return false;
    }
    for z in 0..nz - 1 {
        for y in 0..ny - 1 {
            for x in 0..nx - 1 {
                let all = (0..8).all(|c| vol.data[vol.index(x + (c & 1), y + ((c >> 1) & 1), z + (c >> 2))]);
                if all {
                    return true;
                }
            }
        }
    }
    false
}

/// Skeleton Dice loss: `1 - 2|S_p ∩ S_g| / (|S_p| + |S_g|)` on the 3D
/// skeletons of the two binary volumes; zero when both skeletons are empty.
pub fn cldice_loss(pred: &BinaryVolume, gt: &BinaryVolume) -> Result<f64> {
    if pred.shape != gt.shape {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", pred.shape, gt.shape)));
    }
    Ok(skeleton_dice_loss(&skeletonize3d(pred), &skeletonize3d(gt)))
}

/// The same loss on skeletons that are already computed.
pub fn skeleton_dice_loss(skel_pred: &SkeletonMask, skel_gt: &SkeletonMask) -> f64 {
    let (a, b) = (skel_pred.count(), skel_gt.count());
    if a + b == 0 {
        return 0.0;
    }
    1.0 - 2.0 * skel_pred.intersection_count(skel_gt) as f64 / (a + b) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tube(shape: [usize; 3], len: std::ops::Range<usize>, half: usize) -> BinaryVolume {
        let mut v = BinaryVolume::empty(shape);
        let (cy, cz) = (shape[1] / 2, shape[2] / 2);
        for x in len {
            for y in cy - half..=cy + half {
                for z in cz - half..=cz + half {
                    let i = v.index(x, y, z);
                    v.data[i] = true;
                }
            }
        }
        v
    }

    fn line(shape: [usize; 3], xs: std::ops::Range<usize>) -> BinaryVolume {
        let mut v = BinaryVolume::empty(shape);
        for x in xs {
            let i = v.index(x, shape[1] / 2, shape[2] / 2);
            v.data[i] = true;
        }
        v
    }

    #[test]
    fn empty_volume_has_empty_skeleton() {
        let v = BinaryVolume::empty([6, 6, 6]);
        assert_eq!(skeletonize3d(&v).count(), 0);
    }

    #[test]
    fn thick_tube_thins_to_centreline() {
        let v = tube([24, 9, 9], 2..22, 1);
        let s = skeletonize3d(&v);
        assert!(!has_full_2x2x2_block(&s));
        // one voxel per x slice along the tube, allowing endpoint erosion
        let mut per_x = vec![0; 24];
        for i in 0..s.data.len() {
            if s.data[i] {
                per_x[i % 24] += 1;
            }
        }
        assert!(per_x.iter().all(|&c| c <= 1), "{per_x:?}");
        let length = per_x.iter().filter(|&&c| c == 1).count();
        assert!((16..=20).contains(&length), "length {length}");
        assert_eq!(count_components_26(&s), 1);
        // the centreline stays on the tube axis
        for i in 0..s.data.len() {
            if s.data[i] {
                let y = (i / 24) % 9;
                let z = i / (24 * 9);
                assert_eq!((y, z), (4, 4));
            }
        }
    }

    #[test]
    fn skeleton_is_idempotent() {
        let v = tube([20, 11, 11], 3..17, 2);
        let s = skeletonize3d(&v);
        assert_eq!(skeletonize3d(&s), s);
    }

    #[test]
    fn single_voxel_survives() {
        let mut v = BinaryVolume::empty([5, 5, 5]);
        v.data[62] = true;
        assert_eq!(skeletonize3d(&v), v);
    }

    #[test]
    fn ring_keeps_its_hole() {
        // a square annulus in one plane: thinning must not break the loop
        let mut v = BinaryVolume::empty([16, 16, 5]);
        for y in 3..13 {
            for x in 3..13 {
                let border = !(5..11).contains(&x) || !(5..11).contains(&y);
                if border {
                    for z in 1..4 {
                        let i = v.index(x, y, z);
                        v.data[i] = true;
                    }
                }
            }
        }
        let s = skeletonize3d(&v);
        assert_eq!(count_components_26(&s), 1);
        assert!(s.count() >= 20);
    }

    #[test]
    fn cldice_cases() {
        let shape = [40, 5, 5];
        let gt = line(shape, 4..36);
        assert_eq!(cldice_loss(&gt, &gt).unwrap(), 0.0);
        let half = line(shape, 4..20);
        assert!((cldice_loss(&half, &gt).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let mut other = BinaryVolume::empty(shape);
        for x in 4..36 {
            let i = other.index(x, 0, 0);
            other.data[i] = true;
        }
        assert_eq!(cldice_loss(&other, &gt).unwrap(), 1.0);
        let empty = BinaryVolume::empty(shape);
        assert_eq!(cldice_loss(&empty, &empty).unwrap(), 0.0);
        assert!(cldice_loss(&empty, &BinaryVolume::empty([4, 4, 4])).is_err());
    }

    #[test]
    fn components_counted() {
        let mut v = BinaryVolume::empty([10, 10, 10]);
        for i in [v.index(1, 1, 1), v.index(2, 2, 2), v.index(7, 7, 7)] {
            v.data[i] = true;
        }
        assert_eq!(count_components_26(&v), 2);
    }

    #[test]
    fn dilation_is_a_box() {
        let mut v = BinaryVolume::empty([9, 9, 9]);
        let c = v.index(4, 4, 4);
        v.data[c] = true;
        assert_eq!(v.dilate(2).count(), 125);
        let mut edge = BinaryVolume::empty([9, 9, 9]);
        edge.data[0] = true;
        assert_eq!(edge.dilate(3).count(), 64);
    }
}
