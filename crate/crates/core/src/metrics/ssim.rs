use rayon::prelude::*;

use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 7;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Summed-volume table with a zero border: `(nx+1)(ny+1)(nz+1)` entries.
fn integral(shape: [usize; 3], f: impl Fn(usize) -> f64) -> Vec<f64> {
    let [nx, ny, nz] = shape;
    let (sx, sy) = (nx + 1, (nx + 1) * (ny + 1));
    let mut t = vec![0.0; sy * (nz + 1)];
    for z in 0..nz {
        for y in 0..ny {
            let mut row = 0.0;
            for x in 0..nx {
                row += f((z * ny + y) * nx + x);
                let o = (z + 1) * sy + (y + 1) * sx + x + 1;
                t[o] = row + t[o - sx] + t[o - sy] - t[o - sx - sy];
            }
        }
    }
    t
}

fn box_sum(t: &[f64], shape: [usize; 3], x: usize, y: usize, z: usize, w: usize) -> f64 {
    let (sx, sy) = (shape[0] + 1, (shape[0] + 1) * (shape[1] + 1));
    let at = |x: usize, y: usize, z: usize| t[z * sy + y * sx + x];
    let (x1, y1, z1) = (x + w, y + w, z + w);
    at(x1, y1, z1) - at(x, y1, z1) - at(x1, y, z1) - at(x1, y1, z) + at(x, y, z1) + at(x, y1, z) + at(x1, y, z)
        - at(x, y, z)
}

/// Mean SSIM in percent over every fully contained 7³ window, using
/// population statistics per window.
pub fn ssim3d(shape: [usize; 3], pred: &[f64], gt: &[f64]) -> Result<f64> {
    let n: usize = shape.iter().product();
    if pred.len() != n || gt.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{shape:?} needs {n} values, got {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    let w = SSIM_WINDOW;
    if shape.iter().any(|&s| s < w) {
        return Err(Error::ShapeMismatch(format!(
            "{shape:?} is smaller than the {w}³ window"
        )));
    }
    let sa = integral(shape, |i| pred[i]);
    let sb = integral(shape, |i| gt[i]);
    let saa = integral(shape, |i| pred[i] * pred[i]);
    let sbb = integral(shape, |i| gt[i] * gt[i]);
    let sab = integral(shape, |i| pred[i] * gt[i]);
    let [px, py, pz] = shape.map(|s| s - w + 1);
    let inv = 1.0 / (w * w * w) as f64;
    let total: f64 = (0..pz)
        .into_par_iter()
        .map(|z| {
            let mut acc = 0.0;
            for y in 0..py {
                for x in 0..px {
                    let ma = box_sum(&sa, shape, x, y, z, w) * inv;
                    let mb = box_sum(&sb, shape, x, y, z, w) * inv;
                    let va = (box_sum(&saa, shape, x, y, z, w) * inv - ma * ma).max(0.0);
                    let vb = (box_sum(&sbb, shape, x, y, z, w) * inv - mb * mb).max(0.0);
                    let cov = box_sum(&sab, shape, x, y, z, w) * inv - ma * mb;
                    acc += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
                }
            }
            acc
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(100.0 * total / (px * py * pz) as f64)
}
