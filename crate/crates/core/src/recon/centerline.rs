use crate::volume::Image;

/// Binarize at `threshold_frac · max` and thin to a one-pixel-wide
/// skeleton (two-subiteration parallel thinning). Output pixels are 0 or 1.
pub fn extract_centerline_mask(projection: &Image, threshold_frac: f64) -> Image {
    let (rows, cols) = (projection.rows, projection.cols);
    let max = projection.max();
    let mut out = Image::zeros(rows, cols);
    if !(max > 0.0) {
        return out;
    }
    let t = threshold_frac * max;
    let mut img: Vec<u8> = projection.data.iter().map(|&v| (v >= t && v > 0.0) as u8).collect();
    thin(&mut img, rows, cols);
    for (o, &b) in out.data.iter_mut().zip(&img) {
        *o = b as f64;
    }
    out
}

fn thin(img: &mut [u8], rows: usize, cols: usize) {
    let at = |img: &[u8], r: i64, c: i64| -> u8 {
        if r < 0 || c < 0 || r >= rows as i64 || c >= cols as i64 {
            0
        } else {
            img[r as usize * cols + c as usize]
        }
    };
    let mut marked = Vec::new();
    loop {
        let mut changed = false;
        for step in 0..2 {
            marked.clear();
            for r in 0..rows as i64 {
                for c in 0..cols as i64 {
                    if at(img, r, c) == 0 {
                        continue;
                    }
                    // P2..P9 clockwise from north
                    let p = [
                        at(img, r - 1, c),
                        at(img, r - 1, c + 1),
                        at(img, r, c + 1),
                        at(img, r + 1, c + 1),
                        at(img, r + 1, c),
                        at(img, r + 1, c - 1),
                        at(img, r, c - 1),
                        at(img, r - 1, c - 1),
                    ];
                    let b: u8 = p.iter().sum();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&k| p[k] == 0 && p[(k + 1) % 8] == 1).count();
                    if a != 1 {
                        continue;
                    }
                    let (c1, c2) = if step == 0 {
                        (p[0] * p[2] * p[4], p[2] * p[4] * p[6])
                    } else {
                        (p[0] * p[2] * p[6], p[0] * p[4] * p[6])
                    };
                    if c1 == 0 && c2 == 0 {
                        marked.push(r as usize * cols + c as usize);
                    }
                }
            }
            for &i in &marked {
                img[i] = 0;
            }
            changed |= !marked.is_empty();
        }
        if !changed {
            break;
        }
    }
}
