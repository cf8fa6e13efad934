use crate::error::{Error, Result};

use super::skeleton::BinaryVolume;

/// Region over which masked metrics are computed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalMask(pub BinaryVolume);

impl EvalMask {
    /// Ground-truth support (`gt > 0`) dilated by `radius` voxels. A 2D image
    /// uses `shape = [cols, rows, 1]`, so dilation stays in plane.
    pub fn from_ground_truth(shape: [usize; 3], gt: &[f64], radius: usize) -> Result<Self> {
        let support = BinaryVolume::from_data(shape, gt.iter().map(|&v| v > 0.0).collect())?;
        Ok(Self(support.dilate(radius)))
    }

    pub fn full(shape: [usize; 3]) -> Self {
        Self(BinaryVolume {
            shape,
            data: vec![true; shape.iter().product()],
        })
    }

    pub fn len(&self) -> usize {
        self.0.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.data.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.count()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.data[i]
    }
}

fn check_lengths(pred: &[f64], gt: &[f64], mask: &EvalMask) -> Result<()> {
    if pred.len() != gt.len() || gt.len() != mask.len() {
        return Err(Error::ShapeMismatch(format!(
            "pred {} / gt {} / mask {} elements",
            pred.len(),
            gt.len(),
            mask.len()
        )));
    }
    Ok(())
}

/// Dice coefficient in percent of `pred >= threshold` and `gt >= threshold`
/// restricted to the mask; 100 when both are empty there.
pub fn masked_dsc(pred: &[f64], gt: &[f64], mask: &EvalMask, threshold: f64) -> Result<f64> {
    check_lengths(pred, gt, mask)?;
    let (mut a, mut b, mut both) = (0usize, 0usize, 0usize);
    for i in 0..pred.len() {
        if !mask.contains(i) {
            continue;
        }
        let (pa, pb) = (pred[i] >= threshold, gt[i] >= threshold);
        a += pa as usize;
        b += pb as usize;
        both += (pa && pb) as usize;
    }
    if a + b == 0 {
        return Ok(100.0);
    }
    Ok(200.0 * both as f64 / (a + b) as f64)
}

/// `10 log10(peak² / mse)` inside the mask, with `peak` the largest
/// ground-truth value there. Identical inputs give `+inf`.
pub fn masked_psnr(pred: &[f64], gt: &[f64], mask: &EvalMask) -> Result<f64> {
    check_lengths(pred, gt, mask)?;
    let mut n = 0usize;
    let mut sse = 0.0;
    let mut peak = f64::NEG_INFINITY;
    for i in 0..pred.len() {
        if mask.contains(i) {
            let d = pred[i] - gt[i];
            sse += d * d;
            peak = peak.max(gt[i]);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("PSNR mask selects no elements".into()));
    }
    let mse = sse / n as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}
