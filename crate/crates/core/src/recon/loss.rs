use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projector::ProjectionSet;
use crate::volume::Image;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconLossConfig {
    /// Weight of the plain L2 term; `1 - alpha` weighs the centreline term.
    pub alpha: f64,
    /// Centreline binarization level as a fraction of each view's maximum.
    pub centerline_threshold: f64,
}

impl Default for ReconLossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            centerline_threshold: 0.1,
        }
    }
}

impl ReconLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.centerline_threshold > 0.0 && self.centerline_threshold < 1.0) {
            return Err(Error::InvalidParameter(
                "centerline threshold must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValue {
    /// `Σ ‖P̂ − P‖²`
    pub l2: f64,
    /// `Σ ‖(P̂ − P)·M‖²`
    pub centerline: f64,
    /// `α·l2 + (1 − α)·centerline`
    pub total: f64,
}

impl LossValue {
    pub fn combine(l2: f64, centerline: f64, alpha: f64) -> Self {
        Self {
            l2,
            centerline,
            total: alpha * l2 + (1.0 - alpha) * centerline,
        }
    }
}

/// Projection loss against measured views with per-view centreline masks,
/// and its derivative with respect to every predicted pixel.
pub fn recon_loss(
    pred: &ProjectionSet,
    meas: &ProjectionSet,
    masks: &[Image],
    alpha: f64,
) -> Result<(LossValue, ProjectionSet)> {
    if pred.len() != meas.len() || masks.len() != meas.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predicted views, {} measured, {} masks",
            pred.len(),
            meas.len(),
            masks.len()
        )));
    }
    let mut cot = pred.clone();
    let (mut l2, mut cl) = (0.0, 0.0);
    for k in 0..pred.len() {
        let (p, m, mask) = (&pred.images[k], &meas.images[k], &masks[k]);
        if !p.same_shape(m) || !p.same_shape(mask) {
            return Err(Error::ShapeMismatch(format!("view {k} image shapes differ")));
        }
        for (i, c) in cot.images[k].data.iter_mut().enumerate() {
            let r = p.data[i] - m.data[i];
            let w = mask.data[i];
            l2 += r * r;
            cl += (r * w) * (r * w);
            *c = 2.0 * r * (alpha + (1.0 - alpha) * w * w);
        }
    }
    Ok((LossValue::combine(l2, cl, alpha), cot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConeBeamGeometry;

    fn set(images: Vec<Image>) -> ProjectionSet {
        let mut geom = ConeBeamGeometry::standard(4, 2);
        geom.detector_rows = images[0].rows;
        geom.detector_cols = images[0].cols;
        let angles: Vec<f64> = (0..images.len()).map(|k| k as f64 * 0.3).collect();
        ProjectionSet {
            geometry: geom,
            angles,
            images,
        }
    }

    #[test]
    fn identical_is_zero() {
        let a = set(vec![Image::from_data(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()]);
        let (l, cot) = recon_loss(&a, &a, &[Image::zeros(2, 2)], 0.5).unwrap();
        assert_eq!(l.total, 0.0);
        assert!(cot.images[0].data.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn alpha_one_is_plain_l2() {
        let p = set(vec![Image::from_data(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()]);
        let m = set(vec![Image::from_data(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap()]);
        let mask = Image::from_data(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let (l, _) = recon_loss(&p, &m, &[mask], 1.0).unwrap();
        assert_eq!(l.total, 1.0 + 4.0 + 4.0 + 9.0);
    }

    #[test]
    fn hand_evaluated_example() {
        let p = set(vec![Image::from_data(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap()]);
        let m = set(vec![Image::zeros(2, 2)]);
        let mask = Image::from_data(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let (l, _) = recon_loss(&p, &m, &[mask], 0.5).unwrap();
        assert_eq!(l.total, 1.0);
    }

    #[test]
    fn cotangent_matches_difference_quotient() {
        let p = set(vec![
            Image::from_data(2, 3, vec![0.3, -0.2, 1.5, 0.0, 0.7, 0.1]).unwrap()
        ]);
        let m = set(vec![Image::from_data(2, 3, vec![0.1, 0.4, 1.0, 0.2, 0.2, 0.9]).unwrap()]);
        let masks = [Image::from_data(2, 3, vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap()];
        let (_, cot) = recon_loss(&p, &m, &masks, 0.3).unwrap();
        for i in 0..6 {
            let h = 1e-6;
            let mut a = p.clone();
            a.images[0].data[i] += h;
            let mut b = p.clone();
            b.images[0].data[i] -= h;
            let fd = (recon_loss(&a, &m, &masks, 0.3).unwrap().0.total
                - recon_loss(&b, &m, &masks, 0.3).unwrap().0.total)
                / (2.0 * h);
            assert!((fd - cot.images[0].data[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn mismatch_rejected() {
        let a = set(vec![Image::zeros(2, 2)]);
        let b = set(vec![Image::zeros(2, 2), Image::zeros(2, 2)]);
        assert!(recon_loss(&a, &b, &[Image::zeros(2, 2)], 0.5).is_err());
        assert!(recon_loss(&a, &a, &[Image::zeros(3, 2)], 0.5).is_err());
    }
}
