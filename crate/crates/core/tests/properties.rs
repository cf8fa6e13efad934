//! Property tests for the invariants of the metrics, projector, composition,
//! loss and density control.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vesselgs_core::checks::{random_cloud, random_volume};
use vesselgs_core::fbp::{fbp_unclamped, FbpConfig};
use vesselgs_core::gaussian::{compose_volume, ComposeConfig};
use vesselgs_core::geometry::{ConeBeamGeometry, GridSpec, Vec3};
use vesselgs_core::metrics::{chamfer, cldice_loss, masked_dsc, ssim3d, BinaryVolume, EvalMask, PointCloud};
use vesselgs_core::projector::forward_project;
use vesselgs_core::recon::{density_control_step, extract_centerline_mask, recon_loss, DensityControlConfig};
use vesselgs_core::volume::Image;

fn points(max: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 1..max)
        .prop_map(|v| PointCloud::new(v.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect()))
}

fn binary(len: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(prop::bool::weighted(0.3), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chamfer_symmetric_nonnegative(a in points(40), b in points(40)) {
        let ab = chamfer(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, chamfer(&b, &a).unwrap());
        prop_assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn dice_in_range(p in prop::collection::vec(0.0..1.0f64, 216), g in prop::collection::vec(0.0..1.0f64, 216), m in binary(216)) {
        let mask = EvalMask(BinaryVolume::from_data([6, 6, 6], m).unwrap());
        let d = masked_dsc(&p, &g, &mask, 0.5).unwrap();
        prop_assert!((0.0..=100.0).contains(&d));
        prop_assert_eq!(masked_dsc(&g, &g, &mask, 0.5).unwrap(), 100.0);
    }

    #[test]
    fn cldice_in_unit_interval(a in binary(512), b in binary(512)) {
        let a = BinaryVolume::from_data([8, 8, 8], a).unwrap();
        let b = BinaryVolume::from_data([8, 8, 8], b).unwrap();
        let l = cldice_loss(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&l));
        prop_assert_eq!(cldice_loss(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn ssim_bounded_and_identity(p in prop::collection::vec(0.0..1.0f64, 512), g in prop::collection::vec(0.0..1.0f64, 512)) {
        let s = ssim3d([8, 8, 8], &p, &g).unwrap();
        prop_assert!((-100.0..=100.0).contains(&s));
        prop_assert!((ssim3d([8, 8, 8], &g, &g).unwrap() - 100.0).abs() < 1e-9);
        if p != g {
            prop_assert!(s < 100.0);
        }
    }

    #[test]
    fn projection_is_linear(seed in any::<u64>(), a in -2.0..2.0f64, angle in 0.0..std::f64::consts::TAU) {
        let geom = ConeBeamGeometry::standard(12, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_volume(&geom.grid(), &mut rng);
        let y = random_volume(&geom.grid(), &mut rng);
        let mut z = x.clone();
        z.data.iter_mut().zip(&y.data).for_each(|(zi, yi)| *zi = a * *zi + yi);
        let px = forward_project(&x, &geom, &[angle]).unwrap();
        let py = forward_project(&y, &geom, &[angle]).unwrap();
        let pz = forward_project(&z, &geom, &[angle]).unwrap();
        for ((vz, vx), vy) in pz.images[0].data.iter().zip(&px.images[0].data).zip(&py.images[0].data) {
            prop_assert!((vz - (a * vx + vy)).abs() <= 1e-9 * (1.0 + vz.abs()));
        }
    }

    #[test]
    fn fbp_is_linear_before_clamp(seed in any::<u64>(), a in -2.0..2.0f64) {
        let geom = ConeBeamGeometry::standard(12, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let angles = [0.0, 1.0, 2.0];
        let x = forward_project(&random_volume(&geom.grid(), &mut rng), &geom, &angles).unwrap();
        let y = forward_project(&random_volume(&geom.grid(), &mut rng), &geom, &angles).unwrap();
        let mut z = x.clone();
        for (iz, iy) in z.images.iter_mut().zip(&y.images) {
            iz.data.iter_mut().zip(&iy.data).for_each(|(v, w)| *v = a * *v + w);
        }
        let cfg = FbpConfig::default();
        let (fx, fy, fz) = (fbp_unclamped(&x, &cfg).unwrap(), fbp_unclamped(&y, &cfg).unwrap(), fbp_unclamped(&z, &cfg).unwrap());
        for i in 0..fz.data.len() {
            prop_assert!((fz.data[i] - (a * fx.data[i] + fy.data[i])).abs() <= 1e-9 * (1.0 + fz.data[i].abs()));
        }
    }

    #[test]
    fn composition_nonnegative_and_bounded(seed in any::<u64>(), n in 1usize..20) {
        let grid = GridSpec::cube(12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cloud = random_cloud(n, &grid, &mut rng);
        let vol = compose_volume(&cloud, &grid, &ComposeConfig::default());
        let total: f64 = cloud.intensities().iter().sum();
        prop_assert!(vol.data.iter().all(|&v| v >= 0.0 && v <= total + 1e-12));
    }

    #[test]
    fn loss_zero_iff_equal(seed in any::<u64>(), alpha in 0.05..0.95f64, bump in 1e-6..1.0f64) {
        let geom = ConeBeamGeometry::standard(12, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let meas = forward_project(&random_volume(&geom.grid(), &mut rng), &geom, &[0.0, 1.5]).unwrap();
        let masks: Vec<Image> = meas.images.iter().map(|i| extract_centerline_mask(i, 0.1)).collect();
        let (l, _) = recon_loss(&meas, &meas, &masks, alpha).unwrap();
        prop_assert_eq!(l.total, 0.0);
        let mut pred = meas.clone();
        pred.images[1].data[17] += bump;
        let (l, _) = recon_loss(&pred, &meas, &masks, alpha).unwrap();
        prop_assert!(l.total > 0.0);
    }

    #[test]
    fn density_respects_cap_and_keeps_one(seed in any::<u64>(), n in 1usize..40, cap in 1usize..60, zeros in 0usize..40) {
        let grid = GridSpec::cube(16);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cloud = random_cloud(n, &grid, &mut rng);
        for a in cloud.raw_intensities.iter_mut().take(zeros) {
            *a = -60.0;
        }
        let grads: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let cfg = DensityControlConfig { max_gaussians: cap, ..Default::default() };
        let out = density_control_step(&cloud, &grads, &cfg);
        prop_assert!(out.cloud.len() <= cap.max(1));
        prop_assert!(!out.cloud.is_empty());
        prop_assert_eq!(out.cloud.len(), out.source.len());
        out.cloud.validate().unwrap();
    }
}
