use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vesselgs_core::geometry::{GridSpec, Vec3};
use vesselgs_core::metrics::PointCloud;
use vesselgs_core::recon::{init_from_pointcloud, InitConfig};

#[test]
fn thousand_points_initialize_valid_cloud() {
    let grid = GridSpec::cube(128);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // a 32x32 predictor grid: 1024 points, some slightly outside the volume
    let pts = PointCloud::new(
        (0..1024)
            .map(|_| Vec3::from_fn(|_, _| rng.gen_range(-1.05..1.05)))
            .collect(),
    );
    let (cloud, clipped) = init_from_pointcloud(&pts, &grid, &InitConfig::default(), 1.0).unwrap();
    assert_eq!(cloud.len(), 1024);
    cloud.validate().unwrap();
    let expected_clipped = pts.points.iter().filter(|p| !grid.contains(p)).count();
    assert_eq!(clipped, expected_clipped);
    let sigma = 1.5 * grid.voxel_size;
    for g in cloud.iter() {
        assert!(grid.contains(&g.center) || g.center.iter().any(|c| c.abs() == 1.0));
        assert!(g.log_scale.iter().all(|s| (s.exp() - sigma).abs() < 1e-12));
        assert_eq!(g.rotation, [1.0, 0.0, 0.0, 0.0]);
        assert!((g.intensity() - 0.1).abs() < 1e-12);
    }
}
