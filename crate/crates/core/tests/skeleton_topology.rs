use vesselgs_core::geometry::GridSpec;
use vesselgs_core::metrics::{count_components_26, has_full_2x2x2_block, skeletonize3d, BinaryVolume};
use vesselgs_core::phantom::{generate_tree, voxelize_binary, TreeParams};

#[test]
fn component_count_preserved_on_tree_phantoms() {
    let grid = GridSpec::cube(64);
    let params = TreeParams {
        root_radius: 0.06,
        ..TreeParams::default()
    };
    for seed in 0..50 {
        let tree = generate_tree(seed, &params).unwrap();
        let vol = voxelize_binary(&tree, &grid);
        let bin = BinaryVolume::threshold(grid.shape, &vol.data, 0.5).unwrap();
        let skel = skeletonize3d(&bin);
        assert!(bin.count() > 100, "seed {seed}: {} voxels", bin.count());
        assert_eq!(count_components_26(&skel), count_components_26(&bin), "seed {seed}");
        assert!(!has_full_2x2x2_block(&skel), "seed {seed}");
        assert!(skel.data.iter().zip(&bin.data).all(|(s, b)| !s || *b), "seed {seed}");
        assert_eq!(skeletonize3d(&skel), skel, "seed {seed}");
    }
}
