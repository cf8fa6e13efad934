mod common;

use common::{files, simulate, small_config, with_schedule};
use vesselgs::io::{read_stack, read_volume, PointCloudFile};
use vesselgs::simulate::read_manifest;
use vesselgs::{cmd_simulate, CliError};

#[test]
fn one_case_with_two_views() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with_schedule(small_config(), 2);
    let data = simulate(&cfg, tmp.path());
    let manifest = read_manifest(&data).unwrap();
    assert_eq!(manifest.len(), 1);
    let entry = &manifest[0];
    assert_eq!((entry.case_id, entry.seed, entry.views), (0, 0, 2));
    assert!(entry.vessel_points > 0);

    let case = data.join(&entry.dir);
    let proj = read_stack(&case.join("projections.raw"), "projection").unwrap();
    assert_eq!(proj.images.len(), 2);
    assert!((proj.scale - entry.projection_scale).abs() <= 1e-9 * entry.projection_scale);
    let peak = proj
        .images
        .iter()
        .flat_map(|i| i.data.iter())
        .copied()
        .fold(0.0, f64::max);
    assert!(
        (peak - proj.scale).abs() <= 1e-6 * proj.scale,
        "stored stack is scaled back to physical units"
    );
    assert_eq!(read_stack(&case.join("depth.raw"), "depth").unwrap().images.len(), 2);
    assert_eq!(read_stack(&case.join("mask.raw"), "mask").unwrap().images.len(), 2);

    let (vol, _) = read_volume(&case.join("volume.raw")).unwrap();
    assert_eq!(vol.spec.shape, [32, 32, 32]);
    let occupied = vol.data.iter().filter(|&&v| v > 0.0).count();
    let points = PointCloudFile::read(&case.join("points.gcpc")).unwrap();
    assert_eq!(points.count(), occupied);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = with_schedule(small_config(), 4);
    cfg.cases = 2;
    let a = cmd_simulate(&cfg, &tmp.path().join("a")).unwrap();
    let b = cmd_simulate(&cfg, &tmp.path().join("b")).unwrap();
    let names = files(&a);
    assert_eq!(names, files(&b));
    assert!(names.len() > 10);
    for name in names {
        assert_eq!(
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(b.join(&name)).unwrap(),
            "{}",
            name.display()
        );
    }
}

#[test]
fn different_seeds_give_different_phantoms() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with_schedule(small_config(), 2);
    let a = cmd_simulate(&cfg, &tmp.path().join("a")).unwrap();
    let mut other = cfg.clone();
    other.seed = 17;
    let b = cmd_simulate(&other, &tmp.path().join("b")).unwrap();
    let vol = |d: &std::path::Path| std::fs::read(d.join("case_0000/volume.raw")).unwrap();
    assert_ne!(vol(&a), vol(&b));
}

#[test]
fn refuses_a_non_empty_target_and_leaves_it_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let target = tmp.path().join("data");
    std::fs::create_dir(&target).unwrap();
    std::fs::write(target.join("keep.txt"), "mine").unwrap();
    let err = cmd_simulate(&with_schedule(small_config(), 2), &target).unwrap_err();
    assert!(matches!(err, CliError::Usage(_)), "{err}");
    assert_eq!(files(&target), vec![std::path::PathBuf::from("keep.txt")]);
    assert_eq!(
        std::fs::read_dir(tmp.path()).unwrap().count(),
        1,
        "no staging directory left behind"
    );
}
