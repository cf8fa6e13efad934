mod common;

use common::{files, simulate, small_config, with_schedule};
use vesselgs::io::{read_volume, PointCloudFile};
use vesselgs::reconstruct::TRACE_HEADER;
use vesselgs::{cmd_reconstruct, CliError, InitSource};
use vesselgs_core::metrics::PointCloud;

#[test]
fn fbp_initialized_smoke_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with_schedule(small_config(), 2);
    let data = simulate(&cfg, tmp.path());
    let out = cmd_reconstruct(&cfg, &data, &InitSource::Fbp, &tmp.path().join("res")).unwrap();
    let case = out.join("views_02/case_0000");
    for name in [
        "fbp.raw",
        "fbp.hdr",
        "volume.raw",
        "volume.hdr",
        "init.gcpc",
        "cloud.gcpc",
        "trace.csv",
    ] {
        assert!(case.join(name).is_file(), "{name} missing");
    }
    assert!(out.join("config.toml").is_file() && out.join("run.toml").is_file());

    let (vol, hdr) = read_volume(&case.join("volume.raw")).unwrap();
    assert_eq!(hdr.get("method"), Some("3dgr-fbp"));
    assert!(vol.data.iter().all(|v| v.is_finite() && *v >= 0.0));

    let trace = std::fs::read_to_string(case.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some(TRACE_HEADER));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), cfg.recon.optimizer.iterations + 1);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0] as usize, i);
        assert!(r[1..4].iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!(r[4] >= 1.0);
    }

    let cloud = PointCloudFile::read(&case.join("cloud.gcpc")).unwrap();
    assert_eq!(cloud.columns.len(), 11);
    assert_eq!(cloud.count(), *rows.last().unwrap().last().unwrap() as usize);
}

#[test]
fn reconstruction_trace_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = with_schedule(small_config(), 4);
    cfg.views = vec![4];
    cfg.recon.optimizer.views_per_iteration = 2;
    cfg.recon.seed = 5;
    let data = simulate(&cfg, tmp.path());
    let run = |name: &str| {
        let out = cmd_reconstruct(&cfg, &data, &InitSource::Fbp, &tmp.path().join(name)).unwrap();
        std::fs::read(out.join("views_04/case_0000/trace.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn ground_truth_and_file_initializations() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with_schedule(small_config(), 2);
    let data = simulate(&cfg, tmp.path());
    let gt = cmd_reconstruct(&cfg, &data, &InitSource::GroundTruth, &tmp.path().join("gt")).unwrap();
    let (_, hdr) = read_volume(&gt.join("views_02/case_0000/volume.raw")).unwrap();
    assert_eq!(hdr.get("method"), Some("3dgr-gt"));

    let file = tmp.path().join("init.gcpc");
    std::fs::copy(data.join("case_0000/points.gcpc"), &file).unwrap();
    let out = cmd_reconstruct(&cfg, &data, &InitSource::File(file), &tmp.path().join("file")).unwrap();
    let (_, hdr) = read_volume(&out.join("views_02/case_0000/volume.raw")).unwrap();
    assert_eq!(hdr.get("method"), Some("3dgr-file"));
    let a = std::fs::read(gt.join("views_02/case_0000/trace.csv")).unwrap();
    let b = std::fs::read(out.join("views_02/case_0000/trace.csv")).unwrap();
    assert_eq!(a, b, "same points give the same run whatever the source");
}

#[test]
fn empty_initialization_file_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with_schedule(small_config(), 2);
    let data = simulate(&cfg, tmp.path());
    let file = tmp.path().join("empty.gcpc");
    PointCloudFile::from_points(&PointCloud::default())
        .write(&file)
        .unwrap();
    let target = tmp.path().join("res");
    let err = cmd_reconstruct(&cfg, &data, &InitSource::File(file), &target).unwrap_err();
    assert!(matches!(err, CliError::Data(_)), "{err}");
    assert!(!target.exists());
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn missing_training_views_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = with_schedule(small_config(), 2);
    let data = simulate(&cfg, tmp.path());
    cfg.views = vec![4];
    let target = tmp.path().join("res");
    let err = cmd_reconstruct(&cfg, &data, &InitSource::Fbp, &target).unwrap_err();
    assert!(matches!(err, CliError::Data(_)), "{err}");
    assert!(!target.exists());
    assert_eq!(files(tmp.path()).iter().filter(|p| p.starts_with("res")).count(), 0);
}
