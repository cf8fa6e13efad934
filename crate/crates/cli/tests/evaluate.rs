mod common;

use common::{simulate, small_config, with_schedule};
use vesselgs::evaluate::{read_metrics, METRICS_FILE};
use vesselgs::{cmd_evaluate, cmd_reconstruct, cmd_report, InitSource};

#[test]
fn ground_truth_as_prediction_scores_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with_schedule(small_config(), 2);
    let data = simulate(&cfg, tmp.path());
    let results = tmp.path().join("res");
    let case = results.join("views_02/case_0000");
    std::fs::create_dir_all(&case).unwrap();
    for name in ["volume.raw", "volume.hdr"] {
        std::fs::copy(data.join("case_0000").join(name), case.join(name)).unwrap();
    }
    let rows = cmd_evaluate(&cfg, &results, &data, None, &results).unwrap();
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert_eq!((r.method.as_str(), r.views, r.flag.as_str()), ("3dgr", 2, "ok"));
    assert_eq!(r.dsc_vol, 100.0);
    assert!((r.ssim_vol - 100.0).abs() < 1e-9);
    assert_eq!(r.dsc_proj, 100.0);
    assert_eq!(r.psnr_proj, f64::INFINITY);
    assert_eq!(read_metrics(&results.join(METRICS_FILE)).unwrap(), rows);
}

#[test]
fn view_sweep_produces_every_group_and_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.views = vec![2, 4, 8, 16];
    cfg.recon.optimizer.iterations = 3;
    let data = simulate(&cfg, tmp.path());
    let results = cmd_reconstruct(&cfg, &data, &InitSource::Fbp, &tmp.path().join("res")).unwrap();
    let rows = cmd_evaluate(&cfg, &results, &data, None, &results).unwrap();
    assert_eq!(rows.len(), 8);
    for views in [2, 4, 8, 16] {
        for method in ["fbp", "3dgr-fbp"] {
            let r = rows.iter().find(|r| r.views == views && r.method == method);
            let r = r.unwrap_or_else(|| panic!("missing {method} at {views} views"));
            assert!((0.0..=100.0).contains(&r.dsc_vol) && (0.0..=100.0).contains(&r.dsc_proj));
            assert!((-100.0..=100.0).contains(&r.ssim_vol));
            assert_eq!(r.flag, "ok");
        }
    }
    for name in ["summary.csv", "dsc_vol_vs_views.svg", "metrics_by_method.svg"] {
        assert!(results.join(name).is_file(), "{name} missing");
    }
    let report = cmd_report(&cfg, &results).unwrap();
    let text = std::fs::read_to_string(report).unwrap();
    assert!(text.contains("| 16 | 3dgr-fbp |"));
    assert!(text.contains("dilated by 3"));
}

#[test]
fn held_out_angle_on_a_training_view_is_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with_schedule(small_config(), 2);
    let data = simulate(&cfg, tmp.path());
    let results = cmd_reconstruct(&cfg, &data, &InitSource::Fbp, &tmp.path().join("res")).unwrap();
    let rows = cmd_evaluate(
        &cfg,
        &results,
        &data,
        Some(&[std::f64::consts::FRAC_PI_2]),
        &tmp.path().join("m"),
    )
    .unwrap();
    assert!(rows.iter().all(|r| r.flag == "angle_collision"));
}
