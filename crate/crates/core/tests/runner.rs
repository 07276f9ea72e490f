use std::path::Path;

use omnivfi::dataset::synthetic::{write_toy_fixture, ClipSpec, Motion};
use omnivfi::dataset::{ingest, FlowSource, Layout, Setting, Triplet, TripletManifest};
use omnivfi::metrics::PSNR_CAP_DB;
use omnivfi::model::{Ablation, Checkpoint};
use omnivfi::runner::{ablate, evaluate, train, PredictionSource, TrainConfig, TrainOptions};
use omnivfi::Error;

fn fixture(dir: &Path) -> TripletManifest {
    let root = dir.join("frames");
    write_toy_fixture(&root).unwrap();
    let out = ingest(&root, &Layout::preset("synthetic").unwrap(), &FlowSource::Oracle).unwrap();
    assert!(out.errors.is_empty());
    out.train
}

/// Narrow network and a short run so each test stays in the seconds range.
fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 2,
        channels: vec![8, 8, 8, 8],
        ..TrainConfig::toy()
    }
}

fn opts(dir: &Path) -> TrainOptions {
    TrainOptions {
        out_dir: dir.to_path_buf(),
        ..TrainOptions::default()
    }
}

#[test]
fn resume_continues_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let m = fixture(tmp.path());
    let cfg = small_config();

    let full = train(&m, &cfg, &opts(&tmp.path().join("full"))).unwrap();
    assert_eq!(full.iterations, 6);
    assert_eq!(full.loss_history.len(), 6);

    let part_dir = tmp.path().join("part");
    let first = train(
        &m,
        &cfg,
        &TrainOptions {
            stop_after: Some(3),
            ..opts(&part_dir)
        },
    )
    .unwrap();
    assert_eq!(first.iterations, 3);
    let resumed = train(
        &m,
        &cfg,
        &TrainOptions {
            resume: Some(first.last_checkpoint.clone()),
            ..opts(&part_dir)
        },
    )
    .unwrap();
    let bits = |h: &[(u64, f64)]| h.iter().map(|(k, l)| (*k, l.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&resumed.loss_history), bits(&full.loss_history));

    let a = std::fs::read(&full.last_checkpoint).unwrap();
    let b = std::fs::read(&resumed.last_checkpoint).unwrap();
    assert!(a == b, "resumed checkpoint differs from the uninterrupted one");
}

#[test]
fn training_is_reproducible_and_records_config() {
    let tmp = tempfile::tempdir().unwrap();
    let m = fixture(tmp.path());
    let cfg = TrainConfig {
        epochs: 1,
        ..small_config()
    };
    let a = train(&m, &cfg, &opts(&tmp.path().join("a"))).unwrap();
    let b = train(&m, &cfg, &opts(&tmp.path().join("b"))).unwrap();
    assert_eq!(
        std::fs::read(&a.last_checkpoint).unwrap(),
        std::fs::read(&b.last_checkpoint).unwrap()
    );

    let ckpt = Checkpoint::load(&a.last_checkpoint).unwrap();
    assert_eq!(
        ckpt.meta().config_fingerprint.as_deref(),
        Some(cfg.fingerprint().as_str())
    );
    assert_eq!(ckpt.meta().train_config.as_deref(), Some(cfg.canonical().as_str()));
    assert_eq!(ckpt.meta().iteration, 2);
}

#[test]
fn resume_refuses_a_different_config() {
    let tmp = tempfile::tempdir().unwrap();
    let m = fixture(tmp.path());
    let cfg = TrainConfig {
        epochs: 1,
        ..small_config()
    };
    let first = train(&m, &cfg, &opts(tmp.path())).unwrap();
    let other = TrainConfig { seed: 7, ..cfg };
    let err = train(
        &m,
        &other,
        &TrainOptions {
            resume: Some(first.last_checkpoint),
            ..opts(tmp.path())
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::Checkpoint(_)), "{err}");
}

#[test]
fn inconsistent_samples_are_skipped() {
    let tmp = tempfile::tempdir().unwrap();
    let mut m = fixture(tmp.path());
    let odd = ClipSpec {
        name: "odd".into(),
        frames: 3,
        height: 32,
        width: 64,
        motion: Motion { dx: 0.0, dy: 1.0 },
        seed: 9,
    };
    let dir = odd.write(&tmp.path().join("frames")).unwrap();
    m.entries.push(Triplet {
        sample_id: "odd/0001".into(),
        clip: "odd".into(),
        i1: dir.join("0000.png"),
        ig: dir.join("0001.png"),
        i2: dir.join("0002.png"),
        motion_extent: Some(2.0),
        setting: Some(Setting::Middle),
    });
    m.entries.push(Triplet {
        sample_id: "gone/0001".into(),
        clip: "gone".into(),
        i1: tmp.path().join("nope1.png"),
        ig: tmp.path().join("nope2.png"),
        i2: tmp.path().join("nope3.png"),
        motion_extent: Some(2.0),
        setting: Some(Setting::Middle),
    });
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 6,
        ..small_config()
    };
    let out = train(&m, &cfg, &opts(tmp.path())).unwrap();
    assert_eq!(out.iterations, 1);
    assert_eq!(out.skipped, vec!["gone/0001".to_string(), "odd/0001".to_string()]);
}

#[test]
fn divergence_aborts_with_a_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let m = fixture(tmp.path());
    let cfg = TrainConfig {
        lr_init: 1e30,
        lr_final: 1e30,
        ..small_config()
    };
    let err = train(&m, &cfg, &opts(tmp.path())).unwrap_err();
    assert!(matches!(err, Error::Numeric(_)), "{err}");
    assert!(tmp.path().join("nan-snapshot.ckpt").is_file());
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("nan-snapshot.json")).unwrap()).unwrap();
    assert!(report["iteration"].as_u64().unwrap() >= 1);
    assert!(!report["samples"].as_array().unwrap().is_empty());
    Checkpoint::load(tmp.path().join("nan-snapshot.ckpt")).unwrap();
}

#[test]
fn validation_keeps_the_best_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let m = fixture(tmp.path());
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 4,
        validate_every: 1,
        ..small_config()
    };
    let out = train(
        &m,
        &cfg,
        &TrainOptions {
            validation: Some(m.clone()),
            ..opts(tmp.path())
        },
    )
    .unwrap();
    let best = out.best_checkpoint.expect("best checkpoint written");
    let ckpt = Checkpoint::load(best).unwrap();
    assert_eq!(ckpt.meta().best_ws_psnr, out.best_ws_psnr);
}

#[test]
fn both_off_checkpoint_records_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let m = fixture(tmp.path());
    let cfg = TrainConfig {
        epochs: 1,
        ablation: Ablation::BOTH_OFF,
        ..small_config()
    };
    let out = train(&m, &cfg, &opts(tmp.path())).unwrap();
    let ckpt = Checkpoint::load(out.last_checkpoint).unwrap();
    assert!(!ckpt.ablation().guard && !ckpt.ablation().ftb);
    assert!(ckpt.net_checked::<f32>(Ablation::BOTH_ON).is_err());
}

fn copy_ground_truth(m: &TripletManifest, dir: &Path) {
    for t in &m.entries {
        let p = dir.join(format!("{}.png", t.sample_id));
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::copy(&t.ig, p).unwrap();
    }
}

#[test]
fn ground_truth_predictions_hit_the_caps() {
    let tmp = tempfile::tempdir().unwrap();
    let m = fixture(tmp.path());
    let preds = tmp.path().join("preds");
    copy_ground_truth(&m, &preds);
    let r = evaluate(&m, &PredictionSource::Directory(preds)).unwrap();
    assert_eq!(r.settings.len(), 4);
    assert!(r.missing.is_empty());
    for s in r.settings.iter().chain([&r.overall]) {
        let mean = s.mean.unwrap();
        assert_eq!(
            (mean.psnr, mean.ssim, mean.ws_psnr, mean.ws_ssim),
            (PSNR_CAP_DB, 1.0, PSNR_CAP_DB, 1.0)
        );
    }
}

#[test]
fn report_blocks_follow_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let mut m = fixture(tmp.path());
    let preds = tmp.path().join("preds");
    copy_ground_truth(&m, &preds);
    m.entries.retain(|t| t.setting == Some(Setting::Hard));
    let r = evaluate(&m, &PredictionSource::Directory(preds)).unwrap();
    assert_eq!(r.settings.len(), 1);
    assert_eq!(r.settings[0].setting, Some(Setting::Hard));
}

#[test]
fn missing_predictions_are_flagged_and_excluded() {
    let tmp = tempfile::tempdir().unwrap();
    let m = fixture(tmp.path());
    let preds = tmp.path().join("preds");
    copy_ground_truth(&m, &preds);
    let gone = &m.entries[0];
    std::fs::remove_file(preds.join(format!("{}.png", gone.sample_id))).unwrap();
    let r = evaluate(&m, &PredictionSource::Directory(preds)).unwrap();
    assert_eq!(r.missing.len(), 1);
    assert_eq!(r.missing[0].sample_id, gone.sample_id);
    assert_eq!(r.rows.len(), m.len() - 1);
    let block = r.setting(gone.setting.unwrap()).unwrap();
    assert_eq!((block.samples, block.evaluated), (1, 0));
    assert!(block.mean.is_none());
    assert!(r
        .rows_csv()
        .unwrap()
        .contains(&format!("{},,,,,,,missing", gone.sample_id)));
}

#[test]
fn checkpoint_reports_are_deterministic_and_order_free() {
    let tmp = tempfile::tempdir().unwrap();
    let m = fixture(tmp.path());
    let cfg = TrainConfig {
        epochs: 1,
        ..small_config()
    };
    let out = train(&m, &cfg, &opts(tmp.path())).unwrap();
    let src = PredictionSource::Checkpoint(out.last_checkpoint);
    let a = evaluate(&m, &src).unwrap();
    let mut reversed = m.clone();
    reversed.entries.reverse();
    let b = evaluate(&reversed, &src).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.settings, b.settings);
    assert_eq!(a.overall, b.overall);
    assert_eq!(a.summary_csv().unwrap(), b.summary_csv().unwrap());
    assert_eq!(a.config_fingerprint.as_deref(), Some(cfg.fingerprint().as_str()));

    for s in &a.settings {
        let rows: Vec<_> = a.rows.iter().filter(|r| Some(r.setting) == s.setting).collect();
        let mean = rows.iter().map(|r| r.metrics.ws_psnr).sum::<f64>() / rows.len() as f64;
        assert!((mean - s.mean.unwrap().ws_psnr).abs() <= 1e-9);
    }

    a.write(&tmp.path().join("report"), "test").unwrap();
    for f in ["test.summary.csv", "test.samples.csv", "test.json"] {
        assert!(tmp.path().join("report").join(f).is_file());
    }
}

#[test]
fn ablation_matrix_keeps_going_after_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let m = fixture(tmp.path());
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 4,
        ..small_config()
    };
    // Unstratified test set: every evaluation fails, every variant still runs.
    let mut unlabeled = m.clone();
    for t in &mut unlabeled.entries {
        t.setting = None;
    }
    let out = ablate(&m, &unlabeled, &cfg, tmp.path()).unwrap();
    assert_eq!(out.rows.len(), 4);
    assert_eq!(out.failed().count(), 4);
    for (row, expected) in out.rows.iter().zip(Ablation::ALL) {
        assert_eq!(row.ablation, expected);
        assert!(row.error.as_ref().unwrap().contains("stratified"));
        let ckpt = Checkpoint::load(tmp.path().join(expected.label()).join("last.ckpt")).unwrap();
        assert_eq!(ckpt.ablation(), expected);
    }

    let ok = ablate(&m, &m, &cfg, &tmp.path().join("ok")).unwrap();
    assert_eq!(ok.failed().count(), 0);
    let labels: Vec<&str> = ok.rows.iter().map(|r| r.ablation.label()).collect();
    assert_eq!(labels, ["both-off", "guard-only", "ftb-only", "both-on"]);
    let fps: std::collections::HashSet<_> = ok.rows.iter().map(|r| r.config_fingerprint.clone()).collect();
    assert_eq!(fps.len(), 4);
    assert_eq!(ok.base_fingerprint, cfg.base_fingerprint());
    let n: Vec<usize> = ok.rows.iter().map(|r| r.parameter_count).collect();
    assert!(n[0] < n[1] && n[0] < n[2] && n[1] < n[3] && n[2] < n[3]);
    ok.write(&tmp.path().join("ok")).unwrap();
    let csv = std::fs::read_to_string(tmp.path().join("ok").join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}
