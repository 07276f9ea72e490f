use std::path::Path;
use std::process::{Command, Output};

fn omnivfi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omnivfi"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = omnivfi(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn toy_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, run, rep) = (tmp.path().join("data"), tmp.path().join("run"), tmp.path().join("rep"));
    let cmap = tmp.path().join("c.f32");
    let out = ok(&[
        "prepare",
        "--root",
        s(&data),
        "--layout",
        "synthetic",
        "--flow-provider",
        "oracle",
        "--synthesize-toy",
        "--export-condition-map",
        s(&cmap),
    ]);
    assert!(out.contains("easy=1 middle=1 hard=1 extreme=1"), "{out}");
    assert_eq!(std::fs::metadata(&cmap).unwrap().len(), 64 * 128 * 4);

    let manifest = data.join("manifest.train.jsonl");
    assert!(ok(&["stratify", "--manifest", s(&manifest)]).contains("total=4"));

    let small = ["--toy", "--set", "train.epochs=1", "--set", "model.channels=8,8,8,8"];
    let mut args = vec!["train", "--manifest", s(&manifest), "--out", s(&run)];
    args.extend(small);
    ok(&args);
    let ckpt = run.join("last.ckpt");
    assert!(ckpt.is_file());

    let summary = ok(&["eval", "--manifest", s(&manifest), "--ckpt", s(&ckpt), "--out", s(&rep)]);
    assert!(summary.starts_with("setting,samples,evaluated"), "{summary}");
    for f in ["report.json", "report.summary.csv", "report.samples.csv"] {
        assert!(rep.join(f).is_file(), "{f}");
    }

    let mid = tmp.path().join("mid.png");
    let (a, b) = (data.join("toy0/0000.png"), data.join("toy0/0002.png"));
    ok(&[
        "interpolate",
        "--in1",
        s(&a),
        "--in2",
        s(&b),
        "--ckpt",
        s(&ckpt),
        "--out",
        s(&mid),
    ]);
    assert!(mid.is_file());

    let ab = tmp.path().join("ab");
    let mut args = vec![
        "ablate",
        "--train-manifest",
        s(&manifest),
        "--test-manifest",
        s(&manifest),
        "--out",
        s(&ab),
    ];
    args.extend(small);
    let table = ok(&args);
    assert_eq!(table.lines().count(), 5, "{table}");
    assert!(ab.join("ablation.csv").is_file());
}

#[test]
fn bad_input_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.jsonl");
    assert!(!omnivfi(&["stratify", "--manifest", s(&missing)]).status.success());
    let out = omnivfi(&[
        "train",
        "--set",
        "bogus.key=1",
        "--manifest",
        s(&missing),
        "--out",
        s(tmp.path()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus.key"));
    assert!(!omnivfi(&["eval", "--manifest", s(&missing), "--out", s(tmp.path())])
        .status
        .success());
}
