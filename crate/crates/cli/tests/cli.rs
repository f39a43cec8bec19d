mod common;

use std::fs;
use std::path::Path;

use serde_json::Value;
use tempfile::tempdir;

use common::{path, tils, write_background_slide, write_scoring_slide};
use tils_cli::formats::write_json;
use tils_core::PipelineConfig;
use tils_testkit::fixtures::ScoringSlide;

fn stdout_json(out: &std::process::Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = PipelineConfig::default();
    cfg.ensemble.seg_members = 1;
    cfg.ensemble.det_members = 1;
    let p = dir.join("config.json");
    write_json(&cfg, &p).unwrap();
    p
}

#[test]
fn usage_errors_exit_two() {
    let out = tils(&["score", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = tils(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = tils(&["score", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failures_exit_one_with_one_line() {
    let dir = tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = tils(&["score", "--manifest", path(&missing), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: ") && err.contains("nope.json"), "{err}");

    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"seg": {"patchsize": 3}}"#).unwrap();
    let m = write_background_slide(dir.path(), 300);
    let out = tils(&["score", "--manifest", path(&m), "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8(out.stderr).unwrap().lines().count(), 1);
}

#[test]
fn background_slide_scores_zero() {
    let dir = tempdir().unwrap();
    let m = write_background_slide(&dir.path().join("slide"), 600);
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("out");
    let v = stdout_json(&tils(&["score", "--manifest", path(&m), "--config", path(&cfg), "--out", path(&out_dir)]));
    assert_eq!(v["n_tils"], 0);
    assert_eq!(v["a_tas_um2"], 0.0);
    assert_eq!(v["tils_score"], 0);
    for f in ["tumour.png", "stroma.png", "bulk.png", "tas.png", "detections.json", "result.json"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
}

#[test]
fn dice_of_identical_masks_is_one() {
    let dir = tempdir().unwrap();
    let fx = ScoringSlide::new(10);
    for (name, sub) in [("a", "pred"), ("b", "pred"), ("a", "gt"), ("b", "gt")] {
        let d = dir.path().join(sub).join(name);
        tils_cli::formats::write_mask_png(&fx.tumour, &d.join("tumour.png")).unwrap();
        tils_cli::formats::write_mask_png(&fx.stroma, &d.join("stroma.png")).unwrap();
    }
    let out_dir = dir.path().join("out");
    let v = stdout_json(&tils(&[
        "evaluate", "--task", "dice",
        "--pred", path(&dir.path().join("pred")),
        "--gt", path(&dir.path().join("gt")),
        "--out", path(&out_dir),
    ]));
    assert_eq!(v["aggregate"]["mean"], 1.0);
    assert_eq!(v["slides"].as_object().unwrap().len(), 2);
    let saved: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("evaluation.json")).unwrap()).unwrap();
    assert_eq!(saved, v);
}

#[test]
fn staged_commands_match_score_and_are_idempotent() {
    let dir = tempdir().unwrap();
    let fx = ScoringSlide::new(120);
    let m = write_scoring_slide(&dir.path().join("slide"), &fx);
    let cfg = small_config(dir.path());
    let (m, cfg) = (path(&m).to_string(), path(&cfg).to_string());

    let full = dir.path().join("full");
    let v = stdout_json(&tils(&["score", "--manifest", &m, "--config", &cfg, "--out", path(&full)]));
    assert_eq!(v["n_tils"], 120);
    assert_eq!(v["a_tas_um2"], 1e6);
    let files = ["tumour.png", "stroma.png", "bulk.png", "tas.png", "detections.json", "result.json"];
    let snapshot = |d: &Path| -> Vec<Vec<u8>> { files.iter().map(|f| fs::read(d.join(f)).unwrap()).collect() };
    let first = snapshot(&full);
    stdout_json(&tils(&["score", "--manifest", &m, "--config", &cfg, "--out", path(&full)]));
    assert_eq!(snapshot(&full), first, "score is not idempotent");

    // segment → bulk → detect over the TAS reproduces the same files
    let staged = dir.path().join("staged");
    let s = path(&staged).to_string();
    for args in [
        vec!["segment", "--manifest", &m, "--config", &cfg, "--out", &s],
        vec!["bulk", "--manifest", &m, "--config", &cfg, "--out", &s],
    ] {
        stdout_or_fail(&tils(&args));
    }
    let tas = staged.join("tas.png");
    stdout_or_fail(&tils(&["detect", "--manifest", &m, "--config", &cfg, "--out", &s, "--roi", path(&tas)]));
    for f in &files[..5] {
        assert_eq!(fs::read(staged.join(f)).unwrap(), fs::read(full.join(f)).unwrap(), "{f}");
    }

    // render from saved outputs equals render with a fresh pipeline run
    let r1 = dir.path().join("r1");
    let r2 = dir.path().join("r2");
    stdout_or_fail(&tils(&["render", "--manifest", &m, "--config", &cfg, "--out", path(&r1), "--from", path(&full)]));
    stdout_or_fail(&tils(&["render", "--manifest", &m, "--config", &cfg, "--out", path(&r2)]));
    assert_eq!(fs::read(r1.join("overlay.png")).unwrap(), fs::read(r2.join("overlay.png")).unwrap());

    // detections against the planted points: every TIL in the TAS is found
    let gt = dir.path().join("gt");
    fs::create_dir_all(&gt).unwrap();
    fs::copy(dir.path().join("slide/gt.json"), gt.join("detections.json")).unwrap();
    let ev = stdout_json(&tils(&[
        "evaluate", "--task", "detection", "--pred", path(&full), "--gt", path(&gt),
        "--manifest", &m, "--out", path(&dir.path().join("ev")),
    ]));
    let slide = &ev["slides"]["gt"];
    assert_eq!(slide["fp"], 0);
    assert!(slide["tp"].as_u64().unwrap() >= 120);
    assert_eq!(slide["area_mm2"], 2.56);
}

fn stdout_or_fail(out: &std::process::Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn tils_evaluation_reports_correlation() {
    let dir = tempdir().unwrap();
    for (i, (p, g)) in [(10, 12), (20, 19), (35, 40), (5, 3)].iter().enumerate() {
        let name = format!("s{i}");
        write_json(&serde_json::json!({"tils_score": p}), &dir.path().join("pred").join(&name).join("result.json")).unwrap();
        write_json(&serde_json::json!({"tils_score": g}), &dir.path().join("gt").join(&name).join("result.json")).unwrap();
    }
    let v = stdout_json(&tils(&[
        "evaluate", "--task", "tils",
        "--pred", path(&dir.path().join("pred")),
        "--gt", path(&dir.path().join("gt")),
        "--out", path(&dir.path().join("out")),
    ]));
    let xs = [10.0, 20.0, 35.0, 5.0];
    let ys = [12.0, 19.0, 40.0, 3.0];
    let want: f64 = tils_core::pearson(&xs, &ys).unwrap();
    assert_eq!(v["aggregate"]["pearson"].as_f64().unwrap(), want);
    assert_eq!(v["aggregate"]["mae"], 2.5);
}
