use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use xinet_core::data::{load_manifest, load_waveform, save_waveform, MANIFEST_FILE};
use xinet_core::metrics::{gap_segment, mae, rmse};

fn xinet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xinet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = xinet(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &str = r#"{
  "model": {"input_length": 256, "patch": 4, "embed_dim": 8, "stage_depths": [1, 1],
            "bottleneck_depth": 1, "window": 4, "head_dim": 8},
  "train": {"epochs": 2, "batch_size": 4}
}"#;

fn gen(dir: &Path, count: usize) -> PathBuf {
    let data = dir.join("data");
    ok(&["gen", "--count", &count.to_string(), "--length", "256", "--seed", "3", "--out", s(&data)]);
    data
}

fn train_tiny(dir: &Path, data: &Path) -> PathBuf {
    let cfg = dir.join("tiny.json");
    fs::write(&cfg, TINY).unwrap();
    let ckpt = dir.join("model.ckpt");
    ok(&["train", "--data", s(data), "--config", s(&cfg), "--out-ckpt", s(&ckpt), "--quiet"]);
    ckpt
}

#[test]
fn gen_writes_split_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), 10);
    let m = load_manifest(&data.join(MANIFEST_FILE)).unwrap();
    assert_eq!((m.files.len(), m.split.train.len(), m.split.val.len()), (10, 8, 2));

    let again = dir.path().join("again");
    ok(&["gen", "--count", "10", "--length", "256", "--seed", "3", "--out", s(&again)]);
    for f in m.files.iter().map(String::as_str).chain([MANIFEST_FILE]) {
        assert_eq!(fs::read(data.join(f)).unwrap(), fs::read(again.join(f)).unwrap());
    }
}

#[test]
fn incompatible_length_warns() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["gen", "--count", "2", "--length", "1000", "--out", s(&dir.path().join("d"))]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("warning") && err.contains("not a multiple of"), "{err}");
}

#[test]
fn failures_exit_with_class_codes() {
    let dir = tempfile::tempdir().unwrap();
    let usage = xinet(&["gen", "--bogus"]);
    assert_eq!(usage.status.code(), Some(2));
    let missing = xinet(&["eval", "--data", s(&dir.path().join("nowhere")), "--baseline", "zero-fill"]);
    assert_eq!(missing.status.code(), Some(3));
    let err = String::from_utf8_lossy(&missing.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[data]: "), "{err}");
    let neither = xinet(&["eval", "--data", "x"]);
    assert_eq!(neither.status.code(), Some(2));
}

#[test]
fn baseline_eval_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), 10);
    let (r1, r2) = (dir.path().join("r1.json"), dir.path().join("r2.json"));
    let out = ok(&["eval", "--data", s(&data), "--baseline", "zero-fill", "--report", s(&r1)]);
    ok(&["eval", "--data", s(&data), "--baseline", "zero-fill", "--report", s(&r2)]);
    assert_eq!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap());
    let table = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = table.lines().skip(1).take(4).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(rows, ["DFD", "MRD", "MAE", "RMSE"]);
    let report: Value = serde_json::from_slice(&fs::read(&r1).unwrap()).unwrap();
    assert_eq!(report["reconstructor"], "zero_fill");
    assert_eq!(report["samples"].as_array().unwrap().len(), 2);
}

#[test]
fn untrained_model_evaluates_and_variant_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), 10);
    let cfg = dir.path().join("tiny.json");
    fs::write(&cfg, TINY.replace("\"epochs\": 2", "\"epochs\": 1")).unwrap();
    let ckpt = dir.path().join("m.ckpt");
    ok(&["train", "--data", s(&data), "--config", s(&cfg), "--out-ckpt", s(&ckpt), "--quiet"]);
    let history = fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert!(history.starts_with("epoch,lr,train_loss,val_gap_mae\n"));
    assert_eq!(history.lines().count(), 2);

    let report = dir.path().join("r.json");
    ok(&["eval", "--data", s(&data), "--ckpt", s(&ckpt), "--report", s(&report)]);
    let r: Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    for k in ["dfd_mean", "mrd", "mae_mean", "rmse_mean"] {
        assert!(r[k].as_f64().unwrap().is_finite(), "{k}");
    }
    let wrong = xinet(&["eval", "--data", s(&data), "--ckpt", s(&ckpt), "--variant", "time-only"]);
    assert_eq!(wrong.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&wrong.stderr).contains("variant mismatch"));
}

#[test]
fn reconstruct_agrees_with_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), 5);
    let ckpt = train_tiny(dir.path(), &data);
    let m = load_manifest(&data.join(MANIFEST_FILE)).unwrap();
    let idx = m.split.val[0];
    let gap = m.gaps[idx];
    let target = load_waveform(&data.join(&m.files[idx])).unwrap();
    let mut gapped = target.clone();
    gapped[gap.start..gap.end()].iter_mut().for_each(|v| *v = 0.0);
    let gapped_path = dir.path().join("gapped.txt");
    save_waveform(&gapped_path, &gapped).unwrap();

    let recon_path = dir.path().join("recon.txt");
    ok(&["reconstruct", "--ckpt", s(&ckpt), "--in", s(&gapped_path), "--out", s(&recon_path)]);
    let recon = load_waveform(&recon_path).unwrap();
    for i in (0..recon.len()).filter(|&i| !gap.contains(i)) {
        assert_eq!(recon[i], gapped[i]);
    }

    let report = dir.path().join("r.json");
    ok(&["eval", "--data", s(&data), "--ckpt", s(&ckpt), "--report", s(&report)]);
    let r: Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    let first = &r["samples"][0];
    let p = gap_segment(&recon, gap, 0);
    let t = gap_segment(&target, gap, 0);
    assert_eq!(first["mae"].as_f64().unwrap(), mae(p, t).unwrap());
    assert_eq!(first["rmse"].as_f64().unwrap(), rmse(p, t).unwrap());

    let explicit = dir.path().join("recon2.txt");
    let flag = format!("{}:{}", gap.start, gap.len);
    ok(&["reconstruct", "--ckpt", s(&ckpt), "--in", s(&gapped_path), "--out", s(&explicit), "--gap", &flag]);
    assert_eq!(fs::read(&explicit).unwrap(), fs::read(&recon_path).unwrap());

    let short = dir.path().join("short.txt");
    save_waveform(&short, &gapped[..100]).unwrap();
    let bad = xinet(&["reconstruct", "--ckpt", s(&ckpt), "--in", s(&short), "--out", s(&explicit)]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn plot_of_identical_traces_has_identical_panels() {
    let dir = tempfile::tempdir().unwrap();
    let trace: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin()).collect();
    let p = dir.path().join("t.txt");
    save_waveform(&p, &trace).unwrap();
    let svg = dir.path().join("fig.svg");
    ok(&["plot", "--target", s(&p), "--gapped", s(&p), "--recon", s(&p), "--out", s(&svg)]);
    let text = fs::read_to_string(&svg).unwrap();
    let doc = roxmltree::Document::parse(&text).expect("well-formed SVG");
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let lines: Vec<&str> = doc
        .descendants()
        .filter(|n| n.has_tag_name("polyline"))
        .map(|n| n.attribute("points").unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| *l == lines[0]));
    let csv = fs::read_to_string(dir.path().join("fig.csv")).unwrap();
    assert!(csv.starts_with("index,time_s,original,gapped,reconstructed\n"));
    assert_eq!(csv.lines().count(), 201);
}
