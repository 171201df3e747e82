use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn saunet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saunet")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = saunet(args);
    assert!(out.status.success(), "saunet {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn reference_counts_verify() {
    let out = ok(&["count-params", "--verify-table4"]);
    assert_eq!(out.lines().filter(|l| l.starts_with("ok")).count(), 5);
    let report: Value = serde_json::from_str(&ok(&["count-params", "--variant", "unet18", "--json"])).unwrap();
    assert_eq!(report["total"], 535_793);
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    // neither data source
    assert_eq!(saunet(&["train", "--epochs", "1", "--out-dir", d]).status.code(), Some(2));
    // even DropBlock block size
    let bad = ["train", "--synthetic", "--block-size", "4", "--epochs", "1", "--out-dir", d];
    assert_eq!(saunet(&bad).status.code(), Some(2));
    // manifest pointing at a missing file
    let manifest = dir.path().join("m.jsonl");
    std::fs::write(
        &manifest,
        "{\"name\":\"x\",\"pad_target\":[16,16]}\n{\"id\":\"a\",\"image\":\"nope.png\",\"mask\":\"nope.png\",\"split\":\"train\"}\n",
    )
    .unwrap();
    let code = saunet(&["train", "--manifest", manifest.to_str().unwrap(), "--out-dir", d]).status.code();
    assert_eq!(code, Some(3));
    // corrupted checkpoint
    let ckpt = dir.path().join("bad.ckpt");
    std::fs::write(&ckpt, b"SAUN not really").unwrap();
    let code = saunet(&["eval", "--synthetic", "--checkpoint", ckpt.to_str().unwrap(), "--out-dir", d]).status.code();
    assert_ne!(code, Some(0));
}

#[test]
fn train_then_eval_on_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let common = ["--synthetic", "--synthetic-train", "8", "--synthetic-val", "2", "--synthetic-test", "3"];
    let mut args = vec!["train", "--variant", "sa-unet", "--base-channels", "4", "--block-size", "3"];
    args.extend(common);
    args.extend(["--epochs", "2", "--batch-size", "4", "--out-dir", run.to_str().unwrap()]);
    ok(&args);
    for f in ["config.json", "curve.jsonl", "best.ckpt", "final.ckpt", "summary.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let curve = std::fs::read_to_string(run.join("curve.jsonl")).unwrap();
    let records: Vec<Value> = curve.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 2);
    assert!(records[1]["val_loss"].is_f64());
    assert_eq!(json(&run.join("config.json"))["training"]["phase_boundary"], 2);

    let eval = dir.path().join("eval");
    let ckpt = run.join("final.ckpt");
    let mut args = vec!["eval", "--checkpoint", ckpt.to_str().unwrap(), "--variant", "sa-unet"];
    args.extend(common);
    args.extend(["--out-dir", eval.to_str().unwrap()]);
    let out = ok(&args);
    assert!(out.contains("AUC") && out.contains("MCC"));
    let report = json(&eval.join("report.json"));
    assert_eq!(report["images"], 3);
    assert!(report["metrics"]["auc"].is_f64());
    assert_eq!(std::fs::read_dir(eval.join("overlays")).unwrap().count(), 3);

    // wrong variant is a configuration error
    let mut args = vec!["eval", "--checkpoint", ckpt.to_str().unwrap(), "--variant", "unet18"];
    args.extend(common);
    args.extend(["--out-dir", eval.to_str().unwrap()]);
    assert_eq!(saunet(&args).status.code(), Some(2));
}

#[test]
fn synthetic_export_round_trips_through_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth-data", "--train", "6", "--test", "2", "--size", "32", "--seed", "3", "--out-dir", data.to_str().unwrap()]);
    let manifest = data.join("manifest.jsonl");
    let text = std::fs::read_to_string(&manifest).unwrap();
    assert_eq!(text.lines().count(), 1 + 6 + 2);

    let run = dir.path().join("run");
    ok(&[
        "train", "--manifest", manifest.to_str().unwrap(), "--variant", "unet18", "--base-channels", "4",
        "--augment-target", "20", "--val-count", "4", "--epochs", "1", "--batch-size", "4", "--out-dir",
        run.to_str().unwrap(),
    ]);
    let ckpt = run.join("final.ckpt");
    let preds = dir.path().join("preds");
    let img = data.join("images").read_dir().unwrap().next().unwrap().unwrap().path();
    ok(&["predict", "--checkpoint", ckpt.to_str().unwrap(), "--input", img.to_str().unwrap(), "--out-dir", preds.to_str().unwrap()]);
    let stem = img.file_stem().unwrap().to_str().unwrap();
    let (w, h) = image::image_dimensions(preds.join(format!("{stem}_mask.png"))).unwrap();
    assert_eq!((w, h), (32, 32));
}
