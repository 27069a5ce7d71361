use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hga(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hga")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = hga(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(out: &Path) {
    let out = out.to_str().unwrap();
    ok(&["synth", "--seed", "4", "--n-docs", "12", "--test-docs", "4", "--dev-docs", "4", "--num-types", "3", "--out", out]);
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(tree(&p));
        } else {
            out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path());
    synth(b.path());
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert!(ta.iter().any(|(n, _)| n == "labels.json"));
    assert!(ta.iter().any(|(n, _)| n == "manifest.json"));
    assert_eq!(ta.len(), tb.len());
    for ((na, ca), (nb, cb)) in ta.iter().zip(&tb) {
        assert_eq!(na, nb);
        if na != "manifest.json" {
            assert_eq!(ca, cb, "{na}");
        }
    }
}

#[test]
fn train_then_eval_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    synth(&data);
    let (d, r) = (data.to_str().unwrap(), run.to_str().unwrap());
    ok(&["train", "--desk", "--data", d, "--out", r, "--max-steps", "6", "--eval-every", "3"]);
    for f in ["best", "last", "history.csv", "summary.json", "manifest.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");

    let test = data.join("test");
    let best = run.join("best");
    let report = ok(&["eval", "--checkpoint", best.to_str().unwrap(), "--data", test.to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    let f1 = report["f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));

    let pred = dir.path().join("pred");
    ok(&["predict", "--checkpoint", best.to_str().unwrap(), "--data", test.to_str().unwrap(), "--out", pred.to_str().unwrap()]);
    let preds: serde_json::Value = serde_json::from_slice(&fs::read(pred.join("predictions.json")).unwrap()).unwrap();
    assert_eq!(preds.as_array().unwrap().len(), 4);
}

#[test]
fn gradcheck_reports_tolerance() {
    let out = ok(&["gradcheck", "--L", "6", "--D", "2", "--H", "8", "--d", "4"]);
    assert!(out.contains("max rel err < 1e-4"), "{out}");
}

#[test]
fn usage_errors_exit_2_and_runtime_errors_exit_1() {
    assert_eq!(hga(&["train", "--no-such-flag"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing");
    let out = hga(&["eval", "--checkpoint", missing.to_str().unwrap(), "--data", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
