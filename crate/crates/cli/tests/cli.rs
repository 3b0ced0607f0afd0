use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_semg-fin"))
}

fn tiny() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.cfg")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn semg-fin")
}

fn error_line(out: &Output) -> serde_json::Value {
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "expected one error line, got {text:?}");
    serde_json::from_str(lines[0]).expect("error line is JSON")
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "seed = 3\nfin.bogus = 1\n").unwrap();
    let out = run(&["train-fin", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let err = error_line(&out);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("fin.bogus"));
}

#[test]
fn bad_override_and_bad_flag_report_json() {
    let out = run(&["train-fin", "--set", "noequals"]);
    assert_eq!(error_line(&out)["error"], "config");
    let out = run(&["train-fin", "--seed", "minus-one"]);
    assert_eq!(error_line(&out)["error"], "usage");
}

#[test]
fn missing_data_dir_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let out = run(&["extract-features", "--data-dir", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(error_line(&out)["error"], "io");
}

#[test]
fn synthetic_csvs_round_trip_through_extract_features() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cfg = tiny();
    let out = run(&["synth-data", "--config", cfg.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for id in [1, 27] {
        assert!(data.join(format!("subject_{id}.csv")).is_file());
    }

    let feats = |src: &[&str], out_dir: &Path| {
        let mut args = vec!["extract-features", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()];
        args.extend_from_slice(src);
        let out = run(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read_to_string(out_dir.join("features.csv")).unwrap()
    };
    let from_files = feats(&["--data-dir", data.to_str().unwrap()], &dir.path().join("a"));
    let generated = feats(&[], &dir.path().join("b"));
    assert!(from_files.lines().count() > 1);
    assert!(from_files.starts_with("subject,repetition,start_index,label,feature,ch1,"));
    assert!(from_files.contains(",ENT,") && from_files.contains(",SSI,"));
    // Text written with shortest round-trip formatting reads back to the same values.
    assert_eq!(from_files, generated);
}

#[test]
fn train_finetune_evaluate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let cfg = cfg.to_str().unwrap();
    let fins = dir.path().join("fins");
    let tuned = dir.path().join("tuned");
    let evald = dir.path().join("eval");

    let out = run(&["train-fin", "--config", cfg, "--out", fins.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["ENT", "RMS", "VAR", "SSI"] {
        assert!(fins.join(format!("fin-{f}.ckpt")).is_file());
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fins.join("exp1-fin.json")).unwrap()).unwrap();
    assert_eq!(report["fin"].as_array().unwrap().len(), 4);
    assert!(fins.join("exp1-fin.csv").is_file());

    let out = run(&[
        "finetune",
        "--config",
        cfg,
        "--fins",
        fins.to_str().unwrap(),
        "--out",
        tuned.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for id in [1, 27] {
        assert!(tuned.join(format!("joint-s{id}.ckpt")).is_file());
    }
    let tuned_report = std::fs::read_to_string(tuned.join("exp4-finetune.json")).unwrap();

    let out = run(&["evaluate", "--config", cfg, "--checkpoints", tuned.to_str().unwrap(), "--out", evald.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let tuned_report: serde_json::Value = serde_json::from_str(&tuned_report).unwrap();
    let eval_report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(evald.join("evaluate.json")).unwrap()).unwrap();
    let joint = |r: &serde_json::Value| {
        r["models"]
            .as_array()
            .unwrap()
            .iter()
            .find(|m| m["model"] == "FIN+CNN-II")
            .map(|m| m["subjects"].clone())
            .expect("joint model in report")
    };
    assert_eq!(joint(&tuned_report), joint(&eval_report));

    // A checkpoint of the wrong kind is refused.
    std::fs::copy(fins.join("fin-RMS.ckpt"), fins.join("fin-ENT.ckpt")).unwrap();
    let out = run(&[
        "finetune",
        "--config",
        cfg,
        "--fins",
        fins.to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(error_line(&out)["error"], "checkpoint-mismatch");
}
