use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn triage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_triage"))
        .args(args)
        .env_remove("TRIAGE_WORKERS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn train_args<'a>(out: &'a str, metadata: &'a str, predictions: &'a str) -> Vec<&'a str> {
    vec![
        "train",
        "--metadata",
        metadata,
        "--predictions",
        predictions,
        "--out",
        out,
        "--n-trees",
        "20",
    ]
}

#[test]
fn evaluate_perfect_separation() {
    let dir = tempfile::tempdir().unwrap();
    let labels = fixture("perfect_labels.csv");
    let scores = fixture("perfect_scores.csv");
    let o = triage(&[
        "evaluate",
        "--labels",
        labels.to_str().unwrap(),
        "--scores",
        scores.to_str().unwrap(),
        "--min-tpr",
        "0.8",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("pauc=0.200000 "));
    assert!(dir.path().join("eval_report.json").exists());
    assert!(dir.path().join("run_manifest.json").exists());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = triage(&["train", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validation_failure_is_one_line_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = triage(&["train", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[input]: "));

    let o = triage(&[
        "split",
        "--folds",
        "1",
        "--metadata",
        fixture("cohort_metadata.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[parameter]: "));
}

#[test]
fn config_file_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    fs::write(&path, r#"{"folds": 5, "learning_rate": 0.1}"#).unwrap();
    let o = triage(&["ingest", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown field"));
}

#[test]
fn train_is_reproducible_and_worker_independent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let meta = fixture("cohort_metadata.csv");
    let preds = fixture("cohort_predictions.csv");
    let (meta, preds) = (meta.to_str().unwrap(), preds.to_str().unwrap());
    let o = triage(&train_args(a.path().to_str().unwrap(), meta, preds));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l == "members=45"), "{text}");
    assert_eq!(
        text.lines()
            .filter(|l| l.starts_with("seed=") && l.contains(" fold="))
            .count(),
        15
    );

    let mut args = train_args(b.path().to_str().unwrap(), meta, preds);
    args.extend(["--workers", "1"]);
    assert!(triage(&args).status.success());
    for name in [
        "oof.csv",
        "run_manifest.json",
        "fold_plan.json",
        "ensemble/ensemble.json",
        "features.bin",
    ] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let members = fs::read_dir(a.path().join("ensemble")).unwrap().count();
    assert_eq!(members, 45 + 2);
}

#[test]
fn downstream_commands_read_a_train_run() {
    let run = tempfile::tempdir().unwrap();
    let scored = tempfile::tempdir().unwrap();
    let meta = fixture("cohort_metadata.csv");
    let preds = fixture("cohort_predictions.csv");
    let run_dir = run.path().to_str().unwrap();
    assert!(
        triage(&train_args(run_dir, meta.to_str().unwrap(), preds.to_str().unwrap()))
            .status
            .success()
    );

    let o = triage(&["report", "--out", run_dir]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("pauc="));
    assert!(run.path().join("report.txt").exists());

    let o = triage(&["importance", "--top", "3", "--out", run_dir]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 3);
    let csv = fs::read_to_string(run.path().join("importance.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 214);

    let o = triage(&[
        "predict",
        "--model",
        run_dir,
        "--metadata",
        fixture("missing_age.csv").to_str().unwrap(),
        "--out",
        scored.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let scores = fs::read_to_string(scored.path().join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 11);
}

#[test]
fn synth_then_ablate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = triage(&["synth", "--patients", "30", "--synth-seed", "4", "--out", d]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sweep = dir.path().join("sweep.json");
    fs::write(
        &sweep,
        r#"[{"name": "raw", "use_engineered": false, "use_patient_norm": false, "use_external_preds": false, "include_synthetic": false},
            {"name": "all", "use_engineered": true, "use_patient_norm": true, "use_external_preds": true, "include_synthetic": false}]"#,
    )
    .unwrap();
    let meta = dir.path().join("metadata.csv");
    let preds = dir.path().join("predictions.csv");
    let o = triage(&[
        "ablate",
        "--sweep",
        sweep.to_str().unwrap(),
        "--metadata",
        meta.to_str().unwrap(),
        "--predictions",
        preds.to_str().unwrap(),
        "--seeds",
        "0",
        "--n-trees",
        "10",
        "--out",
        d,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(stdout(&o).contains("Reference"));
}
