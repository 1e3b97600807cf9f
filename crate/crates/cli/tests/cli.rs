use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "input": {"synth": {"n_rows": 240, "n_features": 8, "informative": 3}},
  "repeats": 3,
  "models": ["LR", "DTC", "GNB"],
  "lime": {"n_samples": 300, "k_features": 5},
  "k_features": 4,
  "explain_instances": 12
}"#;

fn drivelime(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drivelime"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn drivelime")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.json");
    std::fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_owned()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .map(|it| it.map(|e| e.unwrap().file_name().into_string().unwrap()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

#[test]
fn stages_write_their_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let expect: [(&str, &[&str]); 7] = [
        ("synth", &["data.csv"]),
        ("prep", &["scaler.json", "splits.json"]),
        ("train", &["metrics_before.json", "metrics_before.md", "model.json"]),
        ("explain", &["explanations.json"]),
        ("select", &["importance.svg", "ranking.json"]),
        ("compare", &["report.json", "report.md"]),
        (
            "run",
            &["explanations.json", "importance.svg", "ranking.json", "report.json", "report.md"],
        ),
    ];
    for (stage, wanted) in expect {
        let out = tmp.path().join(stage);
        let o = drivelime(&[stage, "--config", &cfg, "--out", out.to_str().unwrap()], tmp.path());
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
        let got = files(&out);
        for w in wanted {
            assert!(got.iter().any(|g| g == w), "{stage} missing {w}: {got:?}");
        }
    }
    let report = std::fs::read_to_string(tmp.path().join("run/report.md")).unwrap();
    assert!(report.contains("## Before feature selection"));
    assert!(report.contains("## After feature selection"));
    let svg = std::fs::read_to_string(tmp.path().join("run/importance.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert!(svg.matches("<rect").count() >= 8);
}

#[test]
fn seed_flag_changes_and_fixes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let mut reports = Vec::new();
    for (name, seed) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let out = tmp.path().join(name);
        let o = drivelime(&["compare", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()], tmp.path());
        assert!(o.status.success());
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert_ne!(reports[0], reports[2]);
}

#[test]
fn leak_safe_mode_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("safe");
    let o = drivelime(&["compare", "--leak-safe", "--config", &cfg, "--out", out.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"leak_safe\": true"));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(drivelime(&["run", "--bogus"], tmp.path()).status.code(), Some(1));
    assert_eq!(drivelime(&[], tmp.path()).status.code(), Some(1));
    assert_eq!(drivelime(&["--help"], tmp.path()).status.code(), Some(0));
    let missing = tmp.path().join("nope.json");
    let o = drivelime(&["run", "--config", missing.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn every_config_violation_is_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"repeats": 0, "test_frac": 1.5, "k_features": 0, "lime": {"kernel_width": 0.0, "ridge_alpha": -1.0}}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = drivelime(&["run", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    for needle in ["repeats", "test_frac", "k_features", "kernel_width", "ridge_alpha"] {
        assert!(err.contains(needle), "{needle} not reported in {err}");
    }
    assert!(!out.exists());

    std::fs::write(&path, r#"{"colour": "blue"}"#).unwrap();
    let o = drivelime(&["run", "--config", path.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two_without_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("csv.json");
    let csv = tmp.path().join("table.csv");
    std::fs::write(&csv, "speed,behavior\n1,a\n2,b\n3,a\n").unwrap();
    for (target, file) in [("behavior", "missing.csv"), ("label", "table.csv")] {
        let cfg = format!(
            r#"{{"input": {{"csv": {{"path": {:?}, "target": "{target}"}}}}}}"#,
            tmp.path().join(file)
        );
        std::fs::write(&path, cfg).unwrap();
        let out = tmp.path().join("out");
        let o = drivelime(&["run", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()], tmp.path());
        assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.join("report.json").exists());
    }
}
