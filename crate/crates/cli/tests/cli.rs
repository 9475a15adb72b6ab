use std::path::Path;
use std::process::{Command, Output};

fn trdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trdyn")).args(args).env("TRDYN_THREADS", "1").output().expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// The single JSON line written to stderr on failure.
fn error_line(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "stderr: {text}");
    serde_json::from_str(lines[0]).expect("stderr is JSON")
}

fn generate(dir: &Path, scene: &str) -> std::path::PathBuf {
    let out = trdyn(&["generate", "--scene", scene, "-o", arg(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("dataset")
}

#[test]
fn step_by_step_pipeline_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path();
    let dataset = generate(out_dir, "multipart");
    let out = trdyn(&["fit", "--dataset", arg(&dataset), "--iterations", "150", "-o", arg(out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let checkpoint = out_dir.join("field.json");
    let out = trdyn(&["extrapolate", "--dataset", arg(&dataset), "--checkpoint", arg(&checkpoint), "--steps", "7", "-o", arg(out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("eval_report.json")).unwrap()).unwrap();
    assert_eq!(report["horizons"].as_array().unwrap().len(), 7);
    let out = trdyn(&["segment", "--dataset", arg(&dataset), "--checkpoint", arg(&checkpoint), "--k", "3", "-o", arg(out_dir)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("k 3 "));
    let traj = out_dir.join("prediction/traj.csv");
    let out = trdyn(&["render", "--dataset", arg(&dataset), "--trajectory", arg(&traj), "--width", "40", "--height", "30", "-o", arg(out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("frames/frame_0007.png").exists());
    assert!(!out_dir.join("frames/frame_0008.png").exists());
}

#[test]
fn config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    let output = dir.path().join("out");
    let text = serde_json::json!({
        "scene": "static",
        "seed": 2,
        "fit": { "iterations": 10 },
        "render": { "width": 32, "height": 24 },
        "output": output,
    });
    std::fs::write(&config, text.to_string()).unwrap();
    let out = trdyn(&["--config", arg(&config), "run", "--k", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["dataset/traj.csv", "field.json", "fit_report.json", "eval_report.json", "labels.csv", "frames/frame_0000.png"] {
        assert!(output.join(f).exists(), "{f} missing");
    }
}

#[test]
fn help_and_version_exit_zero() {
    assert!(trdyn(&["--help"]).status.success());
    assert!(trdyn(&["--version"]).status.success());
}

#[test]
fn usage_errors_exit_two() {
    let out = trdyn(&["fit"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "config");
    let out = trdyn(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"fit": {"iterations": 3, "itterations": 4}}"#).unwrap();
    let out = trdyn(&["--config", arg(&config), "generate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_line(&out);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("itterations"));

    let out = trdyn(&["--config", arg(&dir.path().join("absent.json")), "generate"]);
    assert_eq!(out.status.code(), Some(2));

    let out = trdyn(&["generate", "--scene", "nope", "-o", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    let dataset = generate(dir.path(), "static");
    let out = trdyn(&["fit", "--dataset", arg(&dataset), "--learning-rate", "-1", "-o", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn data_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = trdyn(&["fit", "--dataset", arg(&dir.path().join("missing")), "-o", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_line(&out)["error"], "data");

    let dataset = generate(dir.path(), "static");
    let traj = dataset.join("traj.csv");
    let text = std::fs::read_to_string(&traj).unwrap();
    std::fs::write(&traj, text.replacen(",0,", ",zero,", 1)).unwrap();
    let out = trdyn(&["fit", "--dataset", arg(&dataset), "-o", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn divergence_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = generate(dir.path(), "fan");
    let out = trdyn(&["fit", "--dataset", arg(&dataset), "--learning-rate", "1e200", "--iterations", "20", "-o", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_line(&out)["error"], "numerical");
}
