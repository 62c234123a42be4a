//! End-to-end runs of the binary.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_csi-breath"))
}

fn simulate(dir: &Path, extra: &[&str]) {
    let status = bin()
        .args(["simulate", "--duration", "45", "--subcarriers", "96", "--seed", "3", "--out"])
        .arg(dir.join("trace.csv"))
        .arg("--truth")
        .arg(dir.join("truth.csv"))
        .args(extra)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn simulate_run_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, &[]);
    std::fs::write(d.join("cfg.json"), r#"{"window_s": 30, "hop_s": 5}"#).unwrap();

    let status = bin()
        .arg("run")
        .arg("--input")
        .arg(d.join("trace.csv"))
        .arg("--config")
        .arg(d.join("cfg.json"))
        .arg("--out")
        .arg(d.join("waveform.csv"))
        .arg("--report")
        .arg(d.join("report.json"))
        .arg("--dump-bnr")
        .arg(d.join("bnr.csv"))
        .arg("--dump-groups")
        .arg(d.join("groups.csv"))
        .status()
        .unwrap();
    assert!(status.success());

    let report = csi_breath::io::read_report(d.join("report.json")).unwrap();
    assert_eq!(report.windows.len(), 4);
    for w in &report.windows {
        let rr = w.rr_bpm.expect("rate in every window");
        assert!((rr - 15.0).abs() < 0.2, "{rr}");
    }
    let bnr = std::fs::read_to_string(d.join("bnr.csv")).unwrap();
    assert_eq!(bnr.lines().count(), 1 + 4 * 96);
    let groups = std::fs::read_to_string(d.join("groups.csv")).unwrap();
    assert!(groups.lines().skip(1).any(|l| l.split(',').nth(2) == Some("1")));

    let status = bin()
        .arg("eval")
        .arg("--waveform")
        .arg(d.join("waveform.csv"))
        .arg("--report")
        .arg(d.join("report.json"))
        .arg("--truth")
        .arg(d.join("truth.csv"))
        .arg("--config")
        .arg(d.join("cfg.json"))
        .arg("--out")
        .arg(d.join("metrics.json"))
        .status()
        .unwrap();
    assert!(status.success());
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["rr_mae_bpm"].as_f64().unwrap() < 0.2);
    assert!(metrics["waveform_pcc"].as_f64().unwrap() > 0.9);
    for key in ["ie_mse", "tvv_mse", "apen_mse"] {
        assert!(metrics[key].is_number(), "{key}");
    }
    assert!(metrics["bland_altman"]["rr_bpm"]["n"].as_u64().unwrap() == 4);
}

#[test]
fn input_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = bin()
        .arg("run")
        .arg("--input")
        .arg(d.join("nope.csv"))
        .arg("--out")
        .arg(d.join("w.csv"))
        .arg("--report")
        .arg(d.join("r.json"))
        .status()
        .unwrap();
    assert_eq!(missing.code(), Some(2));

    simulate(d, &[]);
    std::fs::write(d.join("cfg.json"), r#"{"window_s": 5}"#).unwrap();
    let bad_cfg = bin()
        .arg("run")
        .arg("--input")
        .arg(d.join("trace.csv"))
        .arg("--config")
        .arg(d.join("cfg.json"))
        .arg("--out")
        .arg(d.join("w.csv"))
        .arg("--report")
        .arg(d.join("r.json"))
        .status()
        .unwrap();
    assert_eq!(bad_cfg.code(), Some(2));

    std::fs::write(d.join("scene.json"), r#"{"los": 3}"#).unwrap();
    let bad_scene = bin()
        .arg("simulate")
        .arg("--scene")
        .arg(d.join("scene.json"))
        .arg("--out")
        .arg(d.join("t.csv"))
        .arg("--truth")
        .arg(d.join("g.csv"))
        .status()
        .unwrap();
    assert_eq!(bad_scene.code(), Some(2));
}

#[test]
fn silent_room_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut scene = csi_breath::sim::SceneSpec::default();
    scene.chest_rest.attenuation = 0.0.into();
    scene.noise_snr_db = None;
    csi_breath::io::write_json(&scene, d.join("scene.json")).unwrap();
    let status = bin()
        .arg("simulate")
        .arg("--scene")
        .arg(d.join("scene.json"))
        .args(["--duration", "30", "--subcarriers", "32", "--out"])
        .arg(d.join("trace.csv"))
        .arg("--truth")
        .arg(d.join("truth.csv"))
        .status()
        .unwrap();
    assert!(status.success());
    let status = bin()
        .arg("run")
        .arg("--input")
        .arg(d.join("trace.csv"))
        .arg("--out")
        .arg(d.join("w.csv"))
        .arg("--report")
        .arg(d.join("r.json"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    let report = csi_breath::io::read_report(d.join("r.json")).unwrap();
    assert!(report.windows.iter().all(|w| w.degraded && w.reason.is_some()));
}

#[test]
fn bench_prints_timings() {
    let out = bin().args(["bench", "--subcarriers", "64", "--window-s", "15", "--repeats", "1"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n_subcarriers"], 64);
    assert_eq!(v["n_samples"], 1500);
    assert!(v["total_ms"].as_f64().unwrap() > 0.0);
}
