use std::path::Path;
use std::process::{Command, Output};

fn hvpe(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hvpe"))
        .args(args)
        .current_dir(dir)
        .env_remove("OUT_DIR")
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn sample_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    for sub in ["a", "b"] {
        let out = hvpe(
            &["sample", "--m", "8", "--seed", "42", "--out-dir", sub],
            tmp.path(),
        );
        assert!(out.status.success(), "{out:?}");
    }
    assert_eq!(
        read(&tmp.path().join("a/sample.txt")),
        read(&tmp.path().join("b/sample.txt"))
    );
}

#[test]
fn invalid_dt_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hvpe(&["simulate", "--dt=-0.5"], tmp.path());
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("dt"), "stderr: {stderr}");
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hvpe(&["frobnicate"], tmp.path());
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn unknown_config_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.cfg"), "thtea = 2.5\n").unwrap();
    let out = hvpe(&["simulate", "--config", "c.cfg"], tmp.path());
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("thtea"), "stderr: {stderr}");
}

#[test]
fn cli_flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("c.cfg"),
        "m = 4\ntheta = 2.5\nT = 0.01\ndt = 0.001\nensemble = 2\nseed = 7\n",
    )
    .unwrap();
    let out = hvpe(
        &["simulate", "--config", "c.cfg", "--m", "6", "--out-dir", "run"],
        tmp.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(&tmp.path().join("run/manifest.json"))).unwrap();
    assert_eq!(manifest["config"]["m"], 6);
    assert_eq!(manifest["config"]["theta"], 2.5);
}

#[test]
fn rerun_from_manifest_config_reproduces_observables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hvpe(
        &[
            "simulate",
            "--m",
            "4",
            "--theta",
            "2.5",
            "--T",
            "0.02",
            "--dt",
            "0.002",
            "--ensemble",
            "3",
            "--seed",
            "99",
            "--out-dir",
            "one",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{out:?}");

    // rebuild a config file from the manifest snapshot and rerun
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(&tmp.path().join("one/manifest.json"))).unwrap();
    let c = &manifest["config"];
    let cfg_text = format!(
        "theta = {}\nm = {}\nT = {}\ndt = {}\nseed = {}\nensemble = {}\nscheme = {}\nrecord_stride = {}\nfast = {}\n",
        c["theta"], c["m"], c["T"], c["dt"], c["seed"], c["ensemble"],
        c["scheme"].as_str().unwrap(), c["record_stride"], c["fast"],
    );
    std::fs::write(tmp.path().join("replay.cfg"), cfg_text).unwrap();
    let out = hvpe(
        &["simulate", "--config", "replay.cfg", "--out-dir", "two"],
        tmp.path(),
    );
    assert!(out.status.success(), "{out:?}");
    assert_eq!(
        read(&tmp.path().join("one/observables.csv")),
        read(&tmp.path().join("two/observables.csv"))
    );

    // the manifest's recorded checksums match the files on disk
    for rec in manifest["outputs"].as_array().unwrap() {
        let path = tmp.path().join(rec["path"].as_str().unwrap());
        let body = read(&path);
        assert_eq!(
            rec["sha256"].as_str().unwrap(),
            hvpe::config::sha256_hex(&body),
            "checksum drift for {}",
            path.display()
        );
    }
}

#[test]
fn poisson_check_passes_and_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hvpe(
        &["poisson-check", "--m", "6", "--theta", "2.5", "--out-dir", "pc"],
        tmp.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let csv = String::from_utf8(read(&tmp.path().join("pc/poisson.csv"))).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k1,k2,m,theta,residual"));
    for line in lines {
        let residual: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(residual <= 1e-12, "{line}");
    }
}

#[test]
fn out_dir_env_fallback() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hvpe"))
        .args(["sample", "--m", "4", "--seed", "1"])
        .current_dir(tmp.path())
        .env("OUT_DIR", "envdir")
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{out:?}");
    assert!(tmp.path().join("envdir/sample.txt").exists());
}

#[test]
fn uniqueness_window_empty_at_theta_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hvpe(
        &["uniqueness-window", "--theta", "3", "--out-dir", "uw"],
        tmp.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let report: serde_json::Value =
        serde_json::from_slice(&read(&tmp.path().join("uw/report.json"))).unwrap();
    assert!(report["window"].is_null());
    assert!(report["note"].as_str().unwrap().contains("empty"));
}
