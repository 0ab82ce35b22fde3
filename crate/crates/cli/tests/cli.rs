use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fosre::config::ControllerConfig;
use serde_json::Value;

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/configs").join(name)
}

fn fosre(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fosre"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn crone_demo_succeeds_and_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = fosre(&["crone"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("crone.csv")).unwrap();
    assert!(rdr.records().count() > 10);
}

#[test]
fn crone_rejects_too_few_sections() {
    let dir = tempfile::tempdir().unwrap();
    let doc = dir.path().join("crone.json");
    std::fs::write(&doc, r#"{"units": "rad/s", "lambda": -0.5, "omega_l": 1, "omega_h": 10000, "n": 2}"#).unwrap();
    let out = fosre(&["crone", "--config", doc.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let doc = dir.path().join("bad.json");
    let mut v = read_json(&bundled("pid.json"));
    v["gamma"] = 0.2.into();
    std::fs::write(&doc, v.to_string()).unwrap();
    let out = fosre(&["hosidf", "--config", doc.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn missing_config_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fosre(&["simulate", "--config", "/nonexistent/fosre.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn hosidf_even_orders_vanish() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bundled("fosre_set1.json");
    let out = fosre(
        &["hosidf", "--config", cfg.to_str().unwrap(), "--orders", "1,2,3,4", "--points", "20"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("hosidf_cglp.csv")).unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let order: u32 = rec[1].parse().unwrap();
        let (re, im): (f64, f64) = (rec[2].parse().unwrap(), rec[3].parse().unwrap());
        if order.is_multiple_of(2) {
            assert_eq!((re, im), (0.0, 0.0));
        } else {
            assert!(re.hypot(im) > 0.0);
        }
        rows += 1;
    }
    assert_eq!(rows, 80);
    // the resolved document carries the gains and is itself a valid config
    let resolved = std::fs::read_to_string(dir.path().join("resolved.json")).unwrap();
    let c = ControllerConfig::from_json(&resolved).unwrap();
    assert!(c.k_p.is_some() && c.alpha.is_some());
}

#[test]
fn simulate_zero_reference_is_silent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bundled("sosre_set1.json");
    let out = fosre(
        &["simulate", "--config", cfg.to_str().unwrap(), "--reference", "zero", "--duration", "0.05"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = read_json(&dir.path().join("metrics.json"));
    let body = &m["SOSRE No.1"]["zero"];
    assert_eq!(body["metrics"]["rms"], 0.0);
    assert_eq!(body["resets"], 0);
}

#[test]
fn simulate_rejects_non_integer_period() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bundled("pid.json");
    let out = fosre(
        &["simulate", "--config", cfg.to_str().unwrap(), "--reference", "sine:3", "--dt", "1e-4"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tune_writes_a_loadable_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = fosre(&["tune", "--omega-lb", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("tuned_config.json")).unwrap();
    let c = ControllerConfig::from_json(&text).unwrap();
    assert_eq!(ControllerConfig::from_json(&c.to_json()).unwrap(), c);
    let report = read_json(&dir.path().join("tune.json"));
    assert!(report.is_object());
}
