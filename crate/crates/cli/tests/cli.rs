use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hisparse"))
}

#[test]
fn verify_suites_exit_zero() {
    for suite in ["operators", "hirip", "bounds"] {
        let out = bin().args(["verify", "--suite", suite]).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{suite}: {}", String::from_utf8_lossy(&out.stdout));
        assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
    }
}

#[test]
fn unknown_suite_is_rejected() {
    let out = bin().args(["verify", "--suite", "everything"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn template_run_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["template", "--scenario", "omp-compare"]).output().unwrap();
    assert!(out.status.success());
    let mut cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    cfg["trials"] = 2.into();
    cfg["sweep"]["values"] = serde_json::json!([8, 16]);
    let cfg_path = dir.path().join("cfg.json");
    fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();

    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--config", cfg_path.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--threads", "1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = out_dir.join("omp-compare.csv");
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert!(out_dir.join("omp-compare.manifest.json").exists());

    let out = bin().args(["plot", "--csv", csv.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("3 curves"));
    assert!(out_dir.join("omp-compare.dat").exists() && out_dir.join("omp-compare.gp").exists());
}

#[test]
fn preset_override_and_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["template", "--scenario", "mismatched-L", "--preset", "paper"]).output().unwrap();
    let mut cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    cfg["trials"] = 1.into();
    cfg["sweep"]["values"] = serde_json::json!([3]);
    let path = dir.path().join("c.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = bin()
        .args(["run", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--preset", "small"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("mismatched-L.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["system"]["n"], 128);

    fs::write(&path, "{\"scenario\": \"nope\"}").unwrap();
    let out = bin().args(["run", "--config", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn empty_csv_plots_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    fs::write(&csv, "").unwrap();
    let out = bin().args(["plot", "--csv", csv.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn small_preset_drops_oversized_np() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["template", "--scenario", "single-user-sweep", "--preset", "paper"]).output().unwrap();
    let mut cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    cfg["trials"] = 1.into();
    cfg["curves"] = serde_json::json!([{"estimator": "HiIHT"}]);
    cfg["sweep"]["values"] = serde_json::json!([8, 160]);
    let path = dir.path().join("c.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = bin()
        .args(["run", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--preset", "small"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dropped Np values [160]"));
    let csv = fs::read_to_string(dir.path().join("single-user-sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}
