mod common;

use common::{cli, config_path, read_json};

fn path(name: &str) -> String {
    config_path(name).to_str().unwrap().to_owned()
}

#[test]
fn validate_model_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["validate-model", "--config", &path("product"), "--out", out]).0, 0);
    let r = read_json(&dir.path().join("validate_model.json"));
    assert_eq!(r["passed"], true);
    assert!(r["checks"].as_array().unwrap().len() > 5);

    let (status, stderr) = cli(&["validate-model", "--config", &path("serre_bad_tau")]);
    assert_eq!(status, 2);
    assert!(stderr.contains("upper half plane"), "{stderr}");

    let (status, stderr) = cli(&["validate-model", "--config", &path("serre_bad_kappa"), "--out", out]);
    assert_eq!(status, 1);
    assert!(stderr.contains("FAIL metric positivity"), "{stderr}");
    let r = read_json(&dir.path().join("validate_model.json"));
    let check = r["checks"].as_array().unwrap().iter().find(|c| c["name"] == "metric positivity").unwrap().clone();
    assert_eq!(check["passed"], false);
    assert!(check["worst_sample"]["chart"].is_string());
}

#[test]
fn verify_hessian_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["verify-hessian", "--config", &path("flat"), "--out", out]).0, 0);
    let r = read_json(&dir.path().join("verify_hessian.json"));
    assert!((r["normal_constant"].as_f64().unwrap() - 1.0).abs() <= 1e-4);
    assert_eq!(r["points"].as_array().unwrap().len(), 5);
    assert_eq!(cli(&["verify-hessian", "--config", &path("product")]).0, 0);
    assert_eq!(cli(&["verify-hessian", "--config", &path("serre")]).0, 0);

    let (status, stderr) = cli(&["verify-hessian", "--config", &path("serre"), "--hessian-step", "3e-2", "--out", out]);
    assert_eq!(status, 1);
    assert!(stderr.contains("FAIL") && stderr.contains("off-block"), "{stderr}");
    let r = read_json(&dir.path().join("verify_hessian.json"));
    assert_eq!(r["passed"], false);
    assert_eq!(r["off_block_tolerance"], 1e-4);
}

#[test]
fn tolerance_override_applies_to_the_command() {
    // A tolerance below the finite-difference error turns the Serre run into a failure.
    assert_eq!(cli(&["verify-hessian", "--config", &path("serre"), "--tolerance", "1e-9"]).0, 1);
    assert_eq!(cli(&["verify-hessian", "--config", &path("serre"), "--tolerance", "1e-3"]).0, 0);
}

#[test]
fn extend_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (status, stderr) = cli(&["extend", "--config", &path("product_phi_positive"), "--out", out]);
    assert_eq!(status, 1, "{stderr}");
    let r = read_json(&dir.path().join("extension_report.json"));
    assert_eq!(r["failed_stage"], "check_star");
    assert!(!dir.path().join("extension_grid.csv").exists());
}

#[test]
fn configuration_errors_give_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(cli(&["extend", "--config", missing.to_str().unwrap()]).0, 2);

    let malformed = dir.path().join("malformed.toml");
    std::fs::write(&malformed, "[model\nkind = flat").unwrap();
    let (status, stderr) = cli(&["validate-model", "--config", malformed.to_str().unwrap()]);
    assert_eq!(status, 2);
    assert!(stderr.contains("configuration"), "{stderr}");

    assert_eq!(cli(&["extend", "--config", &path("product"), "--m-schedule", "4,2"]).0, 2);
    assert_eq!(cli(&["extend", "--config", &path("product"), "--tolerance", "-1"]).0, 2);
    assert_eq!(cli(&["extend", "--config", &path("product"), "--grid-spacing", "0"]).0, 2);
    assert_eq!(cli(&["extend"]).0, 2);
    assert_eq!(cli(&["no-such-command"]).0, 2);
    let no_phi = dir.path().join("no_phi.toml");
    std::fs::write(&no_phi, "[model]\nkind = \"flat\"\n").unwrap();
    assert_eq!(cli(&["extend", "--config", no_phi.to_str().unwrap()]).0, 2);
}

#[test]
fn extend_is_deterministic_and_honours_overrides() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |out: &str| vec!["extend".to_owned(), "--config".into(), path("product_local"), "--out".into(), out.into(), "--m-schedule".into(), "1,3,9".into()];
    for dir in [&a, &b] {
        let v = args(dir.path().to_str().unwrap());
        let refs: Vec<&str> = v.iter().map(String::as_str).collect();
        assert_eq!(cli(&refs).0, 0);
    }
    for file in ["extension_report.json", "extension_grid.csv"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert!(x == y, "{file} differs between identical runs");
    }
    let header = std::fs::read_to_string(a.path().join("extension_grid.csv")).unwrap().lines().next().unwrap().to_owned();
    assert!(header.starts_with("chart,x0_re,x0_im,x1_re,x1_im,h,phi_m1,min_eig_m1,branch_m1"), "{header}");
    assert!(header.ends_with("phi_m9,min_eig_m9,branch_m9"), "{header}");
    let r = read_json(&a.path().join("extension_report.json"));
    assert_eq!(r["regularization"]["schedule"], serde_json::json!([1, 3, 9]));
    let csv = std::fs::read_to_string(a.path().join("extension_grid.csv")).unwrap();
    assert!(csv.contains(",local,"), "the local branch is active somewhere");
}

#[test]
fn jitter_seed_changes_the_grid_only() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["extend", "--config", &path("product"), "--out", a.path().to_str().unwrap()]).0, 0);
    assert_eq!(cli(&["extend", "--config", &path("product"), "--jitter-seed", "7", "--out", b.path().to_str().unwrap()]).0, 0);
    let ra = read_json(&a.path().join("extension_report.json"));
    let rb = read_json(&b.path().join("extension_report.json"));
    assert_eq!(rb["grid"]["jitter_seed"], 7);
    assert_eq!(ra["status"], rb["status"]);
    assert_ne!(
        std::fs::read(a.path().join("extension_grid.csv")).unwrap(),
        std::fs::read(b.path().join("extension_grid.csv")).unwrap()
    );
}

#[test]
fn report_goes_to_stdout_without_out() {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_qpsh-extend"))
        .args(["verify-hessian", "--config", &path("flat")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["model"], "flat");
    assert_eq!(r["passed"], true);
}
