#![allow(dead_code)]

use std::path::PathBuf;
use std::process::Command;

use qpsh_extend::extension::ExtendConfig;
use qpsh_extend::models::ModelConfig;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"))
}

pub fn config_text(name: &str) -> String {
    std::fs::read_to_string(config_path(name)).unwrap_or_else(|e| panic!("reading config {name}: {e}"))
}

pub fn load(name: &str) -> (ModelConfig, ExtendConfig) {
    parse(&config_text(name))
}

pub fn parse(text: &str) -> (ModelConfig, ExtendConfig) {
    (ModelConfig::from_toml(text).unwrap(), ExtendConfig::from_toml(text).unwrap())
}

/// Runs the binary and returns its exit status with captured stderr.
pub fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_qpsh-extend")).args(args).output().expect("spawning the binary");
    (out.status.code().expect("exit status"), String::from_utf8_lossy(&out.stderr).into_owned())
}

pub fn read_json(path: &std::path::Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))).unwrap()
}
