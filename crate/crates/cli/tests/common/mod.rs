#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pcnic"));
    c.env("RUST_LOG", "warn");
    c
}

/// Runs the binary and returns (exit code, stdout, stderr).
pub fn run(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let Output { status, stdout, stderr } = bin().args(args).current_dir(cwd).output().expect("binary runs");
    (status.code().unwrap_or(-1), String::from_utf8_lossy(&stdout).into_owned(), String::from_utf8_lossy(&stderr).into_owned())
}

pub fn run_ok(args: &[&str], cwd: &Path) -> String {
    let (code, out, err) = run(args, cwd);
    assert_eq!(code, 0, "pcnic {args:?} failed:\n{out}\n{err}");
    out
}

/// Synthetic KITTI-style split of `count` 96×320 frames under `root`.
pub fn kitti_fixture(root: &Path, count: usize) -> Vec<String> {
    pcnic::kitti::write_synthetic_split(root, count, 96, 320, 5).expect("fixture")
}

/// A TOML run configuration for a small model on `pcnu_dir`.
pub fn toy_config(dir: &Path, pcnu_dir: &str, body: &str) -> PathBuf {
    let path = dir.join("toy.toml");
    let text = format!(
        "seed = 3\noutput_dir = \"runs\"\n\n[data]\npcnu_dir = \"{pcnu_dir}\"\ncrop = [32, 32]\n\n{body}\n"
    );
    std::fs::write(&path, text).unwrap();
    path
}
