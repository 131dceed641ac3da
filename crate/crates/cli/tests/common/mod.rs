#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn probshape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probshape"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

/// Runs the binary and panics with its stderr unless it succeeds.
pub fn ok(args: &[&str]) -> String {
    let out = probshape(args);
    assert!(
        out.status.success(),
        "probshape {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// All regular files below `dir`, relative path and bytes, sorted.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[derive(Debug, Clone)]
pub struct EvalRow {
    pub method: String,
    pub n: usize,
    pub dice_mean: f64,
    pub dice_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
}

pub fn read_eval_csv(path: &Path) -> Vec<EvalRow> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("method,n,dice_mean,dice_std,rmse_mean,rmse_std")
    );
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            EvalRow {
                method: f[0].to_string(),
                n: f[1].parse().unwrap(),
                dice_mean: f[2].parse().unwrap(),
                dice_std: f[3].parse().unwrap(),
                rmse_mean: f[4].parse().unwrap(),
                rmse_std: f[5].parse().unwrap(),
            }
        })
        .collect()
}
