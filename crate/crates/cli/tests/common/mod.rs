#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_proofgraph")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Runs the binary with `store` as the store and `cwd` as working directory.
pub fn run_in(cwd: &Path, store: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .env("PROOFGRAPH_STORE", store)
        .output()
        .expect("binary runs")
}

/// Replays `golden/<name>` against a fresh store and returns the number of
/// commands checked, or a description of the first mismatch. Each block in
/// the transcript is `$ <args>`, the expected stdout, and `? <exit code>`.
/// With `UPDATE_GOLDEN=1` the file is rewritten instead.
pub fn check_transcript(name: &str) -> Result<usize, String> {
    let path = golden_dir().join(name);
    let expected = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let commands: Vec<&str> = expected
        .lines()
        .filter_map(|l| l.strip_prefix("$ "))
        .collect();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = tmp.path().join("store");
    let inputs = golden_dir().join("inputs");
    let mut actual = String::new();
    for cmd in &commands {
        let args: Vec<&str> = cmd.split_whitespace().collect();
        let out = run_in(&inputs, &store, &args);
        actual.push_str(&format!("$ {cmd}\n"));
        actual.push_str(&String::from_utf8_lossy(&out.stdout));
        actual.push_str(&format!("? {}\n", out.status.code().unwrap_or(-1)));
    }
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, &actual).map_err(|e| e.to_string())?;
        return Ok(commands.len());
    }
    if actual == expected {
        return Ok(commands.len());
    }
    let line = actual
        .lines()
        .zip(expected.lines())
        .position(|(a, e)| a != e)
        .unwrap_or_else(|| actual.lines().count().min(expected.lines().count()));
    Err(format!(
        "{name} line {}: expected {:?}, got {:?}",
        line + 1,
        expected.lines().nth(line).unwrap_or("<eof>"),
        actual.lines().nth(line).unwrap_or("<eof>")
    ))
}
