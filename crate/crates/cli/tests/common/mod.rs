//! Helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use gicoord_core::store::{save_snapshot, ScenarioDocument};
use gicoord_testkit as kit;

pub struct Output {
    pub code: i32,
    pub stdout: Vec<u8>,
    pub stderr: String,
}

pub fn gicoord(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_gicoord")).args(args).output().expect("spawn gicoord");
    Output {
        code: out.status.code().unwrap_or(-1),
        stdout: out.stdout,
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join(name)
}

pub fn fixture(name: &str) -> PathBuf {
    dir("fixtures").join(format!("{name}.scn"))
}

pub fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Set `GICOORD_BLESS=1` to rewrite fixtures and goldens from the current code.
pub fn blessing() -> bool {
    std::env::var_os("GICOORD_BLESS").is_some()
}

/// Documents behind the shipped `.scn` files.
pub fn fixture_sources() -> Vec<(&'static str, ScenarioDocument)> {
    let (w, s) = kit::two_agent();
    let two = kit::scenario(w, s, "two_agent");
    let (w, s) = kit::hand_traced(true);
    let chain = kit::scenario(w, s, "chain");
    vec![("good", kit::good()), ("two_agent", two), ("chain", chain)]
}

pub fn fixture_bytes(doc: &ScenarioDocument) -> Vec<u8> {
    let mut b = save_snapshot(doc);
    b.push(b'\n');
    b
}

/// Compares `actual` with the committed golden file `name`.
pub fn golden(name: &str, actual: &[u8]) -> Result<(), String> {
    let p = dir("golden").join(name);
    if blessing() {
        std::fs::write(&p, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let want = std::fs::read(&p).map_err(|e| format!("{}: {e}", p.display()))?;
    if want == actual {
        Ok(())
    } else {
        Err(format!(
            "{} differs\n--- golden\n{}\n--- actual\n{}",
            p.display(),
            String::from_utf8_lossy(&want),
            String::from_utf8_lossy(actual)
        ))
    }
}

/// Runs the CLI with `--out` into a temp file and returns its exit code and output bytes.
pub fn to_file(args: &[&str]) -> (Output, Vec<u8>) {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out.json");
    let mut full: Vec<&str> = args.to_vec();
    full.extend(["--out", path(&out)]);
    let o = gicoord(&full);
    let bytes = std::fs::read(&out).unwrap_or_default();
    (o, bytes)
}
