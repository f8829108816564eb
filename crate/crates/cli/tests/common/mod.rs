#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ranrec_core::graph::NetworkFile;

pub fn ranrec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ranrec"))
        .args(args)
        .current_dir(dir)
        .env("RANREC_LOG", "warn")
        .output()
        .expect("binary runs")
}

pub fn ok(dir: &Path, args: &[&str]) {
    let out = ranrec(dir, args);
    assert!(
        out.status.success(),
        "ranrec {args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes a copy of `network` without the last `drop` cells and their edges.
pub fn drop_cells(network: &Path, drop: usize, out: &Path) -> Vec<String> {
    let mut file: NetworkFile =
        serde_json::from_str(&std::fs::read_to_string(network).unwrap()).unwrap();
    let keep = file.cells.len() - drop;
    let dropped: Vec<String> = file.cells.drain(keep..).map(|c| c.cell_id).collect();
    file.edges
        .retain(|(a, b, _)| !dropped.contains(a) && !dropped.contains(b));
    std::fs::write(out, serde_json::to_string_pretty(&file).unwrap()).unwrap();
    dropped
}

/// synth → train → embed → recommend → detect → evaluate → project in
/// `dir`, using `synth.toml` and `run.toml` written from the given text.
pub fn pipeline(dir: &Path, synth_toml: &str, run_toml: &str) {
    std::fs::write(dir.join("synth.toml"), synth_toml).unwrap();
    std::fs::write(dir.join("run.toml"), run_toml).unwrap();
    ok(
        dir,
        &["synth", "--config", "synth.toml", "--out", "net.json"],
    );
    drop_cells(&dir.join("net.json"), 6, &dir.join("existing.json"));
    ok(
        dir,
        &[
            "train",
            "--network",
            "existing.json",
            "--config",
            "run.toml",
            "--model",
            "sgnn",
            "--out",
            "sgnn.ckpt.json",
        ],
    );
    ok(
        dir,
        &[
            "embed",
            "--network",
            "existing.json",
            "--checkpoint",
            "sgnn.ckpt.json",
            "--out",
            "store.json",
        ],
    );
    ok(
        dir,
        &[
            "recommend",
            "--store",
            "store.json",
            "--cells",
            "net.json",
            "--mode",
            "majority",
            "--k",
            "3",
            "--out",
            "recs.json",
        ],
    );
    ok(
        dir,
        &[
            "detect",
            "--store",
            "store.json",
            "--config",
            "run.toml",
            "--out",
            "anomalies.json",
        ],
    );
    ok(
        dir,
        &[
            "evaluate",
            "--network",
            "net.json",
            "--config",
            "run.toml",
            "--out",
            "table.csv",
        ],
    );
    ok(
        dir,
        &[
            "project",
            "--store",
            "store.json",
            "--out",
            "projection.csv",
        ],
    );
}

/// Contents of every file in `dir` except run manifests, keyed by name.
pub fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path: PathBuf = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.ends_with(".manifest.json") {
            continue;
        }
        out.insert(name, std::fs::read(&path).unwrap());
    }
    out
}
