mod common;

use common::{artifacts, drop_cells, ok, pipeline, ranrec, stderr};
use sha2::{Digest, Sha256};

const SMALL_NET: &str = "sites = 12\nseed = 4\n";
const QUICK_RUN: &str = "epochs = 5\nseed = 4\nk = 3\n";

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d, SMALL_NET, QUICK_RUN);
    for name in [
        "net.json",
        "net.truth.json",
        "sgnn.ckpt.json",
        "sgnn.ckpt.json.report.json",
        "store.json",
        "recs.json",
        "anomalies.json",
        "table.csv",
        "table.untrained.projection.csv",
        "table.gae.projection.csv",
        "table.sgnn.projection.csv",
        "projection.csv",
    ] {
        assert!(d.join(name).is_file(), "missing {name}");
    }

    let recs: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("recs.json")).unwrap()).unwrap();
    let recs = recs.as_array().unwrap();
    assert_eq!(recs.len(), 6);
    for r in recs {
        assert_eq!(r["mode"], "majority");
        assert_eq!(r["sources"].as_array().unwrap().len(), 3);
        assert!(!r["y_hat"].as_object().unwrap().is_empty());
    }

    let table = std::fs::read_to_string(d.join("table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("model,type,split,accuracy"));
    assert_eq!(lines.count(), 6);
    assert!(table.contains("sgnn,test,net,"));

    let projection = std::fs::read_to_string(d.join("projection.csv")).unwrap();
    assert!(projection.starts_with("cell_id,pc1,pc2\n"));
    assert_eq!(projection.lines().count(), 1 + 12 * 6 - 6);
}

#[test]
fn manifests_hash_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("synth.toml"), SMALL_NET).unwrap();
    ok(d, &["synth", "--config", "synth.toml", "--out", "net.json"]);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("net.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["config"]["sites"], 12);
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    for o in outputs {
        let bytes = std::fs::read(d.join(o["path"].as_str().unwrap())).unwrap();
        assert_eq!(o["sha256"].as_str().unwrap(), hex_digest(&bytes));
    }
    assert_eq!(
        manifest["inputs"][0]["sha256"].as_str().unwrap(),
        hex_digest(SMALL_NET.as_bytes())
    );
}

fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), SMALL_NET, QUICK_RUN);
    pipeline(b.path(), SMALL_NET, QUICK_RUN);
    let (fa, fb) = (artifacts(a.path()), artifacts(b.path()));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        assert!(bytes == &fb[name], "{name} differs between runs");
    }
}

#[test]
fn seed_flag_changes_the_network() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("synth.toml"), SMALL_NET).unwrap();
    ok(d, &["synth", "--config", "synth.toml", "--out", "a.json"]);
    ok(
        d,
        &[
            "synth",
            "--config",
            "synth.toml",
            "--seed",
            "5",
            "--out",
            "b.json",
        ],
    );
    assert_ne!(
        std::fs::read(d.join("a.json")).unwrap(),
        std::fs::read(d.join("b.json")).unwrap()
    );
}

#[test]
fn k_larger_than_the_store_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("synth.toml"), "sites = 4\n").unwrap();
    std::fs::write(d.join("run.toml"), "epochs = 1\n").unwrap();
    ok(d, &["synth", "--config", "synth.toml", "--out", "net.json"]);
    drop_cells(&d.join("net.json"), 2, &d.join("existing.json"));
    ok(
        d,
        &[
            "train",
            "--network",
            "existing.json",
            "--config",
            "run.toml",
            "--out",
            "ckpt.json",
        ],
    );
    ok(
        d,
        &[
            "embed",
            "--network",
            "existing.json",
            "--checkpoint",
            "ckpt.json",
            "--out",
            "store.json",
        ],
    );

    let out = ranrec(
        d,
        &[
            "recommend",
            "--store",
            "store.json",
            "--cells",
            "net.json",
            "--mode",
            "majority",
            "--k",
            "23",
            "--out",
            "r.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(
        err.contains("K = 23") && err.contains("22 records"),
        "{err}"
    );
    assert!(!d.join("r.json").exists());

    let out = ranrec(
        d,
        &[
            "recommend",
            "--store",
            "store.json",
            "--cells",
            "net.json",
            "--k",
            "0",
            "--out",
            "r.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    ok(
        d,
        &[
            "recommend",
            "--store",
            "store.json",
            "--cells",
            "net.json",
            "--mode",
            "majority",
            "--k",
            "22",
            "--out",
            "r.json",
        ],
    );
}

#[test]
fn invalid_inputs_exit_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let out = ranrec(
        d,
        &["train", "--network", "missing.json", "--out", "c.json"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("missing.json"));

    std::fs::write(d.join("broken.json"), "{\"schema\": [], \"cells\": [").unwrap();
    let out = ranrec(d, &["train", "--network", "broken.json", "--out", "c.json"]);
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(d.join("bad.toml"), "epochs = \"many\"\n").unwrap();
    std::fs::write(d.join("synth.toml"), "sites = 3\n").unwrap();
    ok(d, &["synth", "--config", "synth.toml", "--out", "net.json"]);
    let out = ranrec(
        d,
        &[
            "train",
            "--network",
            "net.json",
            "--config",
            "bad.toml",
            "--out",
            "c.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("bad.toml"));

    std::fs::write(d.join("zero.toml"), "sites = 0\n").unwrap();
    let out = ranrec(d, &["synth", "--config", "zero.toml", "--out", "z.json"]);
    assert_eq!(out.status.code(), Some(1));

    let out = ranrec(
        d,
        &[
            "detect",
            "--store",
            "net.json",
            "--threshold",
            "1.5",
            "--out",
            "a.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));

    let out = ranrec(d, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("c.json").exists());
}

#[test]
fn checkpoint_schema_must_match_the_network() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("synth.toml"), "sites = 3\n").unwrap();
    std::fs::write(d.join("run.toml"), "epochs = 1\n").unwrap();
    ok(d, &["synth", "--config", "synth.toml", "--out", "net.json"]);
    ok(
        d,
        &[
            "train",
            "--network",
            "net.json",
            "--config",
            "run.toml",
            "--out",
            "ckpt.json",
        ],
    );

    let mut file: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("net.json")).unwrap()).unwrap();
    file["schema"].as_array_mut().unwrap().pop();
    std::fs::write(d.join("other.json"), serde_json::to_vec(&file).unwrap()).unwrap();
    let out = ranrec(
        d,
        &[
            "embed",
            "--network",
            "other.json",
            "--checkpoint",
            "ckpt.json",
            "--out",
            "s.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}
