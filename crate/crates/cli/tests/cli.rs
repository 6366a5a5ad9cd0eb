use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const KEYS: [&str; 8] = ["L1L", "L2L", "O1L", "O2L", "L1S", "L2S", "O1S", "O2S"];

const CONFIG: &str = r#"{
  "scene": {"spec": {"nx": 16, "ny": 16, "seed": 3, "clouds": {"blob_count": 4, "horizontal_extent": 1.5}},
            "steps": 6, "dt": 1800},
  "sampling": {"n": 200},
  "train": {"hidden": 8, "max_epochs": 3, "batch": 64},
  "driver": {"steps": 6, "dt": 1800, "cells": [[0, 0], [5, 9]]}
}"#;

fn radnet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radnet"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let o = radnet(args, cwd);
    assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    o
}

/// Series, datasets and a full bank in a fresh directory.
fn pipeline() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.json"), CONFIG).unwrap();
    ok(&["gen", "--config", "c.json", "--out", "series"], d);
    ok(&["sample", "--config", "c.json", "--series", "series", "--out", "data"], d);
    for k in KEYS {
        ok(&["train", "--config", "c.json", "--key", k, "--data", "data", "--out", "models"], d);
    }
    dir
}

#[test]
fn every_subcommand_has_help() {
    let d = tempfile::tempdir().unwrap();
    for sub in ["gen", "sample", "train", "finetune", "infer", "eval", "track", "simulate", "bench"] {
        let o = radnet(&[sub, "--help"], d.path());
        assert_eq!(code(&o), 0, "{sub}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"), "{sub}");
    }
    assert_eq!(code(&radnet(&["--help"], d.path())), 0);
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    assert_eq!(code(&radnet(&[], p)), 1);
    assert_eq!(code(&radnet(&["fly"], p)), 1);
    assert_eq!(code(&radnet(&["gen", "--out", "x", "--bogus"], p)), 1);
    let o = radnet(&["train", "--key", "L3X", "--data", ".", "--out", "m"], p);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("L3X"));
    // neither data source given
    assert_eq!(code(&radnet(&["train", "--key", "L1L", "--out", "m"], p)), 1);
}

#[test]
fn data_errors_exit_two_with_the_path() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let o = radnet(&["train", "--key", "O2L", "--data", "nowhere", "--out", "m"], p);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nowhere"), "{}", stderr(&o));

    fs::write(p.join("bad.json"), r#"{"train": {"hiden": 3}}"#).unwrap();
    let o = radnet(&["gen", "--config", "bad.json", "--out", "s"], p);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("hiden"));

    fs::write(p.join("junk.rnds"), b"not a container").unwrap();
    let o = radnet(&["infer", "--reference", "--scene", "junk.rnds", "--out", "f"], p);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("junk.rnds"));
}

#[test]
fn full_pipeline() {
    let dir = pipeline();
    let d = dir.path();

    // artefacts and echoed config
    for k in KEYS {
        for suffix in ["rnnw", "history.csv", "meta.json"] {
            assert!(d.join(format!("models/{k}.{suffix}")).exists(), "{k}.{suffix}");
        }
    }
    let echoed = fs::read_to_string(d.join("models/config.json")).unwrap();
    assert!(echoed.contains("\"hidden\": 8") && echoed.contains("\"lr0\""));
    let hist = fs::read_to_string(d.join("models/O2L.history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 4);

    ok(&["infer", "--bank", "models", "--scene", "series/scene_0003.rnds", "--out", "inf"], d);
    let csv = fs::read_to_string(d.join("inf/field.csv")).unwrap();
    assert_eq!(csv.lines().count(), 257);

    let o = ok(&["eval", "--bank", "models", "--scene", "series", "--out", "ev"], d);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("variable,pearson"));
    for f in ["pearson.csv", "error_summary.csv", "errmap_SWDNB.csv", "temporal_HR_COL.csv"] {
        assert!(d.join("ev").join(f).exists(), "{f}");
    }

    ok(&["simulate", "--config", "c.json", "--bank", "models", "--scene", "series/scene_0000.rnds", "--out", "sim"], d);
    let sim = fs::read_to_string(d.join("sim/simulate.csv")).unwrap();
    assert_eq!(sim.lines().count(), 3);
    assert!(d.join("sim/divergence_5_9.csv").exists());

    let o = ok(&["bench", "--bank", "models", "--scene", "series/scene_0003.rnds", "--reps", "3"], d);
    assert!(String::from_utf8_lossy(&o.stdout).contains("speedup"));

    ok(&["track", "--series", "series", "--out", "tr"], d);
    ok(&["track", "--series", "series", "--other", "series", "--out", "tr2", "--check"], d);
}

#[test]
fn checks_exit_three_when_unmet() {
    let dir = pipeline();
    let d = dir.path();
    fs::write(
        d.join("strict.json"),
        r#"{"eval": {"max_val_nrmse": 1e-9, "min_speedup": 1e9, "min_pearson": 1.0000001}}"#,
    )
    .unwrap();
    let o = radnet(
        &["train", "--config", "strict.json", "--key", "L2L", "--train", "data/L2L.train.rnds", "--val", "data/L2L.val.rnds", "--out", "m2", "--check"],
        d,
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    // the model is still written
    assert!(d.join("m2/L2L.rnnw").exists());
    let o = radnet(&["bench", "--config", "strict.json", "--bank", "models", "--scene", "series/scene_0001.rnds", "--reps", "3", "--check"], d);
    assert_eq!(code(&o), 3);
    let o = radnet(&["eval", "--config", "strict.json", "--bank", "models", "--scene", "series/scene_0002.rnds", "--out", "e", "--check"], d);
    assert_eq!(code(&o), 3);
}

#[test]
fn finetune_records_lineage() {
    let dir = pipeline();
    let d = dir.path();
    ok(&["finetune", "--config", "c.json", "--base", "models/O2S.rnnw", "--data", "data/O2S.rnds", "--out", "ft"], d);
    let meta = fs::read_to_string(d.join("ft/O2S.meta.json")).unwrap();
    assert!(meta.contains("fine-tuned from O2S"), "{meta}");
    assert!(meta.contains("models/O2S.rnnw"), "{meta}");
}

#[test]
fn corrupted_bank_is_a_data_error() {
    let dir = pipeline();
    let d = dir.path();
    let path = d.join("models/L1S.rnnw");
    let mut bytes = fs::read(&path).unwrap();
    let k = bytes.len() / 2;
    bytes[k] ^= 0x10;
    fs::write(&path, bytes).unwrap();
    let o = radnet(&["infer", "--bank", "models", "--scene", "series/scene_0000.rnds", "--out", "f"], d);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("L1S.rnnw"), "{}", stderr(&o));
}

#[test]
fn rerun_with_echoed_config_is_bit_identical() {
    let dir = pipeline();
    let d = dir.path();
    ok(&["gen", "--config", "series/config.json", "--out", "series2"], d);
    ok(&["sample", "--config", "data/config.json", "--series", "series2", "--keys", "O2L", "--out", "data2"], d);
    ok(&["train", "--config", "models/config.json", "--key", "O2L", "--data", "data2", "--out", "models2"], d);
    for f in ["scene_0000.rnds", "scene_0005.rnds"] {
        assert_eq!(fs::read(d.join("series").join(f)).unwrap(), fs::read(d.join("series2").join(f)).unwrap());
    }
    for f in ["data/O2L.train.rnds", "models/O2L.rnnw", "models/O2L.history.csv"] {
        let g = f.replace('/', "2/");
        assert_eq!(fs::read(d.join(f)).unwrap(), fs::read(d.join(&g)).unwrap(), "{f}");
    }
}
