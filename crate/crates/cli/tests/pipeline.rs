mod common;

use std::fs;
use std::process::Command as Process;

use common::{first_difference, run_pipeline, write_fixture};
use usvsthem_cli::manifest::Manifest;
use usvsthem_cli::pipeline::DatasetSummary;

fn bin() -> Process {
    let mut p = Process::new(env!("CARGO_BIN_EXE_usvsthem"));
    p.env_remove("USVSTHEM_OUT").env("RUST_LOG", "warn");
    p
}

#[test]
fn full_pipeline_runs_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_fixture(tmp.path());
    let (a, b) = (tmp.path().join("run_a"), tmp.path().join("run_b"));
    run_pipeline(&config, &a);
    run_pipeline(&config, &b);
    assert_eq!(first_difference(&a, &b), None);

    let drop = fs::read_to_string(a.join("corpus/drop_report.csv")).unwrap();
    assert_eq!(drop, "reason,count\nno_group,0\nmulti_group,1\ntoo_short,1\ntoo_long,0\nunknown_bias,1\n");
    let raw = fs::read_to_string(a.join("raw/comments.jsonl")).unwrap();
    assert_eq!(raw.lines().count(), 6 * 5 * 5 + 3);

    let summary: DatasetSummary = serde_json::from_slice(&fs::read(a.join("analysis/summary.json")).unwrap()).unwrap();
    let kept = fs::read_to_string(a.join("quality/attitude_kept.csv")).unwrap();
    let sample = fs::read_to_string(a.join("corpus/sample.jsonl")).unwrap();
    assert_eq!(sample.lines().count(), 6 * 5 * common::PER_CELL);
    let kept_units: std::collections::BTreeSet<&str> = kept.lines().skip(1).filter_map(|l| l.split(',').next()).collect();
    let sampled_and_kept = sample.lines().filter(|l| kept_units.iter().any(|u| l.contains(&format!("\"id\":\"{u}\"")))).count();
    assert_eq!(summary.n, sampled_and_kept);
    assert!(summary.n > 100, "{}", summary.n);
    assert_eq!(summary.split_sizes.values().sum::<usize>(), summary.n);

    let removed = fs::read_to_string(a.join("quality/attitude_removed.json")).unwrap();
    assert!(removed.contains("w09"), "the random annotator should be removed: {removed}");

    let results = fs::read_to_string(a.join("train/results.csv")).unwrap();
    assert_eq!(results.lines().next(), Some("setup,regression_pearson_r,classification_accuracy"));
    assert_eq!(results.lines().count(), 3);
    let compare = fs::read_to_string(a.join("compare/compare.csv")).unwrap();
    assert!(compare.contains("Williams") && compare.contains("permutation"), "{compare}");
    for layer in ["0", "1", "regression", "emotion", "group"] {
        assert!(a.join(format!("embed/regression/MTL-EG/scale/layer_{layer}.svg")).exists());
    }
    assert!(a.join("embed/regression/STL/group/layer_regression.csv").exists());
}

#[test]
fn manifest_records_hashes_and_is_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_fixture(tmp.path());
    let out = tmp.path().join("out");
    for _ in 0..2 {
        let st = bin().args(["-c", config.to_str().unwrap(), "-o", out.to_str().unwrap(), "ingest"]).status().unwrap();
        assert!(st.success());
    }
    let text = fs::read_to_string(out.join("manifests/ingest.json")).unwrap();
    let m: Manifest = serde_json::from_str(&text).unwrap();
    assert_eq!(m.command, "ingest");
    assert_eq!(m.outputs.len(), 1);
    assert_eq!(m.outputs[0].path, "$OUT/raw/comments.jsonl");
    assert_eq!(m.inputs.iter().map(|f| f.path.as_str()).collect::<Vec<_>>(), ["archive/page_0.json", "archive/page_1.json"]);
    assert!(m.inputs.iter().chain(&m.outputs).all(|f| f.sha256.len() == 64));
    assert!(m.config.get("out_dir").is_none());

    let other = tmp.path().join("elsewhere");
    let st = bin().args(["-c", config.to_str().unwrap(), "ingest"]).env("USVSTHEM_OUT", &other).status().unwrap();
    assert!(st.success());
    assert_eq!(fs::read_to_string(other.join("manifests/ingest.json")).unwrap(), text);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();

    let unknown = bin().args(["-o", out, "frobnicate"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(64));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "jobs = 0\n").unwrap();
    let o = bin().args(["-c", bad.to_str().unwrap(), "-o", out, "train", "--synthetic"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    fs::write(&bad, "no_such_key = 1\n").unwrap();
    assert_eq!(bin().args(["-c", bad.to_str().unwrap(), "analyze"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["-o", out, "--seeds", "1,1", "analyze"]).output().unwrap().status.code(), Some(2));

    let o = bin().args(["-o", out, "analyze"]).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("aggregate"));
    assert_eq!(bin().args(["-c", "/definitely/not/here.toml", "analyze"]).output().unwrap().status.code(), Some(3));
    assert_eq!(bin().args(["-o", out, "filter"]).output().unwrap().status.code(), Some(3));
    assert_eq!(bin().args(["-o", out, "embed"]).output().unwrap().status.code(), Some(3));

    fs::write(&bad, "[paths]\nbias_map = \"missing.csv\"\n").unwrap();
    assert_eq!(bin().args(["-c", bad.to_str().unwrap(), "-o", out, "filter"]).output().unwrap().status.code(), Some(3));
}

#[test]
fn synthetic_training_writes_one_run_directory_per_job() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(
        &cfg,
        "seeds = [3]\njobs = 2\n[train]\nsource = \"synthetic\"\nmains = [\"classification\"]\nepochs = 1\n\
         [train.synthetic]\nn_train = 40\nn_dev = 20\nn_test = 20\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = bin().args(["-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap(), "train", "--setups", "STL,MTL-G"]).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for setup in ["STL", "MTL-G"] {
        let run = out.join(format!("train/classification/{setup}/seed_3"));
        for f in ["log.csv", "model.ckpt", "config.json", "metrics.json", "predictions_dev.csv", "predictions_test.csv"] {
            assert!(run.join(f).exists(), "{setup}/{f}");
        }
        let preds = fs::read_to_string(run.join("predictions_test.csv")).unwrap();
        assert_eq!(preds.lines().next(), Some("unit_id,gold,binary,prediction"));
        assert_eq!(preds.lines().count(), 21);
    }
    assert!(!out.join("train/classification/MTL-E").exists());
}
