//! End-to-end tests of the `signpose` binary: exit codes, determinism, and
//! the train -> eval -> predict pipeline on a small synthetic corpus.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn signpose(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_signpose"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert_success(out);
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not json ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

/// Generate and split a small corpus; returns the manifest path.
fn small_corpus(dir: &Path, glosses: usize, instances: usize) -> String {
    let out = signpose(
        dir,
        &[
            "synth",
            "--glosses",
            &glosses.to_string(),
            "--instances",
            &instances.to_string(),
            "--frames",
            "20",
            "--signers",
            "3",
            "--seed",
            "5",
            "--out-manifest",
            "raw.json",
            "--out-poses",
            "poses",
        ],
    );
    assert_success(&out);
    let out = signpose(
        dir,
        &[
            "split",
            "--manifest",
            "raw.json",
            "--seed",
            "9",
            "--out",
            "corpus.json",
        ],
    );
    assert_success(&out);
    "corpus.json".to_string()
}

#[test]
fn split_is_deterministic_and_leaves_its_input_alone() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    small_corpus(dir, 3, 6);
    let raw_before = fs::read(dir.join("raw.json")).unwrap();

    let a = signpose(
        dir,
        &[
            "split",
            "--manifest",
            "raw.json",
            "--seed",
            "7",
            "--out",
            "a.json",
        ],
    );
    assert_success(&a);
    let b = signpose(
        dir,
        &[
            "split",
            "--manifest",
            "raw.json",
            "--seed",
            "7",
            "--out",
            "b.json",
        ],
    );
    assert_success(&b);

    assert_eq!(
        fs::read(dir.join("a.json")).unwrap(),
        fs::read(dir.join("b.json")).unwrap()
    );
    // A different seed gives a different assignment.
    let c = signpose(
        dir,
        &[
            "split",
            "--manifest",
            "raw.json",
            "--seed",
            "8",
            "--out",
            "c.json",
        ],
    );
    assert_success(&c);
    assert_ne!(
        fs::read(dir.join("a.json")).unwrap(),
        fs::read(dir.join("c.json")).unwrap()
    );
    // The input file is untouched.
    assert_eq!(raw_before, fs::read(dir.join("raw.json")).unwrap());
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    for out in ["one", "two"] {
        let r = signpose(
            dir,
            &[
                "synth",
                "--glosses",
                "2",
                "--instances",
                "3",
                "--frames",
                "10",
                "--signers",
                "2",
                "--seed",
                "42",
                "--out-manifest",
                &format!("{out}.json"),
                "--out-poses",
                out,
            ],
        );
        assert_success(&r);
    }
    assert_eq!(
        fs::read(dir.join("one.json")).unwrap(),
        fs::read(dir.join("two.json")).unwrap()
    );
    for entry in fs::read_dir(dir.join("one")).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            fs::read(dir.join("one").join(&name)).unwrap(),
            fs::read(dir.join("two").join(&name)).unwrap(),
            "{name:?} differs between runs"
        );
    }
}

#[test]
fn subset_keeps_the_most_sampled_glosses() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let manifest = serde_json::json!([
        {"gloss": "rare", "instances": [
            {"instance_id": "r1", "signer_id": 1, "variation_id": 0,
             "frame_start": 0, "frame_end": 9, "bbox": [0.0, 0.0, 100.0, 100.0]}
        ]},
        {"gloss": "common", "instances": [
            {"instance_id": "c1", "signer_id": 1, "variation_id": 0,
             "frame_start": 0, "frame_end": 9, "bbox": [0.0, 0.0, 100.0, 100.0]},
            {"instance_id": "c2", "signer_id": 2, "variation_id": 0,
             "frame_start": 0, "frame_end": 9, "bbox": [0.0, 0.0, 100.0, 100.0]}
        ]}
    ]);
    fs::write(
        dir.join("m.json"),
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .unwrap();
    let out = signpose(
        dir,
        &[
            "subset",
            "--manifest",
            "m.json",
            "--size",
            "1",
            "--out",
            "top.json",
        ],
    );
    assert_success(&out);
    let kept: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("top.json")).unwrap()).unwrap();
    assert_eq!(kept.as_array().unwrap().len(), 1);
    assert_eq!(kept[0]["gloss"], "common");

    // The frequency filter removes "rare" before selection, so asking for
    // two glosses afterwards must fail (only one survives).
    let out = signpose(
        dir,
        &[
            "subset",
            "--manifest",
            "m.json",
            "--size",
            "2",
            "--min-videos",
            "2",
            "--out",
            "none.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let out = signpose(
        dir,
        &[
            "subset",
            "--manifest",
            "m.json",
            "--size",
            "1",
            "--min-videos",
            "2",
            "--min-examples",
            "1",
            "--out",
            "filtered.json",
        ],
    );
    assert_success(&out);
    let kept: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("filtered.json")).unwrap()).unwrap();
    assert_eq!(kept.as_array().unwrap().len(), 1);
    assert_eq!(kept[0]["gloss"], "common");
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let manifest = small_corpus(dir, 3, 6);

    let train = signpose(
        dir,
        &[
            "train",
            "--manifest",
            &manifest,
            "--poses",
            "poses",
            "--model",
            "gru",
            "--seed",
            "3",
            "--out",
            "model.ckpt",
            "--epochs",
            "8",
            "--patience",
            "8",
            "--window",
            "16",
            "--log",
            "train.jsonl",
            "--format",
            "structured",
        ],
    );
    let summary = stdout_json(&train);
    assert_eq!(summary["classes"], 3);
    assert_eq!(summary["model"], "gru");

    // The epoch log is one json record per epoch, and the best one matches
    // the summary.
    let log = fs::read_to_string(dir.join("train.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = log
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(
        records.len(),
        summary["epochs_run"].as_u64().unwrap() as usize
    );
    let best = records
        .iter()
        .map(|r| r["val_top1"].as_f64().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best, summary["best_val_top1"].as_f64().unwrap());

    // Evaluating the checkpoint on the val split reproduces the summary's
    // best val top-1 exactly.
    let eval = signpose(
        dir,
        &[
            "eval",
            "--checkpoint",
            "model.ckpt",
            "--manifest",
            &manifest,
            "--poses",
            "poses",
            "--split",
            "val",
            "--topk",
            "1,3",
            "--format",
            "structured",
        ],
    );
    let report = stdout_json(&eval);
    assert_eq!(report["accuracies"][0][1], summary["best_val_top1"]);
    // Three classes: top-3 is always 1.0.
    assert_eq!(report["accuracies"][1][1], 1.0);

    let predict = signpose(
        dir,
        &[
            "predict",
            "--checkpoint",
            "model.ckpt",
            "--pose",
            "poses/synth_c000_i000.json",
            "--topk",
            "3",
            "--format",
            "structured",
        ],
    );
    let ranked = stdout_json(&predict);
    assert_eq!(ranked["video_id"], "synth_c000_i000");
    let predictions = ranked["predictions"].as_array().unwrap();
    assert_eq!(predictions.len(), 3);
    assert_eq!(predictions[0]["rank"], 1);
    assert!(predictions[0]["gloss"]
        .as_str()
        .unwrap()
        .starts_with("gloss_"));
}

#[test]
fn training_is_reproducible_across_processes() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let manifest = small_corpus(dir, 2, 6);
    for run in ["a", "b"] {
        let out = signpose(
            dir,
            &[
                "train",
                "--manifest",
                &manifest,
                "--poses",
                "poses",
                "--model",
                "tgcn",
                "--seed",
                "11",
                "--out",
                &format!("{run}.ckpt"),
                "--epochs",
                "3",
                "--patience",
                "3",
                "--window",
                "16",
                "--log",
                &format!("{run}.jsonl"),
            ],
        );
        assert_success(&out);
    }
    assert_eq!(
        fs::read(dir.join("a.ckpt")).unwrap(),
        fs::read(dir.join("b.ckpt")).unwrap()
    );
    assert_eq!(
        fs::read(dir.join("a.jsonl")).unwrap(),
        fs::read(dir.join("b.jsonl")).unwrap()
    );
}

#[test]
fn cluster_signers_reports_and_writes_assignments() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let embeddings = serde_json::json!([
        {"id": "a", "embedding": [0.0, 0.0]},
        {"id": "b", "embedding": [0.1, 0.0]},
        {"id": "c", "embedding": [9.0, 9.0]}
    ]);
    fs::write(dir.join("e.json"), embeddings.to_string()).unwrap();
    let out = signpose(
        dir,
        &[
            "cluster-signers",
            "--embeddings",
            "e.json",
            "--threshold",
            "0.5",
            "--out",
            "clusters.json",
            "--format",
            "structured",
        ],
    );
    let report = stdout_json(&out);
    assert_eq!(report["clusters"], 2);
    assert_eq!(report["assignments"][0]["cluster"], 0);
    assert_eq!(report["assignments"][1]["cluster"], 0);
    assert_eq!(report["assignments"][2]["cluster"], 1);
    let written: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("clusters.json")).unwrap()).unwrap();
    assert_eq!(written, report);
}

#[test]
fn gradcheck_passes_for_both_models() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    for model in ["tgcn", "gru"] {
        let out = signpose(
            dir,
            &[
                "gradcheck",
                "--model",
                model,
                "--k",
                "5",
                "--frames",
                "4",
                "--classes",
                "3",
                "--format",
                "structured",
            ],
        );
        let report = stdout_json(&out);
        assert_eq!(report["passed"], true);
        assert!(report["max_rel_err"].as_f64().unwrap() <= 1e-4);
    }
}

#[test]
fn exit_codes_separate_usage_validation_and_io() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();

    // Missing required flag: usage error, exit 1.
    let out = signpose(dir, &["split", "--manifest", "m.json", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(1));

    // Unknown subcommand: exit 1.
    let out = signpose(dir, &["nonsense"]);
    assert_eq!(out.status.code(), Some(1));

    // Unknown flag: exit 1.
    let out = signpose(dir, &["gradcheck", "--model", "tgcn", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));

    // Missing input file: exit 2.
    let out = signpose(dir, &["stats", "--manifest", "absent.json"]);
    assert_eq!(out.status.code(), Some(2));

    // Malformed json input: exit 2.
    fs::write(dir.join("bad.json"), "{not json").unwrap();
    let out = signpose(dir, &["stats", "--manifest", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));

    // Domain validation failure: exit 1.
    fs::write(dir.join("tiny.json"), "[]").unwrap();
    let out = signpose(
        dir,
        &[
            "subset",
            "--manifest",
            "tiny.json",
            "--size",
            "5",
            "--out",
            "x.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));

    // A gradcheck geometry that cannot be built: exit 1.
    let out = signpose(dir, &["gradcheck", "--model", "tgcn", "--classes", "1"]);
    assert_eq!(out.status.code(), Some(1));

    // Help is a success.
    let out = signpose(dir, &["--help"]);
    assert_eq!(out.status.code(), Some(0));
}
