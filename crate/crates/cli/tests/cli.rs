use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn cdcoref(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdcoref"))
        .args(args)
        .arg("--log-level")
        .arg("warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cdcoref(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(args: &[&str], code: i32) -> String {
    let out = cdcoref(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stderr).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small, well-separated synthetic workspace.
fn synth_workspace(dir: &Path) -> PathBuf {
    let ws = dir.join("ws");
    ok(&[
        "synth",
        "--out",
        p(&ws),
        "--cluster-signal",
        "1.0",
        "--noise",
        "0.1",
        "--seed",
        "3",
    ]);
    ws
}

/// Fast gold-mention training flags.
const QUICK: [&str; 8] = ["--mentions", "gold", "--epochs", "3", "--hidden", "64", "--seed", "1"];

#[test]
fn synth_writes_a_prepared_workspace() {
    let tmp = TempDir::new().unwrap();
    let ws = synth_workspace(tmp.path());
    for name in [
        "corpus.json",
        "embeddings.cdce",
        "index.json",
        "index.json.manifest.json",
    ] {
        assert!(ws.join(name).exists(), "{name} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ws.join("index.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["outputs"].as_object().unwrap().len(), 3);
    assert!(fs::read_dir(&ws)
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".partial")));
}

#[test]
fn prepare_validates_alignment() {
    let tmp = TempDir::new().unwrap();
    let ws = synth_workspace(tmp.path());
    let (corpus, emb) = (ws.join("corpus.json"), ws.join("embeddings.cdce"));
    let out = tmp.path().join("prepared");
    let stdout = ok(&[
        "prepare",
        "--corpus",
        p(&corpus),
        "--embeddings",
        p(&emb),
        "--out",
        p(&out),
    ]);
    assert!(stdout.contains("20 documents"));
    assert!(out.join("index.json").exists());

    // Embeddings for a smaller corpus miss documents of the full one.
    let small = tmp.path().join("small");
    ok(&["synth", "--out", p(&small), "--topics", "3", "--seed", "3"]);
    let err = fails_with(
        &[
            "prepare",
            "--corpus",
            p(&corpus),
            "--embeddings",
            p(&small.join("embeddings.cdce")),
            "--out",
            p(&out),
        ],
        2,
    );
    assert!(err.contains("no embeddings for document `t3s"), "{err}");

    let mut bytes = fs::read(&emb).unwrap();
    bytes[..4].copy_from_slice(b"XXXX");
    let bad = tmp.path().join("bad.cdce");
    fs::write(&bad, bytes).unwrap();
    let err = fails_with(
        &[
            "prepare",
            "--corpus",
            p(&corpus),
            "--embeddings",
            p(&bad),
            "--out",
            p(&out),
        ],
        2,
    );
    assert!(err.contains("bad magic"), "{err}");
}

#[test]
fn stale_workspace_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let ws = synth_workspace(tmp.path());
    let emb = ws.join("embeddings.cdce");
    let mut bytes = fs::read(&emb).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&emb, bytes).unwrap();
    let err = fails_with(
        &[
            "cluster-docs",
            "--workspace",
            p(&ws),
            "--out",
            p(&tmp.path().join("a.csv")),
        ],
        2,
    );
    assert!(err.contains("changed since the workspace was prepared"), "{err}");
}

#[test]
fn predict_requires_a_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let ws = synth_workspace(tmp.path());
    let err = fails_with(
        &[
            "predict",
            "--workspace",
            p(&ws),
            "--mentions",
            "predicted",
            "--out",
            p(&tmp.path().join("pred")),
        ],
        2,
    );
    assert!(err.contains("checkpoint required"), "{err}");
}

#[test]
fn bad_flags_are_input_errors() {
    fails_with(&["evaluate", "--scope", "sideways"], 2);
    let err = fails_with(
        &["train", "--workspace", "nowhere", "--out", "x", "--dropout", "1.5"],
        2,
    );
    assert!(err.contains("dropout"), "{err}");
    let err = fails_with(&["cluster-docs", "--workspace", "nowhere", "--out", "x"], 2);
    assert!(err.contains("index.json"), "{err}");
}

#[test]
fn help_documents_every_config_key() {
    let help = ok(&["train", "--help"]);
    for key in [
        "--config",
        "--mode",
        "--mentions",
        "--epochs",
        "--batch-size",
        "--learning-rate",
        "--dropout",
        "--hidden",
        "--width-dim",
        "--max-span-width",
        "--lambda",
        "--tau",
        "--neg-ratio",
        "--pretrain-epochs",
        "--pretrain-patience",
        "--seed",
        "--loss",
        "--no-pretrain",
        "--frozen-pruning",
        "--no-neg-sampling",
        "--workers",
    ] {
        assert!(help.contains(key), "`train --help` lacks {key}");
    }
    for sub in [
        "synth",
        "prepare",
        "cluster-docs",
        "pretrain",
        "predict",
        "evaluate",
        "ablate",
    ] {
        assert!(ok(&[sub, "--help"]).contains("Usage"));
    }
}

#[test]
fn cluster_docs_and_external_assignment() {
    let tmp = TempDir::new().unwrap();
    let ws = synth_workspace(tmp.path());
    let csv = tmp.path().join("assign.csv");
    ok(&[
        "cluster-docs",
        "--workspace",
        p(&ws),
        "--split",
        "dev",
        "--k",
        "2",
        "--out",
        p(&csv),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("doc_id,cluster"));
    assert_eq!(lines.count(), 4);
    assert!(tmp.path().join("assign.csv.manifest.json").exists());

    let ckpt = tmp.path().join("model.cdcm");
    let mut args = vec!["train", "--workspace", p(&ws), "--out", p(&ckpt)];
    args.extend(QUICK);
    ok(&args);
    let pred = tmp.path().join("pred");
    ok(&[
        "predict",
        "--workspace",
        p(&ws),
        "--checkpoint",
        p(&ckpt),
        "--split",
        "dev",
        "--assignment",
        p(&csv),
        "--out",
        p(&pred),
    ]);
    assert_eq!(fs::read_to_string(pred.join("assignment.csv")).unwrap(), text);

    // An assignment that misses a document of the split is rejected.
    let partial = tmp.path().join("partial.csv");
    fs::write(&partial, text.lines().take(3).collect::<Vec<_>>().join("\n")).unwrap();
    let err = fails_with(
        &[
            "predict",
            "--workspace",
            p(&ws),
            "--checkpoint",
            p(&ckpt),
            "--split",
            "dev",
            "--assignment",
            p(&partial),
            "--out",
            p(&pred),
        ],
        2,
    );
    assert!(err.contains("has no cluster"), "{err}");
}

#[test]
fn gold_training_end_to_end_reaches_high_f1() {
    let tmp = TempDir::new().unwrap();
    let ws = synth_workspace(tmp.path());
    let ckpt = tmp.path().join("model.cdcm");
    let stdout = ok(&[
        "train",
        "--workspace",
        p(&ws),
        "--mode",
        "event",
        "--mentions",
        "gold",
        "--epochs",
        "10",
        "--out",
        p(&ckpt),
    ]);
    assert!(stdout.contains("CoNLL F1"));
    for name in ["model.cdcm.log.jsonl", "model.cdcm.manifest.json"] {
        assert!(tmp.path().join(name).exists(), "{name} missing");
    }
    let pred = tmp.path().join("pred");
    ok(&[
        "predict",
        "--workspace",
        p(&ws),
        "--checkpoint",
        p(&ckpt),
        "--split",
        "dev",
        "--doc-clusters",
        "gold",
        "--pair-scores",
        "--out",
        p(&pred),
    ]);
    for name in [
        "clusters.json",
        "response.conll",
        "pair_scores.csv",
        "clusters.json.manifest.json",
    ] {
        assert!(pred.join(name).exists(), "{name} missing");
    }
    let report_path = tmp.path().join("report.json");
    let stdout = ok(&[
        "evaluate",
        "--workspace",
        p(&ws),
        "--response",
        p(&pred.join("clusters.json")),
        "--split",
        "dev",
        "--out",
        p(&report_path),
    ]);
    assert!(stdout.contains("CoNLL F1"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    let f1 = report["conll_f1"].as_f64().unwrap();
    assert!(f1 >= 0.9, "dev CoNLL F1 {f1}");

    // The CoNLL response scores the same.
    let conll_report = tmp.path().join("conll_report.json");
    ok(&[
        "evaluate",
        "--workspace",
        p(&ws),
        "--response",
        p(&pred.join("response.conll")),
        "--split",
        "dev",
        "--out",
        p(&conll_report),
    ]);
    let again: serde_json::Value = serde_json::from_str(&fs::read_to_string(&conll_report).unwrap()).unwrap();
    assert_eq!(again["conll_f1"], report["conll_f1"]);

    let wd_path = tmp.path().join("wd.json");
    ok(&[
        "evaluate",
        "--workspace",
        p(&ws),
        "--response",
        p(&pred.join("clusters.json")),
        "--split",
        "dev",
        "--scope",
        "wd",
        "--singletons",
        "exclude",
        "--out",
        p(&wd_path),
    ]);
    let wd: serde_json::Value = serde_json::from_str(&fs::read_to_string(&wd_path).unwrap()).unwrap();
    assert_eq!(wd["scope"], "wd");
    assert_eq!(wd["singleton_mode"], "exclude");
}

#[test]
fn runs_are_reproducible_across_worker_counts() {
    let tmp = TempDir::new().unwrap();
    let ws = synth_workspace(tmp.path());
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "4"].iter().enumerate() {
        // Same file names in both runs: the checkpoint records its manifest name.
        let ckpt = tmp.path().join(format!("run{i}")).join("model.cdcm");
        let mut args = vec!["--workers", workers, "train", "--workspace", p(&ws), "--out", p(&ckpt)];
        args.extend(QUICK);
        ok(&args);
        let pred = tmp.path().join(format!("run{i}")).join("pred");
        ok(&[
            "--workers",
            workers,
            "predict",
            "--workspace",
            p(&ws),
            "--checkpoint",
            p(&ckpt),
            "--out",
            p(&pred),
        ]);
        outputs.push((
            fs::read(&ckpt).unwrap(),
            fs::read(pred.join("clusters.json")).unwrap(),
            fs::read(pred.join("response.conll")).unwrap(),
        ));
    }
    assert!(outputs[0] == outputs[1], "outputs differ between worker counts");
}

#[test]
fn pretrain_then_train_from_init() {
    let tmp = TempDir::new().unwrap();
    let ws = synth_workspace(tmp.path());
    let pre = tmp.path().join("pre.cdcm");
    let small = ["--hidden", "64", "--pretrain-epochs", "2", "--seed", "2"];
    let mut args = vec!["pretrain", "--workspace", p(&ws), "--out", p(&pre)];
    args.extend(small);
    assert!(ok(&args).contains("candidate recall"));
    let log = fs::read_to_string(tmp.path().join("pre.cdcm.log.jsonl")).unwrap();
    assert!(log.lines().count() >= 1 && log.lines().all(|l| l.contains("\"stage\":\"pretrain\"")));

    let model = tmp.path().join("model.cdcm");
    let mut args = vec![
        "train",
        "--workspace",
        p(&ws),
        "--init",
        p(&pre),
        "--epochs",
        "1",
        "--out",
        p(&model),
    ];
    args.extend(small);
    ok(&args);

    // A checkpoint of another shape does not fit the configuration.
    let err = fails_with(
        &[
            "train",
            "--workspace",
            p(&ws),
            "--init",
            p(&pre),
            "--hidden",
            "32",
            "--epochs",
            "1",
            "--out",
            p(&model),
        ],
        2,
    );
    assert!(err.contains("does not match"), "{err}");
}

#[test]
fn ablate_reports_four_rows() {
    let tmp = TempDir::new().unwrap();
    let ws = tmp.path().join("ws");
    ok(&["synth", "--out", p(&ws), "--sentences-per-doc", "2"]);
    let out = tmp.path().join("ablation.txt");
    let stdout = ok(&[
        "ablate",
        "--workspace",
        p(&ws),
        "--epochs",
        "1",
        "--pretrain-epochs",
        "1",
        "--hidden",
        "16",
        "--seeds",
        "0,1",
        "--out",
        p(&out),
    ]);
    for row in [
        "our model",
        "- pre-train of mention scorer",
        "- dynamic pruning",
        "- negative sampling",
    ] {
        assert!(stdout.contains(row), "missing row {row}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("ablation.txt.json")).unwrap()).unwrap();
    assert_eq!(json["mean"].as_array().unwrap().len(), 4);
    assert_eq!(json["per_seed"].as_object().unwrap().len(), 2);
}
