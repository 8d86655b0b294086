use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sgg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgg"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = sgg(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    sgg(dir, args).status.code().unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

/// Small dataset plus a briefly trained checkpoint.
fn fixture() -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_path_buf();
    ok(&d, &["synth-data", "--count", "120", "--out", "data.jsonl", "--seed", "1"]);
    ok(
        &d,
        &[
            "train",
            "--data",
            "data.jsonl",
            "--out",
            "model.ckpt",
            "--epochs",
            "2",
            "--batches-per-epoch",
            "4",
            "--batch-size",
            "8",
            "--seed",
            "5",
            "--log",
            "log.jsonl",
        ],
    );
    (tmp, d)
}

#[test]
fn help_and_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let help = ok(d, &["--help"]);
    for sub in [
        "synth-data",
        "train",
        "sample",
        "nll",
        "corrupt",
        "anomaly",
        "mmd",
        "stats",
        "complete",
        "nearest",
        "export-dot",
    ] {
        assert!(help.contains(sub), "{sub} missing from --help");
        assert_eq!(code(d, &[sub, "--help"]), 0);
    }
    assert_eq!(code(d, &["frobnicate"]), 1);
    assert_eq!(code(d, &["synth-data", "--count", "many", "--out", "x"]), 1);
    assert_eq!(code(d, &["mmd", "a.jsonl"]), 1);
}

#[test]
fn data_errors_exit_2_and_name_the_input() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = sgg(d, &["stats", "--data", "missing.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.jsonl"));

    ok(d, &["synth-data", "--count", "3", "--out", "good.jsonl", "--seed", "2"]);
    let text = String::from_utf8(read(d, "good.jsonl")).unwrap();
    let header = text.lines().next().unwrap();
    let broken = format!("{header}\n{}\n", r#"{"nodes":["man","shirt"],"edges":[[0,"under",1]]}"#);
    std::fs::write(d.join("bad.jsonl"), broken).unwrap();
    let out = sgg(d, &["stats", "--data", "bad.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line 2") && msg.contains("under"), "{msg}");
    let looped = format!("{header}\n{}\n", r#"{"nodes":["man","shirt"],"edges":[[1,"on",1]]}"#);
    std::fs::write(d.join("loop.jsonl"), looped).unwrap();
    let out = sgg(d, &["mmd", "loop.jsonl", "good.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("graph 0"));
}

#[test]
fn synth_data_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth-data", "--count", "50", "--out", "a.jsonl", "--seed", "9"]);
    ok(d, &["synth-data", "--count", "50", "--out", "b.jsonl", "--seed", "9"]);
    ok(d, &["synth-data", "--count", "50", "--out", "c.jsonl", "--seed", "10"]);
    assert_eq!(read(d, "a.jsonl"), read(d, "b.jsonl"));
    assert_ne!(read(d, "a.jsonl"), read(d, "c.jsonl"));

    let grammar = ok(d, &["synth-data", "--print-grammar"]);
    std::fs::write(d.join("g.json"), &grammar).unwrap();
    ok(d, &["synth-data", "--grammar", "g.json", "--count", "50", "--out", "e.jsonl", "--seed", "9"]);
    assert_eq!(read(d, "a.jsonl"), read(d, "e.jsonl"));
}

#[test]
fn mmd_of_a_set_with_itself_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth-data", "--count", "40", "--out", "a.jsonl", "--seed", "3"]);
    let out = ok(d, &["mmd", "a.jsonl", "a.jsonl", "--out", "report.json", "--threads", "2"]);
    let rows: Vec<_> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    let report: serde_json::Value = serde_json::from_slice(&read(d, "report.json")).unwrap();
    for e in report["entries"].as_array().unwrap() {
        assert_eq!(e["mmd2"].as_f64(), Some(0.0));
    }
    assert_eq!(report["size_a"], 40);
}

#[test]
fn corrupt_changes_labels_and_keeps_input() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth-data", "--count", "30", "--out", "a.jsonl", "--seed", "4"]);
    let before = read(d, "a.jsonl");
    ok(d, &["corrupt", "--data", "a.jsonl", "--fraction", "1", "--out", "c1.jsonl", "--seed", "1"]);
    ok(d, &["corrupt", "--data", "a.jsonl", "--fraction", "1", "--out", "c2.jsonl", "--seed", "1"]);
    ok(d, &["corrupt", "--data", "a.jsonl", "--fraction", "0", "--out", "c0.jsonl", "--seed", "1"]);
    assert_eq!(read(d, "a.jsonl"), before);
    assert_eq!(read(d, "c1.jsonl"), read(d, "c2.jsonl"));
    assert_eq!(read(d, "c0.jsonl"), before);
    assert_ne!(read(d, "c1.jsonl"), before);
    assert_eq!(code(d, &["corrupt", "--data", "a.jsonl", "--fraction", "1.5", "--out", "x", "--seed", "1"]), 1);
}

#[test]
fn missing_seed_is_generated_and_printed() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth-data", "--count", "10", "--out", "a.jsonl", "--seed", "4"]);
    let out = sgg(d, &["corrupt", "--data", "a.jsonl", "--fraction", "0.5", "--out", "c.jsonl"]);
    assert!(out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let seed = stderr
        .lines()
        .find_map(|l| l.strip_prefix("seed: "))
        .expect("seed printed");
    ok(d, &["corrupt", "--data", "a.jsonl", "--fraction", "0.5", "--out", "again.jsonl", "--seed", seed]);
    assert_eq!(read(d, "c.jsonl"), read(d, "again.jsonl"));
}

#[test]
fn model_pipeline() {
    let (_tmp, d) = fixture();
    let log = String::from_utf8(read(&d, "log.jsonl")).unwrap();
    assert_eq!(log.lines().filter(|l| l.contains("\"kind\":\"step\"")).count(), 8);

    let sample = ["sample", "--checkpoint", "model.ckpt", "--count", "6", "--seed", "7"];
    ok(&d, &[&sample[..], &["--out", "s1.jsonl", "--dot-dir", "dots"]].concat());
    ok(&d, &[&sample[..], &["--out", "s2.jsonl"]].concat());
    assert_eq!(read(&d, "s1.jsonl"), read(&d, "s2.jsonl"));
    assert_eq!(std::fs::read_dir(d.join("dots")).unwrap().count(), 6);
    ok(&d, &["sample", "--checkpoint", "model.ckpt", "--count", "3", "--seed", "7", "--temperature", "0", "--out", "t0.jsonl"]);

    let nll = ok(&d, &["nll", "--checkpoint", "model.ckpt", "--data", "s1.jsonl"]);
    let rows: Vec<_> = nll.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    for r in rows {
        let v: f64 = r.rsplit('\t').next().unwrap().parse().unwrap();
        assert!(v.is_finite() && v > 0.0);
    }
    assert_eq!(nll, ok(&d, &["nll", "--checkpoint", "model.ckpt", "--data", "s1.jsonl"]));

    ok(&d, &["corrupt", "--data", "data.jsonl", "--fraction", "1", "--out", "bad.jsonl", "--seed", "2"]);
    let report = ok(&d, &["anomaly", "--checkpoint", "model.ckpt", "--clean", "data.jsonl", "--corrupt", "bad.jsonl"]);
    let report: serde_json::Value = serde_json::from_str(report.trim()).unwrap();
    let a = report["auroc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&a));

    // partial graph = the first stored graph
    let text = String::from_utf8(read(&d, "data.jsonl")).unwrap();
    let first_two: Vec<_> = text.lines().take(2).collect();
    std::fs::write(d.join("partial.jsonl"), first_two.join("\n") + "\n").unwrap();
    ok(&d, &["complete", "--checkpoint", "model.ckpt", "--partial", "partial.jsonl", "--count", "4", "--seed", "1", "--out", "done.jsonl"]);
    let partial: serde_json::Value = serde_json::from_str(first_two[1]).unwrap();
    let done = String::from_utf8(read(&d, "done.jsonl")).unwrap();
    for line in done.lines().skip(1) {
        let g: serde_json::Value = serde_json::from_str(line).unwrap();
        let n = partial["nodes"].as_array().unwrap().len();
        assert_eq!(g["nodes"].as_array().unwrap()[..n], partial["nodes"].as_array().unwrap()[..]);
        for e in partial["edges"].as_array().unwrap() {
            assert!(g["edges"].as_array().unwrap().contains(e));
        }
    }

    let nearest = ok(&d, &["nearest", "--graph", "partial.jsonl", "--train", "data.jsonl"]);
    assert_eq!(nearest.lines().nth(1).unwrap(), "0\t0\t1.000000");
    ok(&d, &["export-dot", "--data", "s1.jsonl", "--out-dir", "dot2"]);
    assert_eq!(read(&d, "dots/graph_00003.dot"), read(&d, "dot2/graph_00003.dot"));

    let stats = ok(&d, &["stats", "--data", "s1.jsonl", "--reference", "data.jsonl"]);
    assert!(stats.contains("# object_occurrence") && stats.contains("# count_kl_mean"));
}

#[test]
fn training_resumes_and_reproduces() {
    let (_tmp, d) = fixture();
    let base = ["--data", "data.jsonl", "--batch-size", "8", "--batches-per-epoch", "4", "--seed", "5"];
    ok(&d, &[&["train", "--out", "full.ckpt", "--epochs", "2"][..], &base[..]].concat());
    assert!(read(&d, "full.ckpt") == read(&d, "model.ckpt"), "training is not reproducible");
    ok(&d, &[&["train", "--out", "half.ckpt", "--epochs", "1"][..], &base[..]].concat());
    assert!(read(&d, "half.ckpt") != read(&d, "full.ckpt"));
    ok(&d, &["train", "--data", "data.jsonl", "--out", "resumed.ckpt", "--resume", "half.ckpt", "--epochs", "2"]);
    assert!(read(&d, "resumed.ckpt") == read(&d, "full.ckpt"), "resumed run diverged");
}

#[test]
fn divergent_training_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth-data", "--count", "20", "--out", "a.jsonl", "--seed", "4"]);
    let args = [
        "train", "--data", "a.jsonl", "--out", "m.ckpt", "--epochs", "1", "--batches-per-epoch", "5", "--batch-size",
        "4", "--seed", "1", "--lr", "1e30",
    ];
    assert_eq!(code(d, &args), 3);
}
