//! End-to-end checks of the command-line surface: exit codes, output files,
//! override semantics, and byte-level determinism.

use std::path::Path;
use std::process::{Command, Output};

fn mochi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mochi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_tiny_config(path: &Path, out_dir: &Path) {
    let text = format!(
        r#"{{
  "tau": 0.2,
  "queue_capacity": 64,
  "embed_dim": 8,
  "batch_size": 8,
  "epochs": 3,
  "base_lr": 0.3,
  "momentum": 0.99,
  "aug_noise": 0.05,
  "seed": 7,
  "oracle_training": false,
  "mochi": {{"n": 8, "s": 2, "s_prime": 3, "warmup_epochs": 1}},
  "dataset": {{"kind": "sphere_clusters", "classes": 3, "per_class": 20,
              "input_dim": 6, "separation": 0.5, "spread": 0.15}},
  "output_dir": "{}"
}}"#,
        out_dir.display()
    );
    std::fs::write(path, text).unwrap();
}

#[test]
fn train_writes_the_contracted_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    let out = dir.path().join("run");
    write_tiny_config(&config, &out);
    let result = mochi(&["train", "--config", config.to_str().unwrap()]);
    assert!(result.status.success(), "{result:?}");
    for file in ["resolved-config.json", "metrics.jsonl", "ckpt-final.json"] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"tau": 0.2, "mochi": {"n": 8, "s": 1, "s_prime": 0, "q": 4}}"#,
    )
    .unwrap();
    let result = mochi(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains('q'), "stderr does not name the key: {stderr}");
}

#[test]
fn override_replay_matches_inline_config() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");

    // inline baseline values
    let inline = dir.path().join("inline.json");
    write_tiny_config(&inline, &out_a);
    let text = std::fs::read_to_string(&inline)
        .unwrap()
        .replace(r#""s": 2, "s_prime": 3"#, r#""s": 0, "s_prime": 0"#);
    std::fs::write(&inline, text).unwrap();
    assert!(mochi(&["train", "--config", inline.to_str().unwrap()])
        .status
        .success());

    // same values reached through --set
    let base = dir.path().join("base.json");
    write_tiny_config(&base, &out_b);
    assert!(mochi(&[
        "train",
        "--config",
        base.to_str().unwrap(),
        "--set",
        "mochi.s=0",
        "--set",
        "mochi.s_prime=0",
    ])
    .status
    .success());

    let strip = |dir: &Path| -> String {
        std::fs::read_to_string(dir.join("metrics.jsonl"))
            .unwrap()
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("wall_clock_s");
                serde_json::to_string(&v).unwrap()
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&out_a), strip(&out_b));
    assert_eq!(
        std::fs::read(out_a.join("ckpt-final.json")).unwrap(),
        std::fs::read(out_b.join("ckpt-final.json")).unwrap()
    );
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    let out_a = dir.path().join("a");
    write_tiny_config(&config, &out_a);
    assert!(mochi(&["train", "--config", config.to_str().unwrap()])
        .status
        .success());

    let out_b = dir.path().join("b");
    assert!(mochi(&[
        "train",
        "--config",
        out_a.join("resolved-config.json").to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
    ])
    .status
    .success());
    assert_eq!(
        std::fs::read(out_a.join("ckpt-final.json")).unwrap(),
        std::fs::read(out_b.join("ckpt-final.json")).unwrap()
    );
}

#[test]
fn eval_reports_probe_accuracy_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    let out = dir.path().join("run");
    let data = dir.path().join("data.csv");
    write_tiny_config(&config, &out);
    assert!(mochi(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--dump-dataset",
        data.to_str().unwrap(),
    ])
    .status
    .success());

    let eval = |name: &str| -> Vec<u8> {
        let report_dir = dir.path().join(name);
        let result = mochi(&[
            "eval",
            "--checkpoint",
            out.join("ckpt-final.json").to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--split-seed",
            "9",
            "--out",
            report_dir.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "{result:?}");
        std::fs::read(report_dir.join("report.json")).unwrap()
    };
    let a = eval("eval-a");
    let b = eval("eval-b");
    assert_eq!(a, b, "eval reports differ between identical runs");

    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    let acc = report["probe_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn eval_rejects_mismatched_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    let out = dir.path().join("run");
    write_tiny_config(&config, &out);
    assert!(mochi(&["train", "--config", config.to_str().unwrap()])
        .status
        .success());

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "label,c0,c1\n0,1.0,0.0\n1,0.0,1.0\n0,0.5,0.5\n1,0.1,0.9\n").unwrap();
    let result = mochi(&[
        "eval",
        "--checkpoint",
        out.join("ckpt-final.json").to_str().unwrap(),
        "--data",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn analyze_antipodal_pair_and_single_class() {
    let dir = tempfile::tempdir().unwrap();
    let two = dir.path().join("two.csv");
    std::fs::write(&two, "label,c0,c1\n0,1,0\n1,-1,0\n").unwrap();
    let out = dir.path().join("an");
    let result = mochi(&[
        "analyze",
        "--embeddings",
        two.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!((report["neg_uniformity"].as_f64().unwrap() - 8.0).abs() < 1e-12);
    // two distinct labels: no positive pairs, no alignment value
    assert!(report["neg_alignment"].is_null());
    assert_eq!(report["fn_fraction_top_m"].as_f64().unwrap(), 0.0);

    let single = dir.path().join("single.csv");
    std::fs::write(&single, "label,c0,c1\n4,1,0\n4,0,1\n4,-1,0\n4,0,-1\n").unwrap();
    let out2 = dir.path().join("an2");
    assert!(mochi(&[
        "analyze",
        "--embeddings",
        single.to_str().unwrap(),
        "--top-m",
        "2",
        "--out",
        out2.to_str().unwrap(),
    ])
    .status
    .success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out2.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["fn_fraction_top_m"].as_f64().unwrap(), 1.0);
}

#[test]
fn analyze_rejects_non_unit_rows() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "label,c0,c1\n0,3,4\n1,0,1\n").unwrap();
    let result = mochi(&["analyze", "--embeddings", bad.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn demo_synthesis_counts_kinds_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    let out = dir.path().join("demo-out");
    write_tiny_config(&config, &out);

    let run_demo = |name: &str| -> String {
        let demo_dir = dir.path().join(name);
        let result = mochi(&[
            "demo-synthesis",
            "--config",
            config.to_str().unwrap(),
            "--set",
            "batch_size=2",
            "--set",
            "embed_dim=32",
            "--set",
            "queue_capacity=64",
            "--out",
            demo_dir.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "{result:?}");
        std::fs::read_to_string(demo_dir.join("demo.csv")).unwrap()
    };
    let csv = run_demo("d1");
    assert_eq!(csv, run_demo("d2"), "demo output not reproducible");

    let mut pair_rows = 0;
    let mut query_mix_rows = 0;
    let mut query_rows = 0;
    let mut negative_rows = 0;
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 2 + 32 + 2);
        match fields[0] {
            "pair_mix" => pair_rows += 1,
            "query_mix" => query_mix_rows += 1,
            "query" => query_rows += 1,
            "negative" => negative_rows += 1,
            other => panic!("unexpected kind {other}"),
        }
        // every non-PCA row is a unit vector in embedding space
        let norm: f64 = fields[2..34]
            .iter()
            .map(|f| f.parse::<f64>().unwrap().powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }
    assert_eq!(query_rows, 2);
    assert_eq!(negative_rows, 64);
    assert_eq!(pair_rows, 2 * 2);
    assert_eq!(query_mix_rows, 2 * 3);
}
