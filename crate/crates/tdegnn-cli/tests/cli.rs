//! End-to-end command behavior: artifacts, exit codes, error messages, and
//! dataset schema validation.

use std::path::Path;
use std::process::{Command, Output};

fn tdegnn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdegnn"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

fn write(dir: &Path, name: &str, contents: &str) {
    std::fs::write(dir.join(name), contents).unwrap();
}

fn node_fixture(dir: &Path) {
    write(
        dir,
        "features.csv",
        "node_id,f0,f1\n0,1.0,0.2\n1,0.9,0.1\n2,-1.0,-0.3\n3,-0.8,-0.2\n",
    );
    write(dir, "edges.csv", "src,dst\n0,1\n2,3\n1,2\n");
    write(dir, "labels.csv", "node_id,label\n0,0\n1,0\n2,1\n3,1\n");
    write(
        dir,
        "splits.csv",
        "node_id,split\n0,train\n1,val\n2,train\n3,test\n",
    );
}

#[test]
fn simulate_pendulum_row_count_and_fixed_point() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tdegnn(
        &["simulate-pendulum", "--steps", "10", "--dt", "0.1", "--out", "sim"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let csv = std::fs::read_to_string(tmp.path().join("sim/trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 11, "header + 10 data rows");
    assert_eq!(lines[0], "t,theta,x1,y1");

    let out = tdegnn(
        &["simulate-pendulum", "--theta0", "0", "--steps", "6", "--out", "zero"],
        tmp.path(),
    );
    assert!(out.status.success());
    let csv = std::fs::read_to_string(tmp.path().join("zero/trajectory.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let theta: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(theta, 0.0);
    }
}

#[test]
fn analyze_stability_matches_published_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tdegnn(&["analyze", "stability", "--coeffs", "2,-1", "--out", "."], tmp.path());
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("stability_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["stable"], true);
    assert_eq!(report["weakly_stable_warning"], true);

    let out = tdegnn(
        &["analyze", "stability", "--coeffs", "-0.08,1.68,0.153,0.006,-0.759", "--out", "."],
        tmp.path(),
    );
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("stability_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["stable"], false);
}

#[test]
fn analyze_refuses_non_normalized_coefficients() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tdegnn(&["analyze", "stability", "--coeffs", "1,1", "--out", "."], tmp.path());
    assert!(!out.status.success());
    let err = stderr_of(&out);
    assert!(err.contains("sum to 2"), "stderr must print the sum: {err}");
    assert!(!tmp.path().join("stability_report.json").exists());
}

#[test]
fn analyze_consistency_grid_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tdegnn(
        &["analyze", "consistency", "--coeffs", "2,-1", "--grid", "0:1:0.01", "--out", "."],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("consistency_report.json")).unwrap(),
    )
    .unwrap();
    assert!(report["r2"].as_f64().unwrap() >= 0.9999);
    assert_eq!(report["inferred_order"], 2);

    let out = tdegnn(
        &["analyze", "consistency", "--coeffs", "2,-1", "--grid", "nonsense", "--out", "."],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_node_classify_emits_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    node_fixture(&data);
    let out = tdegnn(
        &[
            "train", "--task", "node-classify", "--data", "data", "--layers", "1",
            "--order", "1", "--hidden", "8", "--epochs", "3", "--seed", "1", "--out", "run",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    for file in ["checkpoint.tdeg", "metrics.csv", "coefficients.json"] {
        assert!(tmp.path().join("run").join(file).exists(), "{file} missing");
    }
    let metrics = std::fs::read_to_string(tmp.path().join("run/metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,train_loss,val_loss,val_metric,test_metric,wall_ms\n"));
    assert_eq!(metrics.lines().count(), 4);

    // Evaluate the checkpoint under the same dataset.
    let out = tdegnn(
        &[
            "eval", "--ckpt", "run/checkpoint.tdeg", "--task", "node-classify",
            "--data", "data", "--out", "run",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let eval: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("run/eval.json")).unwrap())
            .unwrap();
    assert_eq!(eval["metric"], "accuracy");
}

#[test]
fn malformed_edges_exit_code_two_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    node_fixture(&data);
    write(&data, "edges.csv", "src,dst\n0,1\n0,99\n");
    let out = tdegnn(
        &["train", "--task", "node-classify", "--data", "data", "--epochs", "1", "--out", "run"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("edges.csv:3"), "line number missing: {err}");
    assert!(err.contains("99"), "offending id missing: {err}");
}

#[test]
fn unknown_split_tag_is_a_schema_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    node_fixture(&data);
    write(&data, "splits.csv", "node_id,split\n0,train\n1,validation\n2,train\n3,test\n");
    let out = tdegnn(
        &["train", "--task", "node-classify", "--data", "data", "--epochs", "1", "--out", "run"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("validation"));
}

#[test]
fn duplicate_feature_row_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    node_fixture(&data);
    write(
        &data,
        "features.csv",
        "node_id,f0,f1\n0,1.0,0.2\n0,0.9,0.1\n2,-1.0,-0.3\n3,-0.8,-0.2\n",
    );
    let out = tdegnn(
        &["train", "--task", "node-classify", "--data", "data", "--epochs", "1", "--out", "run"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("duplicate"));
}

#[test]
fn pendulum_training_with_freeze_reproduces_baseline_order() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tdegnn(
        &[
            "train", "--task", "pendulum", "--order", "1", "--freeze-c",
            "--epochs", "2", "--seed", "3", "--out", "frozen",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("frozen/coefficients.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["variant"], "frozen");
    assert_eq!(report["layers"][0][0], 1.0);
}

#[test]
fn pendulum_training_reports_per_layer_direct_coefficients() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tdegnn(
        &[
            "train", "--task", "pendulum", "--order", "2", "--temporal", "direct",
            "--layers", "2", "--epochs", "2", "--seed", "0", "--out", "run",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("run/coefficients.json")).unwrap(),
    )
    .unwrap();
    let layers = report["layers"].as_array().unwrap();
    assert_eq!(layers.len(), 2);
    for layer in layers {
        assert_eq!(layer.as_array().unwrap().len(), 2);
    }
}

#[test]
fn config_file_is_honored_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "run.json",
        r#"{
  "task": "pendulum",
  "order": 2,
  "layers": 1,
  "temporal": "direct",
  "hidden": 8,
  "seed": 5,
  "train": { "epochs": 2 }
}"#,
    );
    let out = tdegnn(&["train", "--config", "run.json", "--out", "fromcfg"], tmp.path());
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("fromcfg/coefficients.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["order"], 2);

    // Explicit flag overrides the config file's order.
    let out = tdegnn(
        &["train", "--config", "run.json", "--order", "3", "--out", "flagwin"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("flagwin/coefficients.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["order"], 3);

    // Unknown config fields are rejected with exit code 2.
    write(tmp.path(), "bad.json", r#"{ "task": "pendulum", "oder": 2 }"#);
    let out = tdegnn(&["train", "--config", "bad.json", "--out", "x"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn hyperparameter_table_bounds_enforced_at_parse_time() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: &[(&[&str], &str)] = &[
        (&["train", "--task", "pendulum", "--hidden", "10"], "hidden"),
        (&["train", "--task", "pendulum", "--step-size", "0.0001"], "step_size"),
        (&["train", "--task", "pendulum", "--lr-embed", "0.5"], "lr_embed"),
        (&["train", "--task", "pendulum", "--dropout-hidden", "0.95"], "dropout_hidden"),
        (&["train", "--task", "pendulum", "--wd-temporal", "0.5"], "wd_temporal"),
    ];
    for (args, field) in cases {
        let out = tdegnn(args, tmp.path());
        assert_eq!(out.status.code(), Some(2), "args: {args:?}");
        let err = stderr_of(&out);
        assert!(err.contains(field), "field '{field}' not named in: {err}");
    }
}

#[test]
fn forecast_task_roundtrip_on_generic_series() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("series");
    std::fs::create_dir(&data).unwrap();
    let mut series = String::from("node_id,t,f0\n");
    for step in 0..20 {
        let t = 0.5 * step as f64;
        series.push_str(&format!("0,{t},{}\n", (0.3 * t).sin()));
        series.push_str(&format!("1,{t},{}\n", (0.3 * t).cos()));
        series.push_str(&format!("2,{t},{}\n", 0.1 * t));
    }
    write(&data, "series.csv", &series);
    write(&data, "edges.csv", "src,dst\n0,1\n1,2\n");
    let out = tdegnn(
        &[
            "train", "--task", "forecast", "--data", "series", "--frames", "4",
            "--order", "2", "--epochs", "3", "--out", "frun",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let out = tdegnn(
        &[
            "eval", "--ckpt", "frun/checkpoint.tdeg", "--task", "forecast",
            "--data", "series", "--out", "frun",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));

    // Non-uniform grid is rejected.
    let bad = tmp.path().join("bad");
    std::fs::create_dir(&bad).unwrap();
    write(&bad, "series.csv", "node_id,t,f0\n0,0.0,1\n0,1.0,2\n0,3.0,3\n");
    write(&bad, "edges.csv", "src,dst\n");
    let out = tdegnn(
        &["train", "--task", "forecast", "--data", "bad", "--frames", "1", "--order", "1", "--epochs", "1", "--out", "x"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("uniform"));
}

#[test]
fn attention_variant_coefficients_report_uses_probe_batch() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tdegnn(
        &[
            "train", "--task", "pendulum", "--order", "2", "--temporal", "attention",
            "--epochs", "2", "--seed", "0", "--out", "attn",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("attn/coefficients.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["variant"], "attention");
    let row = report["layers"][0].as_array().unwrap();
    let sum: f64 = row.iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-9, "attention stencil sums to {sum}");

    // A frozen/direct stencil can come from the checkpoint; attention cannot.
    let out = tdegnn(
        &["analyze", "stability", "--ckpt", "attn/checkpoint.tdeg", "--out", "attn"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("--coeffs"));
}

#[test]
fn experiment_supports_the_attention_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tdegnn(
        &[
            "run-experiment", "--orders", "2", "--temporal", "attention",
            "--epochs", "2", "--seed", "0", "--out", "exp",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("exp/experiment.json")).unwrap(),
    )
    .unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    // Attention stencils are data-dependent: the coefficients column is empty.
    assert!(rows[1]["learned_coefficients"].is_null());
    assert!(rows[1]["test_mse"].as_f64().unwrap().is_finite());
}

#[test]
fn analyze_from_checkpoint_layer() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tdegnn(
        &[
            "train", "--task", "pendulum", "--order", "2", "--temporal", "direct",
            "--epochs", "2", "--seed", "0", "--out", "run",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let out = tdegnn(
        &[
            "analyze", "stability", "--ckpt", "run/checkpoint.tdeg", "--layer", "0",
            "--out", "run",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(tmp.path().join("run/stability_report.json").exists());
}
