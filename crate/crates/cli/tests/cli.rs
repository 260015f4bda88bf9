use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn gabo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gabo"))
        .args(args)
        .env("GABO_LOG", "quiet")
        .output()
        .expect("binary runs")
}

fn sample() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/sample50.jsonl")
        .canonicalize()
        .unwrap()
}

fn small_config(regime: &str) -> Value {
    json!({
        "regime": regime,
        "dataset": sample(),
        "model": { "emb_dim": 8, "num_layers": 2 },
        "augmenter": { "hidden_dim": 8, "zero_init": true },
        "train": { "epochs": 3, "lr": 0.001, "milestones": [2] }
    })
}

fn write_json(path: &Path, v: &Value) {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_on_the_bundled_sample_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write_json(&cfg, &small_config("plain"));
    let out = dir.path().join("run");
    let o = gabo(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let auc = summary["test_auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert_eq!(
        fs::read_to_string(out.join("metrics.jsonl"))
            .unwrap()
            .lines()
            .count(),
        3
    );
    assert!(out.join("config.resolved.json").exists());
    assert!(out.join("checkpoint/classifier.bin").exists());
    assert!(out.join("checkpoint/classifier.json").exists());
}

#[test]
fn runs_are_byte_identical_and_resolved_configs_reproduce_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write_json(&cfg, &small_config("gabo"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert!(
            gabo(&["train", "--config", s(&cfg), "--out", s(out), "--seed", "4"])
                .status
                .success()
        );
    }
    let metrics = |d: &Path| fs::read(d.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics(&a), metrics(&b));
    assert_eq!(
        fs::read(a.join("checkpoint/augmenter.bin")).unwrap(),
        fs::read(b.join("checkpoint/augmenter.bin")).unwrap()
    );

    let resolved: Value =
        serde_json::from_str(&fs::read_to_string(a.join("config.resolved.json")).unwrap()).unwrap();
    assert_eq!(resolved["seed"], 4);
    assert_eq!(resolved["bilevel"]["window"], 4, "defaults are expanded");
    let c = dir.path().join("c");
    let o = gabo(&[
        "train",
        "--config",
        s(&a.join("config.resolved.json")),
        "--out",
        s(&c),
    ]);
    assert!(o.status.success());
    assert_eq!(metrics(&a), metrics(&c));
}

#[test]
fn input_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("run");

    let mut missing = small_config("plain");
    missing.as_object_mut().unwrap().remove("dataset");
    write_json(&cfg, &missing);
    let o = gabo(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dataset"));

    let mut absent = small_config("plain");
    absent["dataset"] = json!(dir.path().join("nope.jsonl"));
    write_json(&cfg, &absent);
    assert_eq!(
        gabo(&["train", "--config", s(&cfg), "--out", s(&out)])
            .status
            .code(),
        Some(2)
    );

    let mut bad = small_config("plain");
    bad["train"]["momentum"] = json!(1.5);
    write_json(&cfg, &bad);
    let o = gabo(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("train.momentum"));

    let mut unknown = small_config("plain");
    unknown["trian"] = json!({});
    write_json(&cfg, &unknown);
    let o = gabo(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trian"));

    assert_eq!(gabo(&["train"]).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_gabo"))
        .args(["gradcheck"])
        .env("GABO_LOG", "loud")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergent_training_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let mut c = small_config("plain");
    c["train"]["lr"] = json!(1e12);
    write_json(&cfg, &c);
    let o = gabo(&[
        "train",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("run")),
    ]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("training aborted"));
}

fn grid_spec(seeds: Value) -> Value {
    let mut base = small_config("gabo");
    base.as_object_mut().unwrap().remove("regime");
    json!({
        "base": base,
        "generations": ["noise", "classic", "gin"],
        "transforms": ["bias", "element_wise", "shifted_element_wise"],
        "seeds": seeds
    })
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("generation,transform,n_seeds,mean,std,status")
    );
    lines
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn three_by_three_grid_with_one_seed_has_nine_rows() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("grid.json");
    write_json(&spec, &grid_spec(json!([0])));
    let out = dir.path().join("grid");
    let o = gabo(&[
        "grid",
        "--config",
        s(&spec),
        "--out",
        s(&out),
        "--jobs",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("grid.csv"));
    assert_eq!(rows.len(), 9);
    for r in &rows {
        assert_eq!(
            (r[2].as_str(), r[4].as_str(), r[5].as_str()),
            ("1", "0", "ok")
        );
        assert!((0.0..=1.0).contains(&r[3].parse::<f64>().unwrap()));
    }
}

#[test]
fn failing_cell_is_marked_and_the_rest_survive() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("grid.json");
    let mut g = grid_spec(json!([0]));
    g["generations"] = json!(["noise", "gin"]);
    g["transforms"] = json!(["bias"]);
    g["cell_overrides"] = json!({ "noise/bias": { "train": { "lr": 1e12 } } });
    write_json(&spec, &g);
    let out = dir.path().join("grid");
    let o = gabo(&["grid", "--config", s(&spec), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("grid.csv"));
    assert_eq!(rows[0], ["noise", "bias", "0", "", "", "FAILED"]);
    assert_eq!((rows[1][0].as_str(), rows[1][5].as_str()), ("gin", "ok"));
}

#[test]
fn grid_cell_statistics_match_the_run_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("grid.json");
    let mut g = grid_spec(json!([0, 1, 2]));
    g["generations"] = json!(["gin"]);
    g["transforms"] = json!(["bias"]);
    write_json(&spec, &g);
    let out = dir.path().join("grid");
    assert!(gabo(&[
        "grid",
        "--config",
        s(&spec),
        "--out",
        s(&out),
        "--jobs",
        "3"
    ])
    .status
    .success());
    let aucs: Vec<f64> = (0..3)
        .map(|seed| {
            let p = out.join(format!("cells/gin_bias/seed_{seed}/summary.json"));
            let v: Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
            assert_eq!(v["seed"], seed);
            v["test_auc"].as_f64().unwrap()
        })
        .collect();
    let mean = (aucs[0] + aucs[1] + aucs[2]) / 3.0;
    let std = (aucs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / 2.0).sqrt();
    let row = &csv_rows(&out.join("grid.csv"))[0];
    assert_eq!(row[2], "3");
    assert!((row[3].parse::<f64>().unwrap() - mean).abs() < 1e-15);
    assert!((row[4].parse::<f64>().unwrap() - std).abs() < 1e-15);
}

#[test]
fn synth_is_regenerable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    for p in [&a, &b] {
        assert!(
            gabo(&["synth", "--out", s(p), "--n-graphs", "40", "--seed", "7"])
                .status
                .success()
        );
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c = dir.path().join("c.jsonl");
    assert!(
        gabo(&["synth", "--out", s(&c), "--n-graphs", "40", "--seed", "8"])
            .status
            .success()
    );
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    let bad = gabo(&["synth", "--out", s(&c), "--noise-rate", "0.7"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn features_of_a_three_node_path() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("p3.jsonl");
    let x = vec![vec![0; 9]; 3];
    fs::write(
        &data,
        json!({"n": 3, "x": x, "edges": [[0, 1], [1, 2]], "y": 0}).to_string() + "\n",
    )
    .unwrap();
    let o = gabo(&["features", "--dataset", s(&data)]);
    assert!(o.status.success());
    let rows: Vec<Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1]["node"], 1);
    assert_eq!(rows[1]["betweenness"], 1.0);
    assert_eq!(rows[1]["closeness"], 1.0);
    assert_eq!(rows[1]["degree"], 2.0);
    assert_eq!(rows[0]["betweenness"], 0.0);
}

#[test]
fn split_writes_disjoint_index_lists() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("split.json");
    let o = gabo(&[
        "split",
        "--dataset",
        s(&sample()),
        "--seed",
        "3",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let mut all: Vec<u64> = ["train", "pseudo_val", "val", "test"]
        .iter()
        .flat_map(|k| v[k].as_array().unwrap().iter().map(|i| i.as_u64().unwrap()))
        .collect();
    assert_eq!(v["train"].as_array().unwrap().len(), 36);
    all.sort_unstable();
    assert_eq!(all, (0..50).collect::<Vec<_>>());

    let cfg = dir.path().join("scaffold.json");
    write_json(&cfg, &json!({"scheme": "scaffold"}));
    assert!(gabo(&[
        "split",
        "--dataset",
        s(&sample()),
        "--config",
        s(&cfg),
        "--out",
        s(&out)
    ])
    .status
    .success());
}

#[test]
fn gradcheck_reports_the_quadratic_toy() {
    let o = gabo(&["gradcheck", "--instances", "3"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let line = text
        .lines()
        .find(|l| l.contains("quadratic finite difference"))
        .unwrap();
    assert!(line.starts_with("PASS"));
    let err: f64 = line
        .split("error=")
        .nth(1)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(err <= 1e-6);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}
