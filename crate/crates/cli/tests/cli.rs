use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use robotransfer_cli::service::{router, AppState};
use robotransfer_core::{Checkpoint, Config, Dataset};
use serde_json::Value;
use tower::ServiceExt;

const TINY: &str = r#"
version = 1

[net]
h1_pc = 6
h1_lang = 4
h1_traj = 6
h2_pt = 6
h2_lt = 6
h3 = 6
epochs_pretrain = 2
epochs_finetune = 3
batch_size = 16

[eval]
folds = 3
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_robotransfer"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap();
    out
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn full_command_round() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("tiny.toml"), TINY).unwrap();
    let synth: Value = serde_json::from_str(&ok(
        d,
        &[
            "synth",
            "--out",
            "data",
            "--n-tasks",
            "9",
            "--demos-per-task",
            "4",
            "--points-per-part",
            "80",
            "--seed",
            "5",
        ],
    ))
    .unwrap();
    assert_eq!(synth["counts"]["instructions"], 9);

    let imported: Value = serde_json::from_str(&ok(d, &["import", "data", "canon"])).unwrap();
    assert_eq!(imported["hash"], synth["hash"]);
    let again: Value = serde_json::from_str(&ok(d, &["import", "canon"])).unwrap();
    assert_eq!(again["hash"], synth["hash"]);

    ok(d, &["export", "data", "world", "--demo-frame", "world"]);
    let world = Dataset::import(&d.join("world")).unwrap();
    assert_eq!(world.counts(), Dataset::import(&d.join("data")).unwrap().counts());

    let feats: Value = serde_json::from_str(&ok(d, &["featurize", "data", "--out", "feats"])).unwrap();
    assert!(feats["positives"].as_u64().unwrap() > 0);
    assert!(d.join("feats/vocab.txt").exists());
    let lines = std::fs::read_to_string(d.join("feats/examples.jsonl")).unwrap();
    assert_eq!(lines.lines().count() as u64, feats["examples"].as_u64().unwrap());

    let trained: Value = serde_json::from_str(&ok(
        d,
        &["--config", "tiny.toml", "train", "data", "--out", "model.json"],
    ))
    .unwrap();
    assert_eq!(trained["tasks"], 9);
    assert!(d.join("model.json.log.json").exists());
    let model = Checkpoint::load(&d.join("model.json")).unwrap();
    assert_eq!(model.net.config.h3, 6);

    let held: Value = serde_json::from_str(&ok(
        d,
        &[
            "--config",
            "tiny.toml",
            "train",
            "data",
            "--out",
            "held.json",
            "--exclude-fold",
            "0",
            "--wiring",
            "flat",
        ],
    ))
    .unwrap();
    assert!(held["tasks"].as_u64().unwrap() < 9);

    let ds = Dataset::import(&d.join("data")).unwrap();
    let task = ds.tasks[0].id.clone();
    let ranked: Value = serde_json::from_str(&ok(
        d,
        &["infer", "model.json", "data", "--task", &task, "--top", "3", "--world"],
    ))
    .unwrap();
    let rows = ranked["ranked"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows
        .windows(2)
        .all(|w| w[0]["score"].as_f64() >= w[1]["score"].as_f64()));
    assert!(rows[0]["trajectory"]["waypoints"].is_array());

    let a = d
        .join("data")
        .join(&ds.tasks[0].object_id)
        .join("demos")
        .join(format!("{}.json", ds.tasks[0].demos[0].id));
    let a = a.to_str().unwrap();
    let zero: f64 = ok(d, &["distance", a, a]).trim().parse().unwrap();
    assert_eq!(zero, 0.0);
    let path: Value = serde_json::from_str(&ok(d, &["distance", a, a, "--beta", "2", "--path"])).unwrap();
    assert!(path["path"].is_array());

    let text = ok(
        d,
        &[
            "--config",
            "tiny.toml",
            "eval",
            "data",
            "--out",
            "report",
            "--methods",
            "chance,similarity+weighted",
        ],
    );
    assert!(text.contains("similarity+weighted"));
    for f in ["report.txt", "report.csv", "report.json"] {
        assert!(d.join("report").join(f).exists());
    }
}

#[test]
fn validation_failures_exit_non_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::create_dir(d.join("empty")).unwrap();
    assert!(!run(d, &["import", "empty"]).status.success());
    assert!(!run(d, &["synth", "--out", "x", "--outlier-fraction", "1.5"])
        .status
        .success());
    std::fs::write(d.join("bad.toml"), "version = 1\n[dtw]\nalpha_t = -1.0\n").unwrap();
    ok(
        d,
        &[
            "synth",
            "--out",
            "data",
            "--n-tasks",
            "4",
            "--demos-per-task",
            "2",
            "--points-per-part",
            "60",
        ],
    );
    assert!(!run(d, &["--config", "bad.toml", "featurize", "data", "--out", "f"])
        .status
        .success());
    assert!(!run(d, &["eval", "data", "--out", "r", "--methods", "bogus"])
        .status
        .success());
    let out = run(d, &["distance", "missing.json", "missing.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
}

#[tokio::test]
async fn scoring_with_a_model_ranks_the_pool() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("tiny.toml"), TINY).unwrap();
    ok(
        d,
        &[
            "synth",
            "--out",
            "data",
            "--n-tasks",
            "6",
            "--demos-per-task",
            "3",
            "--points-per-part",
            "60",
        ],
    );
    ok(d, &["--config", "tiny.toml", "train", "data", "--out", "model.json"]);
    let model = Checkpoint::load(&d.join("model.json")).unwrap();
    let state = AppState::load(d.join("data"), Some(model), Config::parse(TINY).unwrap()).unwrap();
    let app = router(Arc::new(state));
    let ds = Dataset::import(&d.join("data")).unwrap();
    let req = Request::builder()
        .method("POST")
        .uri(format!("/tasks/{}/score", ds.tasks[0].id))
        .body(Body::from(r#"{"top": 4}"#))
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let v: Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    let ranked = v["ranked"].as_array().unwrap();
    assert_eq!(ranked.len(), 4);
    assert!(ranked
        .windows(2)
        .all(|w| w[0]["score"].as_f64() >= w[1]["score"].as_f64()));
}
