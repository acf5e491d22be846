//! Drives the binary through a miniature version of the full pipeline.

use std::path::Path;
use std::process::Command;

const TINY: &str = r#"
episodes = 40
heldout_episodes = 40
projector_pairs = 4000
projector_epochs = 2
projector_holdout_pairs = 500
calibration_pairs = 8000
hidden = [16]
filter_steps = 40
filter_batch = 16
replay_warmup = 64
replay_capacity = 2000
parallel_sessions = 4
eval_constraints = 2
eval_lattice = 9
rollouts = 4
grid_nx = 11
grid_ny = 11
grid_ntheta = 11
"#;

fn run(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_latent-safety"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .arg("--config")
        .arg("tiny.toml")
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("tiny.toml"), TINY).unwrap();
    run(d, &["gen-data", "--episodes", "40", "--seed", "0", "--out", "train.asd"]);
    run(d, &["gen-data", "--seed", "99", "--out", "heldout.asd"]);
    let proj = run(d, &["train-projector", "--data", "train.asd", "--epochs", "1", "--out", "proj.asnn"]);
    assert!(proj.contains("heldout_mse"));
    for e in ["0.3", "0.4", "0.5"] {
        run(d, &["solve-grid", "--epsilon", e, "--gamma", "0.99", "--out", &format!("grid{e}.asvg")]);
    }
    let t = run(d, &[
        "calibrate", "--data", "heldout.asd", "--projector", "proj.asnn", "--out", "t05.toml", "--cache", "cache.json",
    ]);
    assert!(t.contains("delta = "));
    run(d, &["calibrate", "--data", "heldout.asd", "--out", "raw.toml", "--cache", "raw.json"]);
    run(d, &[
        "train-filter", "--conditioning", "zz", "--steps", "40", "--projector", "proj.asnn", "--data", "train.asd", "--out",
        "zz.asfn",
    ]);
    run(d, &["train-filter", "--no-projector", "--data", "train.asd", "--out", "raw.asfn"]);

    let c = run(d, &[
        "eval", "classify", "--nets", "zz.asfn", "--projector", "proj.asnn", "--threshold", "t05.toml", "--grid",
        "grid0.5.asvg",
    ]);
    let c: serde_json::Value = serde_json::from_str(&c).unwrap();
    assert_eq!(c["n_constraints"], 2);
    run(d, &[
        "eval", "rollout", "--nets", "zz.asfn", "--projector", "proj.asnn", "--grid", "grid0.5.asvg", "--out", "r.json",
    ]);
    assert!(d.join("r.json").exists());

    let table = run(d, &[
        "eval", "ablation", "--suite", "table1", "--entry", "ZZ=zz.asfn", "--entry", "raw=raw.asfn", "--projector",
        "proj.asnn", "--calib-cache", "cache.json", "--calib-cache", "raw.json", "--grid", "grid0.3.asvg", "--grid",
        "grid0.4.asvg", "--grid", "grid0.5.asvg", "--format", "text",
    ]);
    assert!(table.starts_with("# latent safety filter evaluation"));
    assert!(table.contains("grid argmax"));

    let t3 = run(d, &[
        "eval", "ablation", "--suite", "table3", "--entry", "ZZ=zz.asfn", "--projector", "proj.asnn", "--calib-cache",
        "cache.json", "--grid", "grid0.3.asvg", "--grid", "grid0.4.asvg", "--grid", "grid0.5.asvg",
    ]);
    let r: serde_json::Value = serde_json::from_str(&t3).unwrap();
    let eps: Vec<f64> = r[0]["calibration"].as_array().unwrap().iter().map(|c| c["epsilon"].as_f64().unwrap()).collect();
    assert_eq!(eps, [0.3, 0.4, 0.5]);
}

#[test]
fn theorem1_check_runs_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    let out = run(dir.path(), &["verify", "theorem1", "--n", "11", "--gamma", "0.95"]);
    assert!(out.trim_end().ends_with("PASS"), "{out}");
}
