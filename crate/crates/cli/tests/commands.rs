//! The `dforce` binary, run as a process.

use std::path::Path;
use std::process::{Command, Output};

fn dforce(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dforce")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const CONFIG: &str = r#"
kind = "blob"
seed = 4

[data]
dim = 4
frames = 6
process_noise = 0.02

[train]
learning_rate = 3e-3
batch_size = 8
steps = 40
schedule = "fopp"
max_timestep = 10

[sample]
count = 8
rollouts = 2

[rollout]
f_prev = 2
f_new = 4
total_frames = 14
max_timestep = 10
"#;

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), CONFIG).unwrap();
    dir
}

#[test]
fn schedule_count_prints_exact_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = dforce(&["schedule", "count", "--frames", "3", "--timesteps", "4"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("nondecreasing 20\n"), "{text}");
    assert!(text.contains("unconstrained 64\n"));
    assert!(text.contains("ratio 16/5\n"));
}

#[test]
fn schedule_sample_emits_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let o = dforce(&["schedule", "sample", "--frames", "4", "--timesteps", "5", "--samples", "20", "--seed", "3"], dir.path());
    assert!(o.status.success());
    let lines: Vec<Vec<usize>> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 20);
    for v in lines {
        assert_eq!(v.len(), 4);
        assert!(v.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn schedule_ad_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let o = dforce(&["schedule", "ad", "--frames", "3", "--timesteps", "4", "--diff", "4"], dir.path());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 12);
    assert!(text.ends_with("11,0,0,0\n"));
}

#[test]
fn dry_run_writes_nothing() {
    let dir = setup();
    let o = dforce(&["--config", "exp.toml", "--out", "run", "train", "--dry-run"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("kind = \"blob\""));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn train_then_sample_and_rollout() {
    let dir = setup();
    let o = dforce(&["--config", "exp.toml", "--out", "run", "train"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["model.dfck", "loss.csv", "metrics.csv", "report.json"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
    let loss = std::fs::read_to_string(dir.path().join("run/loss.csv")).unwrap();
    assert!(loss.starts_with("series,step,value\n"));
    assert_eq!(loss.lines().count(), 1 + 40);

    let o = dforce(&["--out", "s", "sample", "--checkpoint", "run/model.dfck", "--count", "3", "--format", "pgm", "--timesteps", "10"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_dir(dir.path().join("s")).unwrap().count(), 3 * 6);

    let o = dforce(&["--config", "exp.toml", "--out", "r", "rollout", "--checkpoint", "run/model.dfck", "--strip"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("r/rollout.json")).unwrap()).unwrap();
    assert_eq!(report["segments"].as_array().unwrap().len(), 3);
    assert!(report["finite"].as_bool().unwrap());
    assert!(dir.path().join("r/rollout.pgm").exists());
}

#[test]
fn same_seed_same_metrics() {
    let dir = setup();
    for out in ["a", "b"] {
        assert!(dforce(&["--config", "exp.toml", "--out", out, "report"], dir.path()).status.success());
    }
    for f in ["metrics.csv", "loss.csv", "report.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    assert!(dforce(&["--config", "exp.toml", "--out", "c", "--seed", "5", "report"], dir.path()).status.success());
    assert_ne!(
        std::fs::read(dir.path().join("a/metrics.csv")).unwrap(),
        std::fs::read(dir.path().join("c/metrics.csv")).unwrap()
    );
}

#[test]
fn errors_exit_nonzero_without_outputs() {
    let dir = setup();
    std::fs::write(dir.path().join("bad.toml"), CONFIG.replace("steps = 40", "steps = 40\nstepz = 1")).unwrap();
    let o = dforce(&["--config", "bad.toml", "--out", "run", "train"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("stepz"));
    assert!(!dir.path().join("run").exists());

    let o = dforce(&["--out", "s", "sample", "--checkpoint", "missing.dfck"], dir.path());
    assert!(!o.status.success());
    assert!(dforce(&["schedule", "ad", "--frames", "2", "--timesteps", "3", "--diff", "9"], dir.path()).status.code() != Some(0));
}

#[test]
fn crop_from_pbm_and_boxes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.pbm"), "P1\n4 3\n1 1 1 0\n1 1 1 1\n1 1 1 1\n").unwrap();
    let o = dforce(&["crop", "--mask", "m.pbm"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["area"], 9);

    std::fs::write(
        dir.path().join("b.json"),
        r#"{"width": 100, "height": 50, "boxes": [{"top": 48, "left": 0, "bottom": 49, "right": 99}]}"#,
    )
    .unwrap();
    let v: serde_json::Value = serde_json::from_str(&stdout(&dforce(&["crop", "--boxes", "b.json"], dir.path()))).unwrap();
    assert_eq!(v["area"], 4800);
    assert_eq!(v["verdict"]["accepted"], true);
}

#[test]
fn bucket_augments_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("m.csv"),
        "path,duration,width,height,fps\nclip.mp4,4,1920,1080,30000/1001\nv.mp4,2,1080,1920,16\n",
    )
    .unwrap();
    let o = dforce(&["bucket", "--manifest", "m.csv"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "path,duration,width,height,fps,target_fps,bucket_id,duration_index,aspect_index");
    assert_eq!(lines.next().unwrap(), "clip.mp4,4.0,1920,1080,30000/1001,24,5,1,2");
    assert_eq!(lines.next().unwrap(), "v.mp4,2.0,1080,1920,16,16,0,0,0");
}

#[test]
fn score_manual_sums_weights() {
    let dir = tempfile::tempdir().unwrap();
    let o = dforce(&["score-manual", "subject-distortion=2", "insufficient-motion"], dir.path());
    assert_eq!(stdout(&o).trim(), "7");
}
