use std::fs;
use std::path::Path;
use std::process::Command;

fn explore(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_explore")).args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("exp.toml");
    fs::write(
        &path,
        "[trial]\nduration = 20.0\nsnapshot_times = [10.0]\n[campaign]\ntrials_per_policy = 1\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_campaign_layout() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let seeds = dir.path().join("seeds.txt");
    fs::write(&seeds, "# pairs\n4 5\n6\n").unwrap();
    let out = dir.path().join("out");
    explore(&[
        "run",
        "--config",
        &config,
        "--policy",
        "generative",
        "--seed-list",
        seeds.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    for f in ["metrics.csv", "crossings.csv", "timeseries.csv", "summary.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let trial = out.join("trials/generative_w4_s5");
    for f in [
        "metrics.csv",
        "truth.png",
        "final_observed.png",
        "t0010.0_predicted.png",
        "t0010.0_checkpoint.json",
    ] {
        assert!(trial.join(f).is_file(), "{f}");
    }
    assert!(out.join("trials/generative_w6_s6").is_dir());
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("policy,world_seed,sim_seed,tick,time,explored,accuracy"));
}

#[test]
fn campaign_honours_policy_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("out");
    explore(&[
        "campaign",
        "--config",
        &config,
        "--policies",
        "constant,visible",
        "--no-maps",
        "--out",
        out.to_str().unwrap(),
    ]);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let policies: Vec<&str> = summary["policies"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["policy"].as_str().unwrap())
        .collect();
    assert_eq!(policies, ["constant", "visible_entropy"]);
    assert!(!out.join("trials/constant_w0_s0/truth.png").exists());
}

#[test]
fn worldgen_batch_writes_each_seed() {
    let dir = tempfile::tempdir().unwrap();
    explore(&["worldgen", "--seeds", "3..=5", "--out", dir.path().to_str().unwrap()]);
    for s in 3..=5 {
        let d = dir.path().join(format!("seed_{s}"));
        assert!(d.join("truth.png").is_file());
        let layout: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.join("layout.json")).unwrap()).unwrap();
        assert!(layout["buildings"].as_array().unwrap().len() >= 3);
        assert!(layout["street_centerline"].as_array().unwrap().len() > 10);
    }
}

#[test]
fn dataset_reads_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("ds.toml");
    fs::write(&config, "seeds = [2]\nrollouts_per_map = 1\nschedule = [0.1, 0.3]\n").unwrap();
    let out = dir.path().join("ds");
    let stdout = explore(&[
        "dataset",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
    .stdout;
    assert!(String::from_utf8_lossy(&stdout).starts_with("1 maps, 1 rollouts"));
    assert!(out.join("map_2/rollout_0/snap_030_mask.png").is_file());
}

#[test]
fn bad_config_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "[trial]\nthresholds = [0.99, 0.95]\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_explore"))
        .args([
            "campaign",
            "--config",
            config.to_str().unwrap(),
            "--out",
            "/nonexistent",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("thresholds"));
}
