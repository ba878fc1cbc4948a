use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn edgescale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgescale"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn written(out: &Output) -> PathBuf {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().trim())
}

fn small<'a>(dir: &'a Path, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "--events",
        "400",
        "--episodes",
        "2",
        "--seed",
        "1,2",
        "--pin-id",
        "t",
        "--out",
    ];
    v.push(dir.to_str().unwrap());
    v.extend_from_slice(extra);
    v
}

fn run(sub: &str, dir: &Path, extra: &[&str]) -> String {
    let mut args = vec![sub];
    args.extend(small(dir, extra));
    std::fs::read_to_string(written(&edgescale(&args))).unwrap()
}

#[test]
fn run_writes_one_row_per_seed_and_episode() {
    let dir = tempfile::tempdir().unwrap();
    let csv = run("run", dir.path(), &["--agent", "rl"]);
    let lines: Vec<_> = csv.lines().collect();
    assert!(lines[0]
        .starts_with("experiment_id,agent,allocator,sweep_axis,sweep_value,seed,episode,events,"));
    assert_eq!(lines.len(), 1 + 2 * 2);
    assert!(lines[1].starts_with("t,rl,,none,,1,1,400,"));
    assert!(dir.path().join("t_run.csv").exists());
}

#[test]
fn pinned_runs_are_byte_identical() {
    for agent in ["rl", "drl", "mnt_constraint"] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        assert_eq!(
            run("run", a.path(), &["--agent", agent]),
            run("run", b.path(), &["--agent", agent]),
            "{agent}"
        );
    }
}

#[test]
fn monitors_report_their_allocator() {
    let dir = tempfile::tempdir().unwrap();
    let csv = run("run", dir.path(), &["--agent", "mnt", "--alloc", "rf"]);
    assert!(csv
        .lines()
        .skip(1)
        .all(|l| l.starts_with("t,mnt,rf,none,,")));
}

#[test]
fn json_format_holds_the_same_columns() {
    let dir = tempfile::tempdir().unwrap();
    let text = run("run", dir.path(), &["--agent", "mnt", "--format", "json"]);
    let rows: Vec<serde_json::Value> = serde_json::from_str(&text).unwrap();
    // --episodes applies to the monitors as well
    assert_eq!(rows.len(), 2 * 2);
    assert_eq!(rows[0]["agent"], "mnt");
    assert_eq!(rows[0]["events"], 400);
    assert!(dir.path().join("t_run.json").exists());
}

#[test]
fn sweep_emits_one_mean_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let csv = run("sweep", dir.path(), &["--axis", "deadline"]);
    // four factors times six default contenders
    assert_eq!(csv.lines().count(), 1 + 24);
    assert!(csv
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(3) == Some("deadline") && l.split(',').nth(5) == Some("mean")));
    assert!(dir.path().join("t_sweep_deadline.csv").exists());
}

#[test]
fn episodes_adds_across_seed_means() {
    let dir = tempfile::tempdir().unwrap();
    let csv = run("episodes", dir.path(), &["--agent", "rl"]);
    let means = csv
        .lines()
        .filter(|l| l.split(',').nth(5) == Some("mean"))
        .count();
    assert_eq!(means, 2);
    assert_eq!(csv.lines().count(), 1 + 4 + 2);
}

#[test]
fn config_files_are_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "agent = \"mnt\"\nallocator = \"rf\"\nexperiment_id = \"fromfile\"\n",
    )
    .unwrap();
    let out = edgescale(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--events",
        "200",
        "--seed",
        "4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(written(&out)).unwrap();
    assert!(csv
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("fromfile,mnt,rf,none,,4,1,200,"));
}

#[test]
fn default_config_round_trips_through_a_file() {
    let out = edgescale(&["default-config"]);
    assert!(out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("d.toml");
    std::fs::write(&cfg, &out.stdout).unwrap();
    let out = edgescale(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--agent",
        "mnt",
        "--events",
        "100",
        "--seed",
        "1",
        "--pin-id",
        "d",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    written(&out);
}

fn assert_json_error(out: &Output) -> String {
    assert!(!out.status.success());
    assert_ne!(out.status.code(), Some(0));
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    let line = stderr.lines().next().expect("one error line");
    let v: serde_json::Value = serde_json::from_str(line).expect("error line is json");
    v["error"].as_str().expect("error field").to_string()
}

#[test]
fn bad_input_yields_a_json_error() {
    let msg = assert_json_error(&edgescale(&["run", "--agent", "nope"]));
    assert!(msg.contains("nope"), "{msg}");
    assert_json_error(&edgescale(&["sweep", "--axis", "sideways"]));
    assert_json_error(&edgescale(&["frobnicate"]));
    let msg = assert_json_error(&edgescale(&["run", "--config", "/definitely/missing.toml"]));
    assert!(msg.contains("missing.toml"), "{msg}");
}

#[test]
fn invalid_config_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "bogus_key = 3\n").unwrap();
    assert_json_error(&edgescale(&["run", "--config", cfg.to_str().unwrap()]));
    assert_json_error(&edgescale(&[
        "run",
        "--events",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
}

#[test]
fn unwritable_output_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = edgescale(&[
        "run",
        "--agent",
        "mnt",
        "--events",
        "50",
        "--seed",
        "1",
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert!(assert_json_error(&out).contains("sub"));
}

#[test]
fn models_can_be_saved() {
    let dir = tempfile::tempdir().unwrap();
    let models = dir.path().join("models");
    let mut args = vec![
        "run",
        "--agent",
        "rl",
        "--save-model",
        models.to_str().unwrap(),
    ];
    args.extend(small(dir.path(), &[]));
    written(&edgescale(&args));
    let text = std::fs::read_to_string(models.join("seed-1.qtable.tsv")).unwrap();
    assert!(text.lines().count() > 1);
    assert!(models.join("seed-2.qtable.tsv").exists());
}
