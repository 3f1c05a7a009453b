use std::path::Path;
use std::process::{Command, Output};

fn gpmpc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpmpc")).args(args).current_dir(dir).output().unwrap()
}

fn small_config(dir: &Path) {
    let text = r#"
seed = 3
[recording]
samples = 3000
[validate]
holdout_samples = 600
[gp]
max_iters = 20
[simulate]
controller = "onoff"
scenario = "mild"
t_init = 19.0
steps = 12
"#;
    std::fs::write(dir.join("small.toml"), text).unwrap();
}

#[test]
fn help_lists_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = gpmpc(&["--help"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["synth", "train", "validate", "simulate", "compare", "bench", "--config", "--seed", "--out"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn config_and_data_errors_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[mpc]\nhorizon = 0\n").unwrap();
    assert_eq!(gpmpc(&["train", "--config", "bad.toml"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("typo.toml"), "[mpc]\nhorizn = 3\n").unwrap();
    assert_eq!(gpmpc(&["train", "--config", "typo.toml"], dir.path()).status.code(), Some(2));
    assert_eq!(gpmpc(&["train", "--config", "missing.toml"], dir.path()).status.code(), Some(3));
    std::fs::write(dir.path().join("nodata.toml"), "[paths]\nrecording = \"nope.csv\"\n").unwrap();
    assert_eq!(gpmpc(&["train", "--config", "nodata.toml"], dir.path()).status.code(), Some(3));
    assert_eq!(gpmpc(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn synth_train_validate_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_config(d);
    let out = gpmpc(&["synth", "--config", "small.toml", "--out", "data"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("data/recording.csv").exists() && d.join("data/holdout.csv").exists());

    std::fs::write(
        d.join("trained.toml"),
        std::fs::read_to_string(d.join("small.toml")).unwrap() + "[paths]\nrecording = \"data/recording.csv\"\nholdout = \"data/holdout.csv\"\n",
    )
    .unwrap();
    let out = gpmpc(&["train", "--config", "trained.toml", "--out", "model_run"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let listed = String::from_utf8_lossy(&out.stdout);
    assert!(listed.contains("model_run/model/zone3.hyp") && listed.contains("model_run/manifest.toml"));
    let report = std::fs::read_to_string(d.join("model_run/train_report.txt")).unwrap();
    assert!(report.contains("zone1.points") && !report.contains("wall_time"));

    let with_models = std::fs::read_to_string(d.join("trained.toml")).unwrap().replace("[paths]\n", "[paths]\nmodels = \"model_run/model\"\n");
    std::fs::write(d.join("with_models.toml"), with_models).unwrap();
    let out = gpmpc(&["validate", "--config", "with_models.toml", "--out", "val"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(d.join("val/validation_report.txt")).unwrap();
    assert!(report.contains("coverage_2std ="));

    let out = gpmpc(&["simulate", "--config", "with_models.toml", "--out", "sim", "--seed", "9"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(d.join("sim/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 13);
    let manifest = std::fs::read_to_string(d.join("sim/manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 9") && manifest.contains("command = \"simulate\""));
}
