use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn satlink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_satlink")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("scenario.toml");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SHORT: &str = "run.duration_s = 0.5\nrun.warmup_s = 0.0\n";

#[test]
fn run_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SHORT);
    let out = tmp.path().join("out");
    let o = satlink(&["run", &cfg, "--out", out.to_str().unwrap(), "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "terminal0_series.csv",
        "terminal1_series.csv",
        "gateway_log.csv",
        "aggregates.csv",
        "manifest.txt",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("run.seed = 5"));
    // The manifest is itself a valid scenario file.
    let again = satlink::harness::ScenarioConfig::from_toml(&manifest).unwrap();
    assert_eq!(again.seed, 5);
    assert_eq!(again.duration_s, 0.5);
}

#[test]
fn same_inputs_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SHORT);
    let dirs = ["a", "b"].map(|d| tmp.path().join(d));
    for d in &dirs {
        assert!(satlink(&["run", &cfg, "--out", d.to_str().unwrap()]).status.success());
    }
    for f in ["terminal0_series.csv", "terminal1_series.csv", "gateway_log.csv", "aggregates.csv"] {
        assert_eq!(fs::read(dirs[0].join(f)).unwrap(), fs::read(dirs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn preset_writes_one_directory_per_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.duration_s = 0.5\nrun.warmup_s = 0.1\n");
    let out = tmp.path().join("comp");
    let o = satlink(&["run", &cfg, "--out", out.to_str().unwrap(), "--preset", "comp"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for run in ["loop_off", "loop_on"] {
        let manifest = fs::read_to_string(out.join(run).join("manifest.txt")).unwrap();
        assert!(manifest.starts_with(&format!("# {run}\n")));
        assert!(manifest.contains("run.duration_s = 0.5"));
    }
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let unknown = write_config(tmp.path(), "channel.bogus = 1\n");
    let o = satlink(&["run", &unknown, "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("channel.bogus"));

    let invalid = write_config(tmp.path(), "run.duration_s = -1.0\n");
    assert_eq!(satlink(&["run", &invalid, "--out", out]).status.code(), Some(2));

    let missing = tmp.path().join("nope.toml");
    assert_eq!(satlink(&["run", missing.to_str().unwrap(), "--out", out]).status.code(), Some(2));
    assert_eq!(satlink(&["run", &unknown, "--out", out, "--preset", "fig9"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SHORT);
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = blocker.join("out");
    let o = satlink(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}
