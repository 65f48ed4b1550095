//! Black-box tests of the command-line interface via the built binary.

use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

fn exe() -> &'static str {
    env!("CARGO_BIN_EXE_sins-budget")
}

fn run(args: &[&str]) -> Output {
    Command::new(exe()).args(args).output().expect("binary runs")
}

/// A fast scenario: 60 s static run, reports every 20 s.
fn small_scenario() -> serde_json::Value {
    serde_json::json!({
        "imu": {
            "sample_rate": "100 Hz",
            "init_att_horiz": "30 arcsec",
            "init_att_yaw": "3 arcmin",
            "init_vel_horiz": "0.2 m/s",
            "init_pos_horiz": "2 m",
            "gyro_bias": "0.01 deg/h",
            "acc_bias": "100 ug",
            "gyro_sf": "50 ppm",
            "acc_sf": "50 ppm",
            "gyro_mount": "5 arcsec",
            "acc_mount": "5 arcsec",
            "arw": "0.001 deg/sqrt(h)",
            "vrw": "1 ug/sqrt(Hz)"
        },
        "scenario": {
            "type": "static",
            "lat": "34 deg",
            "duration": "60 s"
        },
        "run": { "step": "1 s", "report_interval": "20 s" },
        "montecarlo": { "members": 500, "seed": 7 }
    })
}

fn write_scenario(dir: &Path, value: &serde_json::Value) -> std::path::PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
    path
}

#[test]
fn budget_writes_artifacts_and_shares_sum_to_one() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = write_scenario(tmp.path(), &small_scenario());
    let out = tmp.path().join("out");
    let res = run(&["budget", "--scenario", scen.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for name in [
        "budget.csv",
        "budget.txt",
        "budget_attitude.svg",
        "budget_velocity.svg",
        "budget_position.svg",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }

    let csv = std::fs::read_to_string(out.join("budget.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "epoch,output,source,sigma,share");
    let mut shares: HashMap<(String, String), f64> = HashMap::new();
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 5, "bad row: {line}");
        let share: f64 = cols[4].parse().unwrap();
        assert!((0.0..=1.0 + 1e-9).contains(&share), "share out of range: {line}");
        *shares.entry((cols[0].to_string(), cols[1].to_string())).or_default() += share;
    }
    // 3 epochs x 7 outputs, each summing to one across the 34 sources.
    assert_eq!(shares.len(), 21);
    for ((epoch, output), total) in shares {
        assert!(
            (total - 1.0).abs() < 1e-6,
            "shares at ({epoch}, {output}) sum to {total}"
        );
    }
}

#[test]
fn existing_outputs_need_force() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = write_scenario(tmp.path(), &small_scenario());
    let out = tmp.path().join("out");
    let args = ["budget", "--scenario", scen.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert!(run(&args).status.success());
    let first = std::fs::read(out.join("budget.csv")).unwrap();

    let second = run(&args);
    assert!(!second.status.success());
    let err = String::from_utf8_lossy(&second.stderr);
    assert!(err.contains("--force"), "unexpected stderr: {err}");

    let mut forced: Vec<&str> = args.to_vec();
    forced.push("--force");
    assert!(run(&forced).status.success());
    let rerun = std::fs::read(out.join("budget.csv")).unwrap();
    assert_eq!(first, rerun, "reruns must be byte-identical");
}

#[test]
fn trajgen_roundtrip_and_force() {
    let tmp = tempfile::tempdir().unwrap();
    let mut scenario = small_scenario();
    scenario["scenario"] = serde_json::json!({
        "type": "single_axis_rotation",
        "lat": "34 deg",
        "duration": "180 s",
        "rotation": { "rate": "6 deg/s", "turn_angle": "360 deg", "dwell": "30 s" }
    });
    scenario["run"]["report_interval"] = "60 s".into();
    let scen = write_scenario(tmp.path(), &scenario);
    let out = tmp.path().join("traj");
    let args = ["trajgen", "--scenario", scen.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert!(run(&args).status.success());

    let samples = sins_budget::trajectory::load_trajectory(out.join("trajectory.csv")).unwrap();
    assert_eq!(samples.len(), 181);
    // The generated file must parse back into an orthonormal attitude series.
    for s in &samples {
        let c = s.cbn;
        let err = (c * c.transpose() - nalgebra::Matrix3::identity()).norm();
        assert!(err < 1e-9, "t = {}: {err}", s.t);
    }

    assert!(!run(&args).status.success(), "overwrite without --force must fail");
    let mut forced: Vec<&str> = args.to_vec();
    forced.push("--force");
    assert!(run(&forced).status.success());
}

#[test]
fn montecarlo_requires_section_and_reports_consistently() {
    let tmp = tempfile::tempdir().unwrap();
    let mut no_mc = small_scenario();
    no_mc.as_object_mut().unwrap().remove("montecarlo");
    let scen = write_scenario(tmp.path(), &no_mc);
    let out = tmp.path().join("mc");
    let res = run(&["montecarlo", "--scenario", scen.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("montecarlo"));

    let scen = write_scenario(tmp.path(), &small_scenario());
    let res = run(&["montecarlo", "--scenario", scen.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let csv = std::fs::read_to_string(out.join("mc_compare.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "source,output,analytic_var,mc_var,ratio,status"
    );
    let any_fail = lines.clone().any(|l| l.ends_with(",fail"));
    // Exit code and file contents must tell the same story.
    assert_eq!(res.status.code(), Some(if any_fail { 2 } else { 0 }));
    assert!(lines.clone().count() > 100);
    // Seed override changes the sampled column but keeps the layout.
    let res2 = run(&[
        "montecarlo",
        "--scenario",
        scen.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "12345",
        "--force",
    ]);
    assert!(res2.status.code() == Some(0) || res2.status.code() == Some(2));
    let csv2 = std::fs::read_to_string(out.join("mc_compare.csv")).unwrap();
    assert_ne!(csv, csv2, "a different seed must change the Monte-Carlo column");
}

#[test]
fn scenario_errors_are_diagnosed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");

    // Unknown key is named in the error.
    let mut bad = small_scenario();
    bad["imu"]["gyro_bais"] = "0.01 deg/h".into();
    let scen = write_scenario(tmp.path(), &bad);
    let res = run(&["budget", "--scenario", scen.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("gyro_bais"));

    // Wrong unit for a field is named too.
    let mut bad = small_scenario();
    bad["imu"]["gyro_bias"] = "0.01 m/s".into();
    let scen = write_scenario(tmp.path(), &bad);
    let res = run(&["budget", "--scenario", scen.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("gyro_bias") && err.contains("m/s"), "{err}");

    // Missing file.
    let res = run(&["budget", "--scenario", "/nonexistent.json", "--out", out.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("nonexistent"));
}

#[test]
fn single_source_scenario_takes_full_share() {
    // Only the initial attitude errors are nonzero, so they must own all of
    // the attitude variance at every epoch.
    let tmp = tempfile::tempdir().unwrap();
    let mut scenario = small_scenario();
    for (key, zero) in [
        ("init_vel_horiz", "0 m/s"),
        ("init_pos_horiz", "0 m"),
        ("gyro_bias", "0 deg/h"),
        ("acc_bias", "0 ug"),
        ("gyro_sf", "0 ppm"),
        ("acc_sf", "0 ppm"),
        ("gyro_mount", "0 arcsec"),
        ("acc_mount", "0 arcsec"),
        ("arw", "0 deg/sqrt(h)"),
        ("vrw", "0 ug/sqrt(Hz)"),
    ] {
        scenario["imu"][key] = zero.into();
    }
    let scen = write_scenario(tmp.path(), &scenario);
    let out = tmp.path().join("out");
    let res = run(&["budget", "--scenario", scen.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(out.join("budget.csv")).unwrap();
    let mut att_share = 0.0;
    let mut att_rows = 0;
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[1] == "att_E" && cols[0] == "60" {
            att_rows += 1;
            if cols[2].starts_with("init_att") {
                att_share += cols[4].parse::<f64>().unwrap();
            }
        }
    }
    assert_eq!(att_rows, 34);
    assert!((att_share - 1.0).abs() < 1e-9, "initial attitude share {att_share}");
}
