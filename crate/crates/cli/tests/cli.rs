use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use servo_smc::scenario_file::{emit_default, parse_scenario};
use servo_smc::sim::Scenario;

fn servo_smc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_servo-smc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn write_scenario(dir: &Path, body: &str) -> String {
    let file = dir.join("scenario.toml");
    fs::write(&file, body).unwrap();
    path(&file).to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn csv_rows(file: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(file).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn simulate_default_writes_500_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let res = servo_smc(&["simulate", "--out", path(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));

    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next(),
        Some("t,r,y,e,e_dot,s,u_pid,u_smc,u_cmd,u_applied,V,V_dot,d_out")
    );
    assert_eq!(lines.count(), 500);
    assert!(out.join("metrics.csv").is_file());
    let stab = fs::read_to_string(out.join("stability.txt")).unwrap();
    assert!(stab.contains("gain_condition_met = "));
}

#[test]
fn zero_duration_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(tmp.path(), "duration = 0.0\n");
    let res = servo_smc(&[
        "simulate",
        "--scenario",
        &sc,
        "--out",
        path(&tmp.path().join("o")),
    ]);
    assert!(!res.status.success());
    assert!(stderr(&res).contains("duration"), "{}", stderr(&res));
    assert!(!tmp.path().join("o").join("trace.csv").exists());
}

#[test]
fn misspelled_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(tmp.path(), "duration = 5.0\n\n[controller]\nlamda1 = 2.0\n");
    let res = servo_smc(&["simulate", "--scenario", &sc, "--out", path(tmp.path())]);
    assert!(!res.status.success());
    let msg = stderr(&res);
    assert!(msg.contains("lamda1"), "{msg}");
    assert!(msg.contains("line 4"), "{msg}");
}

#[test]
fn compare_three_presets() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let res = servo_smc(&[
        "compare",
        "--controllers",
        "smcpid,kuhn,naive",
        "--out",
        path(out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    for label in ["smcpid", "kuhn", "naive"] {
        assert!(out.join(format!("trace_{label}.csv")).is_file());
    }
    let rows = csv_rows(&out.join("comparison.csv"));
    let labels: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(labels, ["smcpid", "kuhn", "naive"]);
    let script = fs::read_to_string(out.join("plot.gp")).unwrap();
    assert!(script.contains("trace_kuhn.csv"));
}

#[test]
fn compare_single_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let res = servo_smc(&[
        "compare",
        "--controllers",
        "smcpid",
        "--out",
        path(tmp.path()),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(csv_rows(&tmp.path().join("comparison.csv")).len(), 1);
}

#[test]
fn compare_rejects_duplicates_and_unknown_presets() {
    let tmp = tempfile::tempdir().unwrap();
    let dup = servo_smc(&[
        "compare",
        "--controllers",
        "kuhn,kuhn",
        "--out",
        path(tmp.path()),
    ]);
    assert!(!dup.status.success());
    assert!(stderr(&dup).contains("duplicate"), "{}", stderr(&dup));

    let unknown = servo_smc(&[
        "compare",
        "--controllers",
        "smcpid,lqr",
        "--out",
        path(tmp.path()),
    ]);
    assert!(!unknown.status.success());
    let msg = stderr(&unknown);
    assert!(
        msg.contains("lqr") && msg.contains("smcpid, kuhn, naive"),
        "{msg}"
    );
}

#[test]
fn sweep_writes_subdirectories_in_order() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let res = servo_smc(&[
        "sweep",
        "--axis",
        "plant.dK",
        "--values",
        "-0.2,0,0.2",
        "--out",
        path(out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let mut dirs: Vec<String> = fs::read_dir(out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    dirs.sort();
    assert_eq!(
        dirs,
        ["000_plant.dK=-0.2", "001_plant.dK=0", "002_plant.dK=0.2"]
    );
    for d in &dirs {
        assert!(out.join(d).join("trace.csv").is_file());
    }
    let values: Vec<String> = csv_rows(&out.join("sweep_summary.csv"))
        .into_iter()
        .map(|r| r[0].clone())
        .collect();
    assert_eq!(values, ["-0.2", "0", "0.2"]);
}

#[test]
fn eta_zero_sweep_matches_pure_pid() {
    let tmp = tempfile::tempdir().unwrap();
    let sweep_out = tmp.path().join("sweep");
    let res = servo_smc(&[
        "sweep",
        "--axis",
        "smc.eta",
        "--values",
        "0,0.5,1",
        "--out",
        path(&sweep_out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));

    // The same PID gains as a pure PID law.
    let pid = "[controller]\npreset = \"kuhn\"\nkp = 25.1\nki = 30.5\nkd = 0.293\n";
    let sc = write_scenario(tmp.path(), pid);
    let pid_out = tmp.path().join("pid");
    let res = servo_smc(&["simulate", "--scenario", &sc, "--out", path(&pid_out)]);
    assert!(res.status.success(), "{}", stderr(&res));

    let sweep_metrics = csv_rows(&sweep_out.join("000_smc.eta=0").join("metrics.csv"));
    let pid_metrics = csv_rows(&pid_out.join("metrics.csv"));
    assert_eq!(sweep_metrics, pid_metrics);

    let summary = csv_rows(&sweep_out.join("sweep_summary.csv"));
    assert_eq!(summary.len(), 3);
    assert_ne!(summary[0][4], summary[2][4], "eta changes the iae");
}

#[test]
fn sweep_rejects_nonpositive_time_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let res = servo_smc(&[
        "sweep",
        "--axis",
        "plant.dTau",
        "--values",
        "0,-1",
        "--out",
        path(&out),
    ]);
    assert!(!res.status.success());
    assert!(stderr(&res).contains("time constant"), "{}", stderr(&res));
    assert!(!out.exists(), "nothing is written when a value is invalid");
}

#[test]
fn sweep_rejects_unknown_axis() {
    let tmp = tempfile::tempdir().unwrap();
    let res = servo_smc(&[
        "sweep",
        "--axis",
        "plant.mass",
        "--values",
        "1",
        "--out",
        path(tmp.path()),
    ]);
    assert!(!res.status.success());
    assert!(stderr(&res).contains("plant.dK"), "{}", stderr(&res));
}

#[test]
fn traces_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(tmp.path(), "noise_amplitude = 0.01\nseed = 7\n");
    let mut traces = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let res = servo_smc(&["simulate", "--scenario", &sc, "--out", path(&out)]);
        assert!(res.status.success(), "{}", stderr(&res));
        traces.push(fs::read(out.join("trace.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);

    let out = tmp.path().join("c");
    let res = servo_smc(&[
        "simulate",
        "--scenario",
        &sc,
        "--seed",
        "8",
        "--out",
        path(&out),
    ]);
    assert!(res.status.success());
    assert_ne!(fs::read(out.join("trace.csv")).unwrap(), traces[0]);
}

#[test]
fn emit_default_round_trips() {
    let res = servo_smc(&["--emit-default"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    assert_eq!(text, emit_default());
    assert_eq!(parse_scenario(&text).unwrap(), Scenario::default());
}

#[test]
fn unwritable_output_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let res = servo_smc(&["simulate", "--out", path(&blocker.join("sub"))]);
    assert!(!res.status.success());
}

#[test]
fn zero_reference_keeps_trace_but_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        tmp.path(),
        "[[reference]]\nstart = 0.0\nkind = \"step\"\ntarget_rpm = 0.0\n",
    );
    let out = tmp.path().join("o");
    let res = servo_smc(&["simulate", "--scenario", &sc, "--out", path(&out)]);
    assert!(!res.status.success());
    assert!(stderr(&res).contains("zero step"), "{}", stderr(&res));
    assert!(out.join("trace.csv").is_file());
    assert!(!out.join("metrics.csv").exists());
}

#[test]
fn ramp_profile_is_evaluated() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        tmp.path(),
        "[[reference]]\nstart = 0.0\nkind = \"ramp\"\ntarget_rpm = 300.0\n",
    );
    let out = tmp.path().join("o");
    let res = servo_smc(&["simulate", "--scenario", &sc, "--out", path(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(csv_rows(&out.join("metrics.csv")).len(), 1);
}
