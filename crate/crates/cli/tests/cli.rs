use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn stirfcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stirfcs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn passing_run_exits_zero_and_leaves_only_final_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = stirfcs(&["--scenario", "lz-sweep", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["lz_sweep.csv", "report.json"]);
    let r = report(&out);
    assert_eq!(r["totals"]["checks"], 5);
    assert_eq!(r["totals"]["gating_failed"], 0);
    let csv = fs::read_to_string(out.join("lz_sweep.csv")).unwrap();
    assert!(csv.starts_with("exponent[1],P_numeric[probability],"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn tightened_tolerances_fail_with_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = stirfcs(&[
        "--scenario",
        "lz-sweep",
        "--out",
        out,
        "--tolerance-scale",
        "1e-4",
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL: lz_probability"));
    assert!(
        report(tmp.path())["totals"]["gating_failed"]
            .as_u64()
            .unwrap()
            > 0
    );
}

#[test]
fn configuration_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(code(&stirfcs(&["--scenario", "nope", "--out", out])), 2);
    assert_eq!(
        code(&stirfcs(&[
            "--config",
            "/nonexistent/run.toml",
            "--out",
            out
        ])),
        2
    );
    let unknown = write_config(
        tmp.path(),
        "scenario = \"lz-sweep\"\n[protocol]\nkind = \"linear-ramp\"\nsites = 2\nc = 0.1\nspeed = 2\n",
    );
    assert_eq!(code(&stirfcs(&["--config", &unknown, "--out", out])), 2);
    assert_eq!(
        code(&stirfcs(&[
            "--scenario",
            "lz-sweep",
            "--out",
            out,
            "--tolerance-scale",
            "0"
        ])),
        2
    );
    assert_eq!(
        code(&stirfcs(&[
            "--scenario",
            "lz-sweep",
            "--out",
            out,
            "--sweep",
            "c=0:1"
        ])),
        2
    );
    assert!(!Path::new(out).join("report.json").exists());
}

#[test]
fn numerical_failure_exits_three() {
    // too coarse a grid to follow the levels through the crossing
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "scenario = \"levels\"\n[protocol]\nkind = \"linear-ramp\"\nc = 0.1\nudot = 0.1\n\
         [levels]\nsamples = 40\n",
    );
    let out = tmp.path().join("out");
    let o = stirfcs(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unwritable_output_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let out = blocker.join("out");
    assert_eq!(
        code(&stirfcs(&[
            "--scenario",
            "lz-sweep",
            "--out",
            out.to_str().unwrap()
        ])),
        3
    );
}

#[test]
fn empty_sweep_writes_a_header_only_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = stirfcs(&[
        "--scenario",
        "stir-cycle",
        "--out",
        out,
        "--sweep",
        "lambda_cw=0:1:0",
    ]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(tmp.path().join("sweep_lambda_cw.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("sweep_lambda_cw[1],lambda_ccw[1],lambda_cw[1],"));
    assert_eq!(report(tmp.path())["totals"]["checks"], 0);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = stirfcs(&["--scenario", "single-path", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    fs::read(&p).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    };
    let a = run("a");
    assert_eq!(a.len(), 3);
    assert_eq!(a, run("b"));
}
