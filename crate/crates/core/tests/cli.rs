use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use levy_penalize::path_sim::read_path_dump;
use levy_penalize::runner::{parse_manifest, Suite};

fn cli(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levy-penalize"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

#[test]
fn identities_exit_zero_and_write_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["identities", "--model", "stable:alpha=1,rho=0.5", "--out", "ids.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("ids.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["model", "check", "param_q", "param_lambda_or_x", "residual", "tolerance", "pass"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert!(rows.len() > 10);
    assert!(rows.iter().all(|r| &r[0] == "stable:alpha=1,rho=0.5" && &r[6] == "true"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec!["exp-clock", "--paths", "3000", "--dt", "0.01", "--clocks", "1,0.1", "--seed", "42", "--out", out]
    };
    assert!(cli(&args("a.csv"), dir.path()).status.code().is_some());
    assert!(cli(&args("b.csv"), dir.path()).status.code().is_some());
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    let b = fs::read(dir.path().join("b.csv")).unwrap();
    assert!(a.len() > 100);
    assert_eq!(a, b);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, out: &str| {
        Command::new(env!("CARGO_BIN_EXE_levy-penalize"))
            .args(["penalized-sample", "--paths", "5000", "--dt", "0.01", "--t", "1", "--out", out])
            .env("LEVY_PENALIZE_THREADS", threads)
            .current_dir(dir.path())
            .output()
            .unwrap()
    };
    run("1", "one.csv");
    run("3", "three.csv");
    assert_eq!(
        fs::read(dir.path().join("one.csv")).unwrap(),
        fs::read(dir.path().join("three.csv")).unwrap()
    );
}

#[test]
fn usage_errors_name_the_token() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["exp-clock", "--model", "gaussian", "--out", "x.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gaussian"));

    let out = cli(&["mass", "--weight", "indicator:b=1", "--out", "x.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("indicator:b=1"));

    let out = cli(&["exp-clock", "--clocks", "", "--out", "x.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("x.csv").exists());

    let out = cli(&["exp-clock", "--tol", "sigmas"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_config_file_and_manifest_records_it() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.cfg"),
        "[run]\nmodel = brownian\nclocks = 4, 16\nclock_kind = const\npaths = 2000\ndt = 0.01\nseed = 5\n\n[tolerance]\nsigmas = 4\n",
    )
    .unwrap();
    let out = cli(
        &["mass", "--config", "run.cfg", "--seed", "9", "--out", "reports/deep/mass.csv"],
        dir.path(),
    );
    assert!(out.status.code().is_some_and(|c| c < 2), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = fs::read_to_string(dir.path().join("reports/deep/mass.manifest.json")).unwrap();
    let m = parse_manifest(&manifest).unwrap();
    assert_eq!(m.config.suite, Suite::Mass);
    assert_eq!(m.seed, 9);
    assert_eq!(m.config.clocks, vec![4.0, 16.0]);
    assert_eq!(m.config.tolerance.sigmas, 4.0);
    assert!(!m.build_id.is_empty());
    let csv = fs::read_to_string(dir.path().join("reports/deep/mass.csv")).unwrap();
    // One mass row and one mass-limit row per clock.
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().skip(1).all(|l| l.contains(",2000,0.01,9,")));
}

#[test]
fn failing_rows_give_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(
        &["mass", "--paths", "500", "--dt", "0.01", "--clocks", "1", "--tol", "sigmas=1e-9", "--tol", "mass_bias_exp=1e-9", "--out", "m.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(fs::read_to_string(dir.path().join("m.csv")).unwrap().contains(",false"));
}

#[test]
fn debug_writes_a_readable_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(
        &["debug", "--model", "stable:alpha=1.5,rho=0.5", "--horizon", "0.5", "--dt", "0.01", "--out", "p.bin"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (dt, x, s) = read_path_dump(fs::File::open(dir.path().join("p.bin")).unwrap()).unwrap();
    assert_eq!(dt, 0.01);
    assert_eq!(x.len(), 51);
    assert_eq!(x[0], 0.0);
    assert!(x.iter().zip(&s).all(|(x, s)| s >= x));
    assert!(s.windows(2).all(|w| w[1] >= w[0]));

    let out = cli(&["debug", "--model", "stable:alpha=1.5,rho=0.5", "--refine", "on", "--out", "q.bin"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}
