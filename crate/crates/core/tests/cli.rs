use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn fibrewise(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fibrewise"))
        .args(args)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .expect("binary runs")
}

fn with_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join("out").join(file)).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn verify_rep_reference_passes() {
    let tmp = TempDir::new().unwrap();
    let o = fibrewise(tmp.path(), &["verify-rep"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = read(tmp.path(), "verify_rep.txt");
    assert!(text.contains("passed: 16"));
}

#[test]
fn zero_tuple_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = with_config(
        tmp.path(),
        "zero.cfg",
        "t0 = 0\nt_theta = 0, 0, 0, 0\nm = 0, 0, 0, 0\nn = 0, 0, 0, 0\n",
    );
    let o = fibrewise(tmp.path(), &["verify-rep", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let o = fibrewise(tmp.path(), &["certify", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(read(tmp.path(), "summary.txt").contains("ExponentBelowFour"));
}

#[test]
fn written_orientation_reports_sign_violation() {
    let tmp = TempDir::new().unwrap();
    let cfg = with_config(tmp.path(), "sign.cfg", "theta_sign = 1\n");
    let o = fibrewise(tmp.path(), &["certify", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let summary = read(tmp.path(), "summary.txt");
    assert!(summary.contains("first: SignViolation"), "{summary}");
}

#[test]
fn certify_is_deterministic_and_independent_of_d() {
    let tmp = TempDir::new().unwrap();
    let o = fibrewise(tmp.path(), &["certify", "--seed", "11"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cert = read(tmp.path(), "certificate.csv");
    let mixed = read(tmp.path(), "mixed_transitions.csv");
    assert!(read(tmp.path(), "summary.txt").contains("overall: PASS"));

    let o = fibrewise(tmp.path(), &["certify", "--seed", "11"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read(tmp.path(), "certificate.csv"), cert);
    assert_eq!(read(tmp.path(), "mixed_transitions.csv"), mixed);

    let cfg = with_config(tmp.path(), "d8.cfg", "d = 8\n");
    let o = fibrewise(tmp.path(), &["certify", "--seed", "11", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read(tmp.path(), "certificate.csv"), cert);
}

#[test]
fn certify_svg_output() {
    let tmp = TempDir::new().unwrap();
    let o = fibrewise(tmp.path(), &["certify", "--grid", "32", "--svg"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let svg = read(tmp.path(), "exponent.svg");
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(read(tmp.path(), "certificate.csv").lines().count(), 2 + 32);
}

#[test]
fn holonomy_writes_tables() {
    let tmp = TempDir::new().unwrap();
    let o = fibrewise(tmp.path(), &["holonomy", "--grid", "16"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = read(tmp.path(), "holonomy.csv");
    assert!(csv.lines().next().unwrap().starts_with("index,omega"));
    assert_eq!(csv.lines().count(), 1 + 4 * 16);
    assert!(read(tmp.path(), "deviation.csv").lines().count() > 1);
}

#[test]
fn malformed_presentation_names_the_line() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.pres"), "generators: a b\na * * b\n").unwrap();
    let cfg = with_config(tmp.path(), "p.cfg", "presentation = bad.pres\n");
    let o = fibrewise(tmp.path(), &["verify-rep", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.pres:2:"), "{}", stderr(&o));
}

#[test]
fn malformed_config_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = with_config(tmp.path(), "bad.cfg", "t = 10\nnot a pair\n");
    let o = fibrewise(tmp.path(), &["certify", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let cfg = with_config(tmp.path(), "odd.cfg", "d = 6\n");
    let o = fibrewise(tmp.path(), &["verify-rep", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = with_config(tmp.path(), "unknown.cfg", "colour = red\n");
    let o = fibrewise(tmp.path(), &["verify-rep", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn trace_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let o = fibrewise(tmp.path(), &["trace", "--start", "0.5,1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(read(tmp.path(), "trace.csv").lines().count() > 2);

    // the stable set of a saddle never leaves the band
    let o = fibrewise(tmp.path(), &["trace", "--start", "1,0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(read(tmp.path(), "trace.csv").lines().count() > 2);

    for start in ["", "0,0", "x,1"] {
        let o = fibrewise(tmp.path(), &["trace", "--start", start]);
        assert_eq!(o.status.code(), Some(2), "start {start:?}");
    }
}

#[test]
fn solve_exponents_writes_solutions() {
    let tmp = TempDir::new().unwrap();
    let cfg = with_config(tmp.path(), "s.cfg", "solve_range = -1, 1\n");
    let o = fibrewise(tmp.path(), &["solve-exponents", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = read(tmp.path(), "solutions.csv");
    assert!(csv.lines().count() > 1);
    for line in csv.lines().skip(1) {
        let v: Vec<i64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v.len(), 13);
        assert!(v.iter().all(|x| x.abs() <= 1));
        assert_eq!(v[3], -v[1]);
    }
}
