use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jetgeom"))
}

fn metric(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../metrics").join(format!("{name}.metric"))
}

fn run(args: &[&str], file: Option<&PathBuf>) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    if let Some(f) = file {
        cmd.arg(f);
    }
    cmd.output().expect("binary runs")
}

fn value<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = ")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{stdout}"))
}

fn real(stdout: &str, key: &str) -> f64 {
    value(stdout, key).parse().unwrap()
}

fn temp_metric(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".metric").tempfile().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

#[test]
fn classify_euclidean() {
    let out = run(&["classify"], Some(&metric("euclidean")));
    assert_eq!(out.status.code(), Some(0));
    let s = String::from_utf8(out.stdout).unwrap();
    assert!(s.lines().next().unwrap().starts_with("# flat, c=0.000000e0"));
    assert_eq!(value(&s, "class"), "flat");
    assert_eq!(real(&s, "c"), 0.0);
    assert_eq!(value(&s, "fiber_dim"), "3");
    assert_eq!(value(&s, "check.mc_constancy"), "pass");
}

#[test]
fn classify_space_forms() {
    for (name, class, c) in [("sphere", "spherical", 1.0), ("disk", "hyperbolic", -1.0), ("polar", "flat", 0.0), ("sphere3", "spherical", 1.0)] {
        let out = run(&["classify"], Some(&metric(name)));
        assert_eq!(out.status.code(), Some(0), "{name}");
        let s = String::from_utf8(out.stdout).unwrap();
        assert_eq!(value(&s, "class"), class);
        assert!((real(&s, "c") - c).abs() < 1e-6, "{name}");
        assert!(real(&s, "residual") >= 0.0);
        assert!(!s.contains("= fail"), "{s}");
    }
}

#[test]
fn classify_ellipsoid_is_not_constant() {
    let out = run(&["classify"], Some(&metric("ellipsoid")));
    assert_eq!(out.status.code(), Some(0));
    let s = String::from_utf8(out.stdout).unwrap();
    assert_eq!(value(&s, "class"), "non_constant");
    assert!(real(&s, "residual") > 1e-2);
    assert_eq!(value(&s, "check.constant_curvature"), "fail");
}

#[test]
fn killing_reports() {
    for (name, dim, sig) in [("sphere", "3", "[0, 0, 3]"), ("euclidean", "3", "[0, 2, 1]"), ("disk", "3", "[2, 0, 1]"), ("euclidean3", "6", "[0, 3, 3]")] {
        let out = run(&["killing"], Some(&metric(name)));
        assert_eq!(out.status.code(), Some(0), "{name}");
        let s = String::from_utf8(out.stdout).unwrap();
        assert_eq!(value(&s, "dim"), dim);
        assert_eq!(value(&s, "signature"), sig);
        assert!(real(&s, "defect") < 1e-6);
        assert!(real(&s, "jacobi_residual") <= 1e-8);
    }
}

#[test]
fn killing_ellipsoid_fails_precondition() {
    let out = run(&["killing"], Some(&metric("ellipsoid")));
    assert_eq!(out.status.code(), Some(3));
    let s = String::from_utf8(out.stdout).unwrap();
    assert!(real(&s, "defect") > 1e-3);
    let e = String::from_utf8(out.stderr).unwrap();
    assert!(e.contains("not constant"), "{e}");
}

#[test]
fn parse_errors_exit_2() {
    let text = std::fs::read_to_string(metric("sphere")).unwrap().replace("g[2][2]", "g[1][3]");
    let f = temp_metric(&text);
    let out = run(&["classify"], Some(&f.path().to_path_buf()));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("index `3` outside 1..2"));
    assert_eq!(run(&["killing", "/nonexistent/file.metric"], None).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"], None).status.code(), Some(2));
}

#[test]
fn invalid_metric_exits_3() {
    let f = temp_metric("dimension = 2\ng[1][1] = 1\ng[2][2] = x1\ndomain = [-1, 1] x [-1, 1]\n");
    let out = run(&["classify"], Some(&f.path().to_path_buf()));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().contains("positive-definite"));
}

#[test]
fn affine_file() {
    let out = run(&["killing"], Some(&metric("polar_affine")));
    assert_eq!(out.status.code(), Some(0));
    let s = String::from_utf8(out.stdout).unwrap();
    assert_eq!(value(&s, "kind"), "affine");
    assert_eq!(value(&s, "dim"), "6");
}

#[test]
fn reports_are_deterministic() {
    let a = run(&["killing"], Some(&metric("disk"))).stdout;
    let b = run(&["killing"], Some(&metric("disk"))).stdout;
    assert_eq!(a, b);
}

#[test]
fn selftest_passes_and_counts() {
    let out = run(&["selftest"], None);
    assert_eq!(out.status.code(), Some(0));
    let s = String::from_utf8(out.stdout).unwrap();
    for suite in ["group_laws", "bracket_laws", "equivalence"] {
        assert_eq!(value(&s, &format!("suite.{suite}")), "pass");
        assert!(value(&s, &format!("suite.{suite}.checks")).parse::<usize>().unwrap() > 0);
    }
}

#[test]
fn corrupted_convention_is_caught() {
    let out = run(&["selftest", "--corrupt-convention"], None);
    assert_eq!(out.status.code(), Some(1));
    let e = String::from_utf8(out.stderr).unwrap();
    assert!(e.contains("failing suite: equivalence"), "{e}");
    let s = String::from_utf8(out.stdout).unwrap();
    assert_eq!(value(&s, "suite.equivalence"), "fail");
    assert_eq!(value(&s, "suite.group_laws"), "pass");
}

#[test]
fn reals_have_17_digits() {
    let s = String::from_utf8(run(&["classify"], Some(&metric("sphere"))).stdout).unwrap();
    let c = value(&s, "c");
    let mantissa = c.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
    assert_eq!(mantissa.len(), 17, "{c}");
}
