use std::path::Path;
use std::process::Command;

fn harnack(args: &[&str], out: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_harnack"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    (
        o.status.code().unwrap(),
        String::from_utf8_lossy(&o.stdout).into_owned() + &String::from_utf8_lossy(&o.stderr),
    )
}

fn header(text: &str, key: &str) -> Option<String> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix(&format!("# {key}=")).map(str::to_string))
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let idx = lines.next().unwrap().split(',').position(|c| c == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn usage_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(harnack(&["bogus"], d.path()).0, 2);
    assert_eq!(harnack(&["sweep", "--nope", "1"], d.path()).0, 2);
    assert_eq!(harnack(&["sweep", "--eps", "1,0.1"], d.path()).0, 2);
    assert_eq!(harnack(&["eigen", "--h", "x"], d.path()).0, 2);
    assert_eq!(harnack(&["report"], d.path()).0, 2);
}

#[test]
fn help_exits_zero() {
    let d = tempfile::tempdir().unwrap();
    let (code, text) = harnack(&["sweep", "--help"], d.path());
    assert_eq!(code, 0);
    assert!(text.contains("--slope-tol"));
}

#[test]
fn eigen_trace_at_a_half() {
    let d = tempfile::tempdir().unwrap();
    let (code, _) = harnack(&["eigen", "--a", "0.5"], d.path());
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(d.path().join("eigen.csv")).unwrap();
    let lambda = column(&csv, "lambda")[0];
    assert!((lambda - 0.5).abs() <= 0.05, "{lambda}");
    assert_eq!(header(&csv, "command").as_deref(), Some("eigen"));
    assert_eq!(header(&csv, "pass").as_deref(), Some("true"));
    assert!(header(&csv, "config_hash").is_some());
    assert!(header(&csv, "grid").is_some());
}

#[test]
fn config_file_and_flags_compose() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    std::fs::write(&cfg, "# trace at a=0\na = 0\nh = 1/32\n").unwrap();
    let (code, _) = harnack(&["eigen", "--config", cfg.to_str().unwrap(), "--quotient", "trace_omega"], d.path());
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(d.path().join("eigen.csv")).unwrap();
    assert!((column(&csv, "lambda")[0] - 3.0).abs() <= 0.1);
}

#[test]
fn sweep_at_a_zero_is_exactly_uniform() {
    let d = tempfile::tempdir().unwrap();
    let (code, _) = harnack(&["sweep", "--a", "0", "--h", "1/32"], d.path());
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(d.path().join("sweep.csv")).unwrap();
    let s = column(&csv, "seminorm");
    assert_eq!(s.len(), 6);
    assert!(s.iter().all(|&v| v == s[0]));
    assert_eq!(header(&csv, "uniformity_ratio").as_deref(), Some("1.00000000000e0"));
    assert!(d.path().join("verdict.txt").exists());
    assert!(d.path().join("sweep.dat").exists());
}

#[test]
fn window_violation_fails_the_run() {
    let d = tempfile::tempdir().unwrap();
    let (code, text) = harnack(&["sweep", "--mode", "odd_direct_c0", "--alpha", "0.7", "--h", "1/32"], d.path());
    assert_eq!(code, 1);
    assert!(text.contains("alpha window violated"), "{text}");
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        assert_eq!(harnack(&["sweep", "--h", "1/32"], d).0, 0);
        assert_eq!(harnack(&["solve"], d).0, 0);
    }
    for f in ["sweep.csv", "verdict.txt", "sweep.dat", "solve.csv", "field.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn certify_reports_the_gamma_rectangle() {
    let d = tempfile::tempdir().unwrap();
    let (code, _) = harnack(&["certify", "--phi-a", "0.5,-1"], d.path());
    let text = std::fs::read_to_string(d.path().join("certify.txt")).unwrap();
    assert!(text.contains("gamma_rectangle_exact"));
    let pass = header(&text, "pass").unwrap();
    assert_eq!(code, if pass == "true" { 0 } else { 1 });
    assert!(text.lines().filter(|l| l.starts_with("phi_bound")).all(|l| l.ends_with("pass")));
}

#[test]
fn report_merges_pass_lines() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(harnack(&["solve"], d.path()).0, 0);
    assert_eq!(harnack(&["eigen"], d.path()).0, 0);
    let (code, _) = harnack(&["report"], d.path());
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(d.path().join("summary.csv")).unwrap();
    assert_eq!(header(&csv, "pass").as_deref(), Some("true"));
    assert!(csv.contains("solve.csv,solve,"));
    assert!(csv.contains("eigen.csv,eigen,"));

    std::fs::write(d.path().join("stale.txt"), "# command=x\n# pass=false\n").unwrap();
    assert_eq!(harnack(&["report"], d.path()).0, 1);
}

#[test]
fn out_dir_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_harnack"))
        .args(["eigen", "--h", "1/32"])
        .env(harnack_cli::OUT_ENV, d.path())
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(d.path().join("eigen.csv").exists());
}
