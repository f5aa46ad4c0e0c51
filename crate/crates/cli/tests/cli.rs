use std::path::PathBuf;
use std::process::{Command, Output};

use ivelox_cli::csv::{emit_csv, Table};

fn ivelox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ivelox"))
        .args(args)
        .env_remove("IVELOX_SEED")
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name]
        .iter()
        .collect();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn floats(line: &str) -> Vec<f64> {
    line.split(',').map(|c| c.parse().unwrap()).collect()
}

#[test]
fn iv_from_flags() {
    let o = ivelox(&["iv", "--r", "20", "--p", "0.01", "--lambda", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let iv: f64 = stdout(&o).trim().parse().unwrap();
    assert!((iv - 0.98).abs() < 1e-12);
}

#[test]
fn iv_of_two_type_scenario() {
    let o = ivelox(&["iv", "--scenario", &scenario("fig5a.json")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for line in stdout(&o).lines() {
        let iv: f64 = line.split('\t').nth(1).unwrap().parse().unwrap();
        assert!((iv - 0.881).abs() < 0.005, "{line}");
    }
}

#[test]
fn iv_per_series() {
    let o = ivelox(&["iv", "--scenario", &scenario("fig4.json")]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("r=20\t0.98"), "{text}");
}

#[test]
fn bounds_row_is_sandwiched() {
    let o = ivelox(&["bounds", "--r", "96", "--N", "100", "--p", "0.02"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("r,N,p_eff,pe_lower,pe_exact,pe_chernoff,pe_sum")
    );
    let v = floats(lines.next().unwrap());
    assert_eq!(&v[..3], &[96.0, 100.0, 0.02]);
    assert!(v[3] <= v[4] && v[4] <= v[5].min(v[6]), "{v:?}");
    assert!(lines.next().is_none());
}

#[test]
fn non_simplex_type_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"profile": {"kind": "fixed_type", "P": [0.01, 0.1], "Q": [0.6, 0.6], "r": 20},
            "arrivals": {"kind": "geometric", "lambda": 0.5}, "num_packets": 1000,
            "sweep": {"variable": "alpha", "values": [0.8]}, "outputs": ["pe_exact"]}"#,
    )
    .unwrap();
    let o = ivelox(&["sweep", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("NonSimplexType"), "{}", stderr(&o));
}

#[test]
fn usage_errors_name_the_flag() {
    let o = ivelox(&["iv", "--bogus", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--bogus"));
    let o = ivelox(&["bounds", "--r", "x", "--N", "10", "--p", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--r"));
    let o = ivelox(&[
        "sweep",
        "--scenario",
        &scenario("fig2.json"),
        "--outputs",
        "pe_nope",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("pe_nope"));
    assert_eq!(ivelox(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_file_reports_path() {
    let o = ivelox(&["iv", "--scenario", "/nonexistent/x.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/x.json"));
}

#[test]
fn validate_fast_and_fault_injection() {
    let o = ivelox(&["validate", "--level", "fast"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS bound_sandwich"));
    let o = ivelox(&["validate", "--level", "fast", "--inject-fault", "kl-sign"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL bound_sandwich"));
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let trace = |name: &str, seed_flag: Option<&str>, env: Option<&str>| {
        let path = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_ivelox"));
        cmd.args([
            "simulate",
            "--r",
            "3",
            "--p",
            "0.3",
            "--lambda",
            "0.3",
            "--packets",
            "500",
        ]);
        cmd.args(["--trace", path.to_str().unwrap()]);
        if let Some(s) = seed_flag {
            cmd.args(["--seed", s]);
        }
        cmd.env_remove("IVELOX_SEED");
        if let Some(e) = env {
            cmd.env("IVELOX_SEED", e);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(path).unwrap()
    };
    let flag7 = trace("a", Some("7"), None);
    let env7 = trace("b", None, Some("7"));
    let flag_wins = trace("c", Some("7"), Some("8"));
    let env8 = trace("d", None, Some("8"));
    assert_eq!(flag7, env7);
    assert_eq!(flag7, flag_wins);
    assert_ne!(flag7, env8);
    let o = Command::new(env!("CARGO_BIN_EXE_ivelox"))
        .args(["iv", "--r", "3", "--p", "0.1"])
        .env("IVELOX_SEED", "minus one")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ee_table() {
    let o = ivelox(&["ee", "--r", "10", "--p", "0.2", "--alpha", "0.5,0.9"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "alpha,iv,ee_chernoff,ee_types");
    let v = floats(lines[1]);
    let want = 0.5 * (0.5f64 / 0.8).ln() + 0.5 * (0.5f64 / 0.2).ln();
    assert!(
        (v[2] - want).abs() < 1e-12 && (v[3] - want).abs() < 1e-12,
        "{v:?} vs {want}"
    );
    assert_eq!(floats(lines[2])[2], 0.0);
}

#[test]
fn empty_table_writes_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    emit_csv(&Table::new(["alpha", "N", "r"]), &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "alpha,N,r\n");
    let err = emit_csv(&Table::new(["a"]), &dir.path().join("no/such/dir.csv")).unwrap_err();
    assert!(err.to_string().contains("no/such/dir.csv"));
}

#[test]
fn fig4_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig4.csv");
    let o = ivelox(&[
        "sweep",
        "--scenario",
        &scenario("fig4.json"),
        "--packets",
        "4000",
        "--warmup",
        "1000",
        "--seed",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let got = std::fs::read_to_string(&out).unwrap();
    let want = include_str!("golden/fig4_small.csv");
    assert!(got.starts_with("series,alpha,N,r,pe_empirical,ci_lo,ci_hi,pe_exact,pe_lower\n"));
    assert_eq!(got, want);
}

#[test]
fn sandwich_holds_in_bounds_sweep() {
    let o = ivelox(&[
        "sweep",
        "--scenario",
        &scenario("fig3.json"),
        "--outputs",
        "pe_lower,pe_exact,pe_chernoff,pe_sum",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("r,N,p_eff,pe_lower,pe_exact,pe_chernoff,pe_sum")
    );
    let mut rows = 0;
    for line in lines {
        let v = floats(line);
        assert!(v[3] <= v[4] && v[4] <= v[5].min(v[6]), "{line}");
        rows += 1;
    }
    assert_eq!(rows, 20);
}
