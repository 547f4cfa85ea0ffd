use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};

const DEFAULT: &str = include_str!("../../../configs/default.toml");

fn telearm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_telearm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn metrics(path: &Path) -> BTreeMap<String, String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn num(m: &BTreeMap<String, String>, key: &str) -> f64 {
    m[key].parse().unwrap_or_else(|_| panic!("{key} = {}", m[key]))
}

#[test]
fn step_run_writes_trace_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (out, met) = (dir.path().join("trace.csv"), dir.path().join("metrics.txt"));
    let o = telearm(&[
        "run",
        "--experiment",
        "step",
        "--axis",
        "z",
        "--amplitude",
        "0.1",
        "--out",
        out.to_str().unwrap(),
        "--metrics",
        met.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("t_s,axis,setpoint_m,true_m,measured_m,va_V,pwm_on")
    );
    assert_eq!(csv.lines().count(), 2001);
    let m = metrics(&met);
    assert!(num(&m, "rise_time_s") < 0.5);
    assert!(num(&m, "ss_error_mm") < 1.0);
    assert!(num(&m, "settle2_s") < 0.5);
    assert_eq!(m["seed"], "7");
    assert_eq!(m["config.gains.kp"], "55.0");
    assert_eq!(m["config.axes.z.pitch"], "0.00125");
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let (out, met) = (
            dir.path().join(format!("{tag}.csv")),
            dir.path().join(format!("{tag}.txt")),
        );
        let o = telearm(&[
            "run",
            "--experiment",
            "sine",
            "--axis",
            "x",
            "--duration",
            "3",
            "--latency-base-ms",
            "20",
            "--latency-jitter-ms",
            "30",
            "--out",
            out.to_str().unwrap(),
            "--metrics",
            met.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        (std::fs::read(out).unwrap(), std::fs::read(met).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn bad_config_exits_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, DEFAULT.replace("delay_s = 5.0", "delay_s = 5.0\nwidget = 3")).unwrap();
    let out = dir.path().join("t.csv");
    let o = telearm(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--experiment",
        "step",
        "--axis",
        "x",
        "--out",
        out.to_str().unwrap(),
        "--metrics",
        dir.path().join("m").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 22"), "{err}");
    assert!(err.contains("widget"), "{err}");
    assert!(!out.exists());
}

#[test]
fn non_positive_kp_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("kp.toml");
    std::fs::write(&cfg, DEFAULT.replace("kp = 55.0", "kp = -1.0")).unwrap();
    let o = telearm(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--experiment",
        "step",
        "--axis",
        "x",
        "--out",
        dir.path().join("t").to_str().unwrap(),
        "--metrics",
        dir.path().join("m").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_exits_2() {
    let o = telearm(&[
        "run",
        "--config",
        "/nonexistent/arm.toml",
        "--experiment",
        "step",
        "--axis",
        "x",
        "--out",
        "/nonexistent/t",
        "--metrics",
        "/nonexistent/m",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn latency_violation_exits_3_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    let (out, met) = (dir.path().join("t.csv"), dir.path().join("m.txt"));
    let o = telearm(&[
        "run",
        "--experiment",
        "step",
        "--axis",
        "y",
        "--latency-base-ms",
        "400",
        "--latency-jitter-ms",
        "150",
        "--out",
        out.to_str().unwrap(),
        "--metrics",
        met.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(out.exists());
    let m = metrics(&met);
    assert_eq!(m["latency.violation"], "true");
    assert!(num(&m, "latency.max_delay_ms") > 500.0);
}

#[test]
fn reproduce_table1_reports_every_axis() {
    let o = telearm(&["reproduce", "table1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for needle in ["rise time", "settling time", "deadzone time", " x ", " y ", " z "] {
        assert!(text.contains(needle), "missing {needle}: {text}");
    }
}

#[test]
fn serve_raw_answers_with_hello() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_telearm"))
        .args(["serve", "--raw", "--bind", "127.0.0.1:0"])
        .env("RUST_LOG", "warn")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut first = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut first)
        .unwrap();
    let addr = first
        .trim()
        .strip_prefix("listening on tcp://")
        .expect(&first)
        .to_string();
    let mut stream = TcpStream::connect(addr).unwrap();
    stream.write_all(b"{\"type\":\"calibrate\"}\n").unwrap();
    let mut line = String::new();
    BufReader::new(&stream).read_line(&mut line).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(line.starts_with("{\"type\":\"hello\""), "{line}");
}
