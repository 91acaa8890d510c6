use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn engine() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_triz-engine"));
    for (k, _) in std::env::vars_os() {
        if k.to_string_lossy().starts_with("TRIZ_ENGINE_") {
            c.env_remove(k);
        }
    }
    c.env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    engine().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json_of(args: &[&str]) -> Value {
    let mut full = vec!["--json"];
    full.extend_from_slice(args);
    let o = run(&full);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{args:?}: stdout is not JSON: {e}"))
}

fn asset(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/assets").join(rel)
}

fn case7() -> String {
    asset("inputs/case7.txt").display().to_string()
}

#[test]
fn usage_errors_exit_2_with_a_synopsis() {
    for args in [
        &["frobnicate"][..],
        &["solve"],
        &["solve", "--input", "x", "--case", "case7"],
        &["solve", "--input", "x", "--override-contradiction", "6-22"],
        &["solve", "--input", "x", "--override-contradiction", "6:6"],
        &["solve", "--input", "x", "--format", "pdf"],
        &["btms", "metrics", "--v-batt", "abc", "--v-module", "1", "--e-batt", "1"],
        &["btms", "simulate"],
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("Usage:"), "{args:?}");
    }
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn domain_errors_exit_1() {
    let d = tempfile::tempdir().unwrap();
    let empty = d.path().join("empty.txt");
    std::fs::write(&empty, "  \n").unwrap();
    let unknown = d.path().join("unknown.txt");
    std::fs::write(&unknown, "A problem no transcript has seen.").unwrap();
    for args in [
        vec!["solve".to_string(), "--input".into(), "/no/such/file".into()],
        vec!["solve".into(), "--input".into(), empty.display().to_string()],
        vec!["solve".into(), "--input".into(), unknown.display().to_string()],
        vec!["solve".into(), "--input".into(), case7(), "--override-principles".into(), "2,41".into()],
        vec!["trials".into(), "--case".into(), "nope".into()],
        vec!["evaluate".into(), "--case".into(), "case7".into(), "--n".into(), "0".into()],
        vec![
            "btms".into(),
            "metrics".into(),
            "--v-batt".into(),
            "2".into(),
            "--v-module".into(),
            "1".into(),
            "--e-batt".into(),
            "1".into(),
        ],
        vec![
            "btms".into(),
            "simulate".into(),
            "--c-rate".into(),
            "1".into(),
            "--dt".into(),
            "5".into(),
            "--duration".into(),
            "10".into(),
        ],
    ] {
        let o = engine().args(&args).output().unwrap();
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"), "{args:?}");
    }
    // with --json the error is still parseable on stdout
    let o = run(&["--json", "solve", "--input", "/no/such/file"]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["error"].as_str().unwrap().contains("/no/such/file"));
}

#[test]
fn solve_prints_the_requested_format() {
    let md = stdout(&run(&["solve", "--input", &case7(), "--format", "md"]));
    assert!(md.contains("Extraction") && md.contains("Strong Oxidants"));
    let tex = stdout(&run(&["solve", "--input", &case7(), "--format", "tex"]));
    assert!(tex.starts_with("\\documentclass") && tex.contains("Strong Oxidants"));
    let report: Value =
        serde_json::from_str(&stdout(&run(&["solve", "--input", &case7(), "--format", "json"]))).unwrap();
    assert_eq!(report["contradiction"], serde_json::json!({"improving": 6, "worsening": 13}));
}

#[test]
fn solve_reads_stdin_and_cases() {
    let text = std::fs::read_to_string(asset("inputs/case7.txt")).unwrap();
    let mut child = engine()
        .args(["--json", "solve", "--input", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(text.as_bytes()).unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["report"]["contradiction"]["worsening"], 13);

    let v = json_of(&["solve", "--case", "case7"]);
    assert_eq!(v["report"]["contradiction"]["improving"], 6);
}

#[test]
fn solve_overrides_and_out_dir() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().display().to_string();
    let btms = asset("inputs/btms.txt").display().to_string();
    let v = json_of(&["solve", "--input", &btms, "--override-contradiction", "6:22", "--out", &out]);
    let report = &v["report"];
    assert_eq!(report["overrides_applied"], serde_json::json!(["contradiction"]));
    let cited: Vec<u64> =
        report["principles"].as_array().unwrap().iter().map(|p| p["index"].as_u64().unwrap()).collect();
    assert!(cited.contains(&7) && cited.contains(&17), "{cited:?}");
    let path = PathBuf::from(v["path"].as_str().unwrap());
    assert_eq!(path.extension().unwrap(), "md");
    let doc = std::fs::read_to_string(&path).unwrap();
    assert_eq!(doc, v["document"].as_str().unwrap());
    assert!(doc.contains("Nesting") && doc.contains("Transition to a New Dimension"));

    let v = json_of(&["solve", "--input", &btms, "--override-contradiction", "6:22", "--format", "json"]);
    assert!(v["document"].is_null());
    assert_eq!(v["report"]["contradiction"], serde_json::json!({"improving": 6, "worsening": 22}));

    // a principle listed twice is refused before any model call
    let o = run(&["solve", "--input", &btms, "--override-principles", "7,7"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn report_render_matches_solve_output() {
    let d = tempfile::tempdir().unwrap();
    let report_path = d.path().join("report.json");
    let report = stdout(&run(&["solve", "--input", &case7(), "--format", "json"]));
    std::fs::write(&report_path, &report).unwrap();
    let direct = stdout(&run(&["solve", "--input", &case7(), "--format", "tex"]));
    let rendered = stdout(&run(&["report", "render", "--report", report_path.to_str().unwrap(), "--format", "tex"]));
    assert_eq!(rendered, direct);

    let out = d.path().join("doc/report.md");
    let v = json_of(&["report", "render", "--report", report_path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), v["document"].as_str().unwrap());

    let tpl = d.path().join("tpl");
    std::fs::create_dir(&tpl).unwrap();
    std::fs::write(tpl.join("report.md"), "only a problem: {{problem}}").unwrap();
    let o = run(&["report", "render", "--report", report_path.to_str().unwrap(), "--templates", tpl.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "a template missing placeholders is rejected");
}

#[test]
fn trials_and_evaluate() {
    let v = json_of(&["trials", "--case", "btms", "--n", "100", "--k", "2"]);
    let top = v["top"].as_array().unwrap();
    assert_eq!(top.len(), 2);
    assert_eq!(top[0]["contradiction"], serde_json::json!({"improving": 12, "worsening": 22}));
    assert!(v["entropy"].as_f64().unwrap() > 0.0);

    let d = tempfile::tempdir().unwrap();
    let v = json_of(&["evaluate", "--case", "case7", "--n", "30", "--out", d.path().to_str().unwrap()]);
    assert_eq!(v["evaluation"]["best"], "Half");
    assert!(d.path().join("case7.json").exists() && d.path().join("case7.csv").exists());
}

#[test]
fn kb_validate_on_a_broken_bundle() {
    let v = json_of(&["kb", "validate"]);
    assert_eq!(v, serde_json::json!({"valid": true, "violations": []}));

    let d = tempfile::tempdir().unwrap();
    for f in ["parameters.json", "principles.json", "matrix.json"] {
        std::fs::copy(asset("kb").join(f), d.path().join(f)).unwrap();
    }
    let mut principles: Vec<Value> =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("principles.json")).unwrap()).unwrap();
    principles.pop();
    std::fs::write(d.path().join("principles.json"), serde_json::to_string(&principles).unwrap()).unwrap();
    let o = run(&["--json", "kb", "validate", "--dir", d.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["valid"], false);
    assert!(!v["violations"].as_array().unwrap().is_empty());
}

#[test]
fn btms_subcommands() {
    let v = json_of(&["btms", "metrics", "--v-batt", "0.39", "--v-module", "0.91", "--e-batt", "187.5"]);
    assert!((v["grouping_efficiency"].as_f64().unwrap() - 0.39 / 0.91).abs() < 1e-12);
    let human = stdout(&run(&["btms", "metrics", "--v-batt", "0.39", "--v-module", "0.91", "--e-batt", "187.5"]));
    assert!(human.contains("43%") && human.contains("206 Wh/L"), "{human}");

    let d = tempfile::tempdir().unwrap();
    let csv = d.path().join("trace.csv");
    let v = json_of(&[
        "btms",
        "simulate",
        "--c-rate",
        "1",
        "--theta",
        "30",
        "--duration",
        "120",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    let samples = v["result"]["times"].as_array().unwrap().len();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("time_s,"));
    assert_eq!(text.lines().count(), samples + 1);

    let par = json_of(&["btms", "sweep", "--thetas", "10,45", "--c-rates", "1,3", "--duration", "300"]);
    let seq = json_of(&["btms", "sweep", "--thetas", "10,45", "--c-rates", "1,3", "--duration", "300", "--sequential"]);
    assert_eq!(par, seq);
    assert_eq!(par["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn serve_answers_http() {
    let d = tempfile::tempdir().unwrap();
    let mut child = engine()
        .args(["serve", "--port", "0", "--data-dir", d.path().to_str().unwrap()])
        .env("RUST_LOG", "info")
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let port = loop {
        let line = lines.next().expect("server logs its address").unwrap();
        if let Some(addr) = line.split("listening on ").nth(1) {
            break addr.rsplit(':').next().unwrap().trim().parse::<u16>().unwrap();
        }
    };
    let mut s = TcpStream::connect(("127.0.0.1", port)).unwrap();
    write!(s, "GET /api/kb/matrix/6/13 HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("Strong Oxidants"));
}
