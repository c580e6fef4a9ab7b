use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn agent(data: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agent"))
        .arg("--data-dir")
        .arg(data)
        .args(args)
        .output()
        .unwrap()
}

fn json_out(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn run_metrics_compare_replay() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let first = json_out(&agent(d, &["run", "--sample", "initial", "--workers", "2", "--run-id", "base"]));
    assert_eq!(first["tasks"], 22);
    let second = json_out(&agent(d, &["run", "--sample", "nano", "--workers", "3", "--run-id", "next"]));
    assert_eq!(second["tasks"], 44);

    assert_eq!(json_out(&agent(d, &["metrics", "base"])), first);

    let cmp = json_out(&agent(d, &["compare", "base", "next"]));
    assert_eq!(cmp["newly_covered"].as_array().unwrap().len(), 22);
    assert_eq!(cmp["dropped"].as_array().unwrap().len(), 0);

    let run: Value = serde_json::from_str(&std::fs::read_to_string(d.join("runs/base/run.json")).unwrap()).unwrap();
    let task = run["results"].as_object().unwrap().keys().next().unwrap().clone();
    let rep = json_out(&agent(d, &["replay", "base", &task]));
    assert_eq!(rep["first_divergence"], Value::Null);

    let again = agent(d, &["run", "--sample", "initial", "--run-id", "base"]);
    assert_eq!(again.status.code(), Some(2), "run ids are never overwritten");
    assert_eq!(agent(d, &["metrics", "ghost"]).status.code(), Some(2));
}

#[test]
fn remote_backend_needs_an_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let o = agent(dir.path(), &["run", "--backend", "remote"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--endpoint"));
}

#[test]
fn registry_ingest_prints_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/apps/payments.json");
    let o = agent(
        dir.path(),
        &["registry", "ingest", spec.to_str().unwrap(), "--app", "payments", "--base-url", "http://pay.example"],
    );
    let m = json_out(&o);
    assert_eq!(m["app_id"], "payments");
    let ids: Vec<&str> = m["tools"].as_array().unwrap().iter().map(|t| t["tool_id"].as_str().unwrap()).collect();
    assert!(ids.contains(&"payments.get_balance"));
    let missing = agent(dir.path(), &["registry", "ingest", "/nonexistent.json", "--app", "x", "--base-url", "http://x"]);
    assert_eq!(missing.status.code(), Some(2));
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    s.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut out = String::new();
    s.read_to_string(&mut out).ok()?;
    Some(out)
}

#[test]
fn serve_exposes_fixture_runs() {
    let dir = tempfile::tempdir().unwrap();
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let mut child = Command::new(env!("CARGO_BIN_EXE_agent"))
        .arg("--data-dir")
        .arg(dir.path())
        .args(["serve", "--port", &port.to_string(), "--with-fixtures"])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let mut body = None;
    while Instant::now() < deadline {
        if let Some(r) = http_get(port, "/runs/fixture-full/metrics") {
            body = Some(r);
            break;
        }
        std::thread::sleep(Duration::from_millis(100));
    }
    let missing = http_get(port, "/runs/ghost");
    child.kill().unwrap();
    child.wait().unwrap();
    let body = body.expect("server never came up");
    assert!(body.starts_with("HTTP/1.1 200"), "{body}");
    assert!(body.contains("\"task_completion_rate\":61.7"));
    assert!(missing.unwrap().starts_with("HTTP/1.1 404"));
}
