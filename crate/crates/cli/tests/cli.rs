use std::io::{Read as _, Write as _};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn cfc() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cfc"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    cfc().args(args).output().unwrap()
}

fn synth(dir: &Path) -> PathBuf {
    let out = run(&["synth", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

fn with_work(config: &Path, work: &Path) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(config).unwrap()).unwrap();
    v["paths"]["work_dir"] = work.to_str().unwrap().into();
    // next to the original so its relative paths still resolve
    let name = work.file_name().unwrap().to_str().unwrap();
    let path = config.with_file_name(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
    path
}

#[test]
fn default_config_round_trips() {
    let out = run(&["default-config"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["thresholds"]["finetune_video_aesthetic_min"], 5.5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, &out.stdout).unwrap();
    let out = run(&["--config", path.to_str().unwrap(), "default-config"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"thresholds":{"aesthetic_minimum":4}}"#).unwrap();
    let out = run(&["--config", path.to_str().unwrap(), "split"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["run", "--stages", "split,polish"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&path, r#"{"sample":{"target_total":0}}"#).unwrap();
    let out = run(&["--config", path.to_str().unwrap(), "sample"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(&dir.path().join("corpus"));
    let config = with_work(&config, &dir.path().join("work"));
    let out = run(&["--config", config.to_str().unwrap(), "filter"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scored"));
}

#[test]
fn unreachable_provider_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(&dir.path().join("corpus"));
    let config = with_work(&config, &dir.path().join("work"));
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&config).unwrap()).unwrap();
    let endpoint = serde_json::json!({"base_url": format!("http://127.0.0.1:{port}"), "retry_budget": 0});
    v["providers"]["backend"] = "http".into();
    for kind in ["embed_image", "embed_text", "aesthetic", "ocr_count", "flow", "chat"] {
        v["providers"]["http"][kind] = endpoint.clone();
    }
    std::fs::write(&config, serde_json::to_vec(&v).unwrap()).unwrap();
    let out = run(&["--config", config.to_str().unwrap(), "run", "--stages", "split,score"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("work/split.jsonl").exists());
    assert!(!dir.path().join("work/scored.jsonl").exists());
}

#[test]
fn killed_run_resumes_to_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(&dir.path().join("corpus"));
    let clean = with_work(&config, &dir.path().join("clean"));
    let out = run(&["--config", clean.to_str().unwrap(), "run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let work = dir.path().join("killed");
    let killed = with_work(&config, &work);
    let mut child = cfc()
        .args(["--config", killed.to_str().unwrap(), "run"])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(120);
    while !work.join("split.jsonl").exists() && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(5));
    }
    child.kill().unwrap();
    child.wait().unwrap();

    let out = run(&["--config", killed.to_str().unwrap(), "run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["final.jsonl", "finetune.jsonl", "report/report.json"] {
        let a = std::fs::read(dir.path().join("clean").join(name)).unwrap();
        let b = std::fs::read(work.join(name)).unwrap();
        assert!(a == b, "{name} differs after resume");
    }
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut body = String::new();
    s.read_to_string(&mut body).ok()?;
    Some(body)
}

#[test]
fn review_service_answers_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(&dir.path().join("corpus"));
    let config = with_work(&config, &dir.path().join("work"));
    let out = run(&["--config", config.to_str().unwrap(), "run"]);
    assert!(out.status.success());

    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = cfc()
        .args(["--config", config.to_str().unwrap(), "serve-review", "--port", &port.to_string()])
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(30);
    let mut reply = None;
    while reply.is_none() && Instant::now() < deadline {
        reply = http_get(port, "/api/stats");
        std::thread::sleep(Duration::from_millis(20));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    let reply = reply.expect("review service never answered");
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    assert!(reply.contains("\"pending\":"), "{reply}");
}
