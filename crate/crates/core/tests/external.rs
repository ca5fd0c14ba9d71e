use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use stagewise::eval::MetricKind;
use stagewise::executor::external::{ExternalExecutor, HttpTransport, StdioTransport, Transport};
use stagewise::executor::{Executor, ExecutorError, StageCache};
use stagewise::{ExperimentConfig, Insight, ProblemSpec, Stage};

fn problem() -> ProblemSpec {
    ProblemSpec {
        name: "wire".into(),
        description: "wire test".into(),
        dataset_info: Default::default(),
        paths: None,
        target_column: "target".into(),
        metric: MetricKind::F1,
    }
}

fn config() -> ExperimentConfig {
    ExperimentConfig::new(vec![Insight::new(Stage::FeatureEngineering, "lags")], "fp").unwrap()
}

const OK_RESPONSE: &str = r#"{"protocol_version":1,"status":"ok","dev_score":0.81,"test_score":0.79,"stages":[{"stage":"exploratory_data_analysis","instruction":"a","code":"e\n","status":"ok"},{"stage":"data_preprocessing","instruction":"b","code":"p\n","status":"ok"},{"stage":"feature_engineering","instruction":"lags","code":"f\n","status":"ok"},{"stage":"model_training","instruction":"d","code":"t\n","status":"ok"},{"stage":"model_evaluation","instruction":"e","code":"v\n","status":"ok"}]}"#;

fn script(dir: &Path, body: &str) -> String {
    let path = dir.join("worker.sh");
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    path.display().to_string()
}

fn stdio(dir: &Path, body: &str, timeout: Duration) -> ExternalExecutor<StdioTransport> {
    let transport = StdioTransport::new("sh", vec![script(dir, body)]);
    ExternalExecutor::new(transport, timeout, dir.display().to_string(), 7)
}

#[test]
fn stdio_worker_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let capture = dir.path().join("request.json");
    let body = format!("read line; printf '%s' \"$line\" > {}; printf '%s\\n' '{OK_RESPONSE}'", capture.display());
    let mut ex = stdio(dir.path(), &body, Duration::from_secs(10));
    let mut cache = StageCache::in_memory();
    let result = ex.simulate(&config(), &problem(), &mut cache).unwrap();
    assert_eq!(result.dev_score, Some(0.81));
    assert_eq!(result.solution_code, "e\np\nf\nt\nv\n");
    let request: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(capture).unwrap()).unwrap();
    assert_eq!(request["config"][0]["text"], "lags");
    assert_eq!(request["seed"], 7);
    assert_eq!(cache.len(), 5);
}

#[test]
fn stdio_worker_timeout_is_a_transport_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut ex = stdio(dir.path(), "sleep 5", Duration::from_millis(300));
    let started = Instant::now();
    let err = ex.simulate(&config(), &problem(), &mut StageCache::in_memory()).unwrap_err();
    assert!(matches!(err, ExecutorError::Transport(ref m) if m.contains("timeout")), "{err}");
    assert!(started.elapsed() < Duration::from_secs(4));
}

#[test]
fn stdio_worker_garbage_is_a_protocol_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut ex = stdio(dir.path(), "read line; echo 'not json'", Duration::from_secs(10));
    let err = ex.simulate(&config(), &problem(), &mut StageCache::in_memory()).unwrap_err();
    assert!(matches!(err, ExecutorError::Protocol(_)), "{err}");
}

#[test]
fn missing_worker_binary_is_a_transport_error() {
    let mut t = StdioTransport::new("/nonexistent/worker", vec![]);
    assert!(matches!(t.exchange("{}", Duration::from_secs(1)), Err(ExecutorError::Transport(_))));
}

#[test]
fn http_worker_round_trip() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut request_line = String::new();
        reader.read_line(&mut request_line).unwrap();
        let mut length = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line == "\r\n" {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap();
            }
        }
        let mut body = vec![0; length];
        reader.read_exact(&mut body).unwrap();
        write!(
            stream,
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{OK_RESPONSE}",
            OK_RESPONSE.len()
        )
        .unwrap();
        (request_line, String::from_utf8(body).unwrap())
    });
    let transport = HttpTransport::new(&format!("http://{addr}"));
    let mut ex = ExternalExecutor::new(transport, Duration::from_secs(10), "/out", 1);
    let result = ex.simulate(&config(), &problem(), &mut StageCache::in_memory()).unwrap();
    assert_eq!(result.test_score, Some(0.79));
    let (line, body) = server.join().unwrap();
    assert!(line.starts_with("POST /simulate "), "{line}");
    let request: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(request["protocol_version"], 1);
}

#[test]
fn http_worker_down_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut t = HttpTransport::new(&format!("http://127.0.0.1:{port}"));
    assert!(matches!(t.exchange("{}", Duration::from_secs(2)), Err(ExecutorError::Transport(_))));
}
