use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stagewise::space::load_static_insights;
use stagewise_cli::commands::lock_run_dir;
use stagewise_cli::config::{ExecutorConfig, InsightSource};
use stagewise_cli::RunConfig;

const BIN: &str = env!("CARGO_BIN_EXE_stagewise");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// A scratch directory holding the fixture config and insights.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for f in ["landscape.json", "insights.json"] {
        fs::copy(fixture(f), dir.path().join(f)).unwrap();
    }
    dir
}

fn edit_config(dir: &Path, name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("landscape.json")).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn search(config: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["search", "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn config_round_trip() {
    let text = fs::read_to_string(fixture("landscape.json")).unwrap();
    let config = RunConfig::parse(&text).unwrap();
    assert_eq!(RunConfig::parse(&config.to_json()).unwrap(), config);

    let mut other = config.clone();
    other.executor = ExecutorConfig::External {
        command: vec!["python3".into(), "worker.py".into()],
        url: None,
        timeout_secs: 30,
    };
    other.insight_source = InsightSource::Llm { insights_per_stage: 5 };
    other.llm = Some(serde_json::from_str(r#"{"base_url":"http://x","model_name":"m","api_key_env":"KEY"}"#).unwrap());
    assert_eq!(RunConfig::parse(&other.to_json()).unwrap(), other);
}

#[test]
fn invalid_configs_are_usage_errors() {
    let dir = workspace();
    let no_llm = edit_config(dir.path(), "c1.json", |v| v["insight_source"] = serde_json::json!({"kind": "llm"}));
    let out = search(&no_llm, &[]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let both = edit_config(dir.path(), "c2.json", |v| {
        v["executor"] = serde_json::json!({"kind": "landscape", "path": "x.json", "planted": {"seed": 1}})
    });
    assert_eq!(code(&search(&both, &[])), 1);
    let out = search(&dir.path().join("landscape.json"), &["--rollouts", "0"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("k_rollouts"));
}

#[test]
fn propose_from_file_preserves_the_space() {
    let dir = workspace();
    let out = run(&["propose", "--config", dir.path().join("landscape.json").to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let written = load_static_insights(&dir.path().join("run/search_space.json")).unwrap();
    assert_eq!(written, load_static_insights(&fixture("insights.json")).unwrap());
    assert!(String::from_utf8_lossy(&out.stdout).contains("Model Training: 3"));
}

#[test]
fn propose_with_unreachable_endpoint_exits_2() {
    let dir = workspace();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let config = edit_config(dir.path(), "llm.json", |v| {
        v["insight_source"] = serde_json::json!({"kind": "llm", "insights_per_stage": 5});
        v["llm"] = serde_json::json!({
            "base_url": format!("http://127.0.0.1:{port}/v1"),
            "model_name": "any",
            "api_key_env": "STAGEWISE_TEST_KEY",
            "max_retries": 0,
            "timeout_secs": 5
        });
    });
    let out = run(&["propose", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("endpoint error"), "{}", stderr(&out));
    assert!(dir.path().join("run/transcript.json").exists());
}

#[test]
fn search_is_deterministic() {
    let dir = workspace();
    let a = edit_config(dir.path(), "a.json", |v| v["output_dir"] = "run-a".into());
    let b = edit_config(dir.path(), "b.json", |v| {
        v["output_dir"] = "run-b".into();
        v["cache_dir"] = "cache-b".into();
    });
    assert_eq!(code(&search(&a, &[])), 0);
    assert_eq!(code(&search(&b, &[])), 0);
    for f in ["outcome.json", "journal.ndjson", "best_solution.py", "rollouts.csv"] {
        let x = fs::read(dir.path().join("run-a").join(f)).unwrap();
        let y = fs::read(dir.path().join("run-b").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    let outcome: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run-a/outcome.json")).unwrap()).unwrap();
    assert_eq!(outcome["rollouts"].as_array().unwrap().len(), 10);
    assert!(!outcome["config_of_best"].as_array().unwrap().is_empty());
}

#[test]
fn interrupted_search_resumes_to_the_same_result() {
    let dir = workspace();
    let full = edit_config(dir.path(), "full.json", |v| {
        v["output_dir"] = "full".into();
        v["cache_dir"] = "cache-full".into();
    });
    let part = edit_config(dir.path(), "part.json", |v| v["output_dir"] = "part".into());
    assert_eq!(code(&search(&full, &[])), 0);
    assert_eq!(code(&search(&part, &["--rollouts", "4"])), 0);

    // leave a half-finished fifth rollout behind
    let full_journal = fs::read(dir.path().join("full/journal.ndjson")).unwrap();
    let part_path = dir.path().join("part/journal.ndjson");
    let mut partial = fs::read(&part_path).unwrap();
    let next = &full_journal[partial.len()..];
    let first_line = next.iter().position(|&b| b == b'\n').unwrap() + 1;
    partial.extend_from_slice(&next[..first_line]);
    fs::write(&part_path, &partial).unwrap();

    let out = run(&["resume", "--config", part.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read(&part_path).unwrap(), full_journal);
    assert_eq!(
        fs::read(dir.path().join("part/outcome.json")).unwrap(),
        fs::read(dir.path().join("full/outcome.json")).unwrap()
    );

    // already complete: nothing changes
    let out = run(&["resume", "--config", part.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read(&part_path).unwrap(), full_journal);
}

#[test]
fn truncated_journal_reports_the_byte_offset() {
    let dir = workspace();
    let config = dir.path().join("landscape.json");
    assert_eq!(code(&search(&config, &[])), 0);
    let path = dir.path().join("run/journal.ndjson");
    let mut bytes = fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 5);
    let last_start = bytes.iter().rposition(|&b| b == b'\n').unwrap() + 1;
    fs::write(&path, &bytes).unwrap();
    let out = run(&["resume", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains(&format!("byte offset {last_start}")), "{}", stderr(&out));
}

#[test]
fn journal_from_another_dataset_is_rejected() {
    let dir = workspace();
    let config = dir.path().join("landscape.json");
    assert_eq!(code(&search(&config, &[])), 0);
    let other = edit_config(dir.path(), "other.json", |v| v["problem"]["name"] = "another-dataset".into());
    let out = run(&["resume", "--config", other.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("fingerprint"), "{}", stderr(&out));
}

#[test]
fn single_rollout_best_is_the_simulated_node() {
    let dir = workspace();
    let config = dir.path().join("landscape.json");
    assert_eq!(code(&search(&config, &["--rollouts", "1"])), 0);
    let outcome: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/outcome.json")).unwrap()).unwrap();
    assert_eq!(outcome["best_node"], outcome["rollouts"][0]["node"]);
}

#[test]
fn locked_run_directory_exits_2() {
    let dir = workspace();
    let _held = lock_run_dir(&dir.path().join("run")).unwrap();
    let out = search(&dir.path().join("landscape.json"), &[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("in use"));
}

#[test]
fn all_failing_simulations_exit_3() {
    let dir = workspace();
    let config = edit_config(dir.path(), "fail.json", |v| {
        v["executor"] = serde_json::json!({"kind": "external", "command": ["sh", "-c", "exit 1"], "timeout_secs": 5});
        v["search"]["k_rollouts"] = 3.into();
    });
    let out = search(&config, &[]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("no solution"));
}

#[test]
fn external_stdio_worker_through_the_cli() {
    let dir = workspace();
    let response = r#"{"protocol_version":1,"status":"ok","dev_score":0.5,"stages":[{"stage":"exploratory_data_analysis","instruction":"a","code":"a\n","status":"ok"},{"stage":"data_preprocessing","instruction":"b","code":"b\n","status":"ok"},{"stage":"feature_engineering","instruction":"c","code":"c\n","status":"ok"},{"stage":"model_training","instruction":"d","code":"d\n","status":"ok"},{"stage":"model_evaluation","instruction":"e","code":"e\n","status":"ok"}]}"#;
    let script = dir.path().join("worker.sh");
    fs::write(&script, format!("read line\nprintf '%s\\n' '{response}'\n")).unwrap();
    let config = edit_config(dir.path(), "ext.json", |v| {
        v["executor"] = serde_json::json!({"kind": "external", "command": ["sh", script.to_str().unwrap()], "timeout_secs": 10});
        v["search"]["k_rollouts"] = 2.into();
    });
    let out = search(&config, &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read_to_string(dir.path().join("run/best_solution.py")).unwrap(), "a\nb\nc\nd\ne\n");
}

#[test]
fn cache_list_and_clear() {
    let dir = workspace();
    let config = dir.path().join("landscape.json");
    assert_eq!(code(&search(&config, &[])), 0);
    let listed = run(&["cache", "list", "--config", config.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&listed.stdout).contains("entries"));
    let cleared = run(&["cache", "clear", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&cleared), 0);
    let listed = run(&["cache", "list", "--config", config.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&listed.stdout).contains("empty"));
}

#[test]
fn report_outputs_and_reference_only_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("scores.csv");
    fs::write(
        &csv,
        "method,dataset,run,metric,raw_score\nref,d1,0,f1,0.8\nref,d2,0,rmse,2.0\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&["report", csv.to_str().unwrap(), "--reference", "ref", "--output-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["methods"][0]["top1"], 2);
    assert!(report["methods"][0]["wins"].is_null());
    let ns = fs::read_to_string(out_dir.join("scores_ns.csv")).unwrap();
    let rmse_ns: f64 = ns.lines().nth(2).unwrap().split(',').nth(5).unwrap().parse().unwrap();
    assert!((rmse_ns - 1.0 / (1.0 + 3.0f64.ln())).abs() < 1e-15, "{ns}");
    assert!(out_dir.join("rescaled_ns.csv").exists());
    assert!(out_dir.join("report.txt").exists());

    let out = run(&["report", csv.to_str().unwrap(), "--reference", "nobody", "--output-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn ablation_writes_a_comparison() {
    let dir = workspace();
    let config = dir.path().join("landscape.json");
    let out = run(&["ablation", "--config", config.to_str().unwrap(), "--trials", "3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/ablation.json")).unwrap()).unwrap();
    assert_eq!(report["trials"].as_array().unwrap().len(), 3);
}
