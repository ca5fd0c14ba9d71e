//! Executor that delegates simulations to an out-of-process worker.
//!
//! One request and one response per simulation, as single-line JSON over the
//! worker's standard streams or as the bodies of `POST /simulate`.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::eval::{normalized_score, MetricKind};
use crate::executor::{
    ArtifactStatus, Executor, ExecutorError, SimulationResult, StageArtifact, StageCache,
};
use crate::space::ProblemSpec;
use crate::stage::Stage;
use crate::tree::ExperimentConfig;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireProblem {
    pub description: String,
    pub target_column: String,
    pub metric: MetricKind,
    pub train_path: String,
    pub dev_path: String,
    pub test_path: String,
    pub data_info_path: String,
    pub output_dir: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireInsight {
    pub stage: Stage,
    pub insight_id: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireCachedStage {
    pub stage: Stage,
    pub code: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationRequest {
    pub protocol_version: u32,
    pub problem: WireProblem,
    pub config: Vec<WireInsight>,
    pub cached_stages: Vec<WireCachedStage>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireStatus {
    Ok,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireStage {
    pub stage: Stage,
    pub instruction: String,
    pub code: String,
    pub status: ArtifactStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireError {
    #[serde(default)]
    pub stage: Option<Stage>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationResponse {
    pub protocol_version: u32,
    pub status: WireStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_score: Option<f64>,
    #[serde(default)]
    pub stages: Vec<WireStage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<WireError>,
}

/// Builds the request for `config`, listing the cached stage code the worker
/// must replay verbatim.
pub fn build_request(
    config: &ExperimentConfig,
    problem: &ProblemSpec,
    cache: &StageCache,
    output_dir: &str,
    seed: u64,
) -> SimulationRequest {
    let path = |f: fn(&crate::space::DatasetPaths) -> &std::path::Path| {
        problem.paths.as_ref().map(|p| f(p).display().to_string()).unwrap_or_default()
    };
    SimulationRequest {
        protocol_version: PROTOCOL_VERSION,
        problem: WireProblem {
            description: problem.description.clone(),
            target_column: problem.target_column.clone(),
            metric: problem.metric,
            train_path: path(|p| &p.train),
            dev_path: path(|p| &p.dev),
            test_path: path(|p| &p.test),
            data_info_path: path(|p| &p.data_info),
            output_dir: output_dir.to_string(),
        },
        config: config
            .insights
            .iter()
            .map(|i| WireInsight { stage: i.stage, insight_id: i.id.0.clone(), text: i.text.clone() })
            .collect(),
        cached_stages: cache
            .replay_plan(&config.dataset_fingerprint, &config.insights)
            .into_iter()
            .map(|e| WireCachedStage { stage: e.stage, code: e.code })
            .collect(),
        seed,
    }
}

/// Parses and validates a response body, producing exactly one of a result
/// or a typed error.
pub fn parse_response(
    body: &str,
    request: &SimulationRequest,
) -> Result<SimulationResult, ExecutorError> {
    let resp: SimulationResponse = serde_json::from_str(body.trim())
        .map_err(|e| ExecutorError::Protocol(format!("unparseable response: {e}")))?;
    let protocol = |m: String| Err(ExecutorError::Protocol(m));
    if resp.protocol_version != PROTOCOL_VERSION {
        return protocol(format!("unsupported protocol_version {}", resp.protocol_version));
    }
    if resp.status == WireStatus::Error {
        let err = resp.error.unwrap_or(WireError { stage: None, message: "unspecified".into() });
        return Err(ExecutorError::Stage { stage: err.stage, message: err.message });
    }
    let metric = request.problem.metric;
    let Some(dev) = resp.dev_score else {
        return protocol("status ok without dev_score".into());
    };
    for score in std::iter::once(dev).chain(resp.test_score) {
        if normalized_score(score, metric).is_err() {
            return protocol(format!("score {score} is invalid for {metric}"));
        }
    }
    let got: Vec<Stage> = resp.stages.iter().map(|s| s.stage).collect();
    if got != Stage::ALL {
        return protocol(format!("expected all five stages in order, got {got:?}"));
    }
    if let Some(s) = resp.stages.iter().find(|s| s.status == ArtifactStatus::Ok && s.code.is_empty()) {
        return protocol(format!("stage {} is ok but has no code", s.stage));
    }
    for cached in &request.cached_stages {
        let returned = resp.stages.iter().find(|s| s.stage == cached.stage);
        if returned.map(|s| &s.code) != Some(&cached.code) {
            return protocol(format!("stage {} did not replay the cached code", cached.stage));
        }
    }
    let stages = resp
        .stages
        .into_iter()
        .map(|s| StageArtifact {
            stage: s.stage,
            instruction: s.instruction,
            code: s.code,
            stdout_excerpt: String::new(),
            status: s.status,
        })
        .collect();
    let mut result = SimulationResult::ok(dev, resp.test_score, metric, stages);
    result.cache_hits = request.cached_stages.len();
    Ok(result)
}

/// Moves one request body to a worker and returns its response body.
pub trait Transport {
    fn exchange(&mut self, body: &str, timeout: Duration) -> Result<String, ExecutorError>;
}

/// Spawns `program args…` per request; writes the request as one line to its
/// stdin and reads one line from its stdout.
#[derive(Clone, Debug)]
pub struct StdioTransport {
    pub program: String,
    pub args: Vec<String>,
    pub working_dir: Option<PathBuf>,
}

impl StdioTransport {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        StdioTransport { program: program.into(), args, working_dir: None }
    }
}

impl Transport for StdioTransport {
    fn exchange(&mut self, body: &str, timeout: Duration) -> Result<String, ExecutorError> {
        let transport = |m: String| ExecutorError::Transport(m);
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::null());
        if let Some(dir) = &self.working_dir {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(|e| transport(format!("spawn {}: {e}", self.program)))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let line = format!("{body}\n");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            let mut out = String::new();
            let _ = tx.send(reader.read_line(&mut out).map(|_| out));
        });
        if let Err(e) = stdin.write_all(line.as_bytes()) {
            let _ = child.kill();
            let _ = child.wait();
            return Err(transport(format!("broken pipe writing request: {e}")));
        }
        drop(stdin);
        let received = rx.recv_timeout(timeout);
        let outcome = match received {
            Ok(Ok(out)) if !out.trim().is_empty() => Ok(out),
            Ok(Ok(_)) => Err(transport("worker closed stdout without a response".into())),
            Ok(Err(e)) => Err(transport(format!("reading response: {e}"))),
            Err(mpsc::RecvTimeoutError::Timeout) => {
                Err(transport(format!("worker exceeded timeout of {timeout:?}")))
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(transport("worker reader vanished".into())),
        };
        let _ = child.kill();
        let _ = child.wait();
        outcome
    }
}

/// `POST <url>` (appending `/simulate` when missing) with the request body.
pub struct HttpTransport {
    url: String,
}

impl HttpTransport {
    pub fn new(url: &str) -> Self {
        let base = url.trim_end_matches('/');
        let url = if base.ends_with("/simulate") { base.to_string() } else { format!("{base}/simulate") };
        HttpTransport { url }
    }
}

impl Transport for HttpTransport {
    fn exchange(&mut self, body: &str, timeout: Duration) -> Result<String, ExecutorError> {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        let mut resp = agent
            .post(&self.url)
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| ExecutorError::Transport(e.to_string()))?;
        resp.body_mut().read_to_string().map_err(|e| ExecutorError::Transport(e.to_string()))
    }
}

/// Executor speaking the wire protocol through any [`Transport`].
///
/// A worker-reported stage failure is retried once; transport and protocol
/// errors are not retried.
pub struct ExternalExecutor<T> {
    transport: T,
    pub timeout: Duration,
    pub output_dir: String,
    pub seed: u64,
}

impl<T: Transport> ExternalExecutor<T> {
    pub fn new(transport: T, timeout: Duration, output_dir: impl Into<String>, seed: u64) -> Self {
        ExternalExecutor { transport, timeout, output_dir: output_dir.into(), seed }
    }
}

impl<T: Transport> Executor for ExternalExecutor<T> {
    fn simulate(
        &mut self,
        config: &ExperimentConfig,
        problem: &ProblemSpec,
        cache: &mut StageCache,
    ) -> Result<SimulationResult, ExecutorError> {
        let request = build_request(config, problem, cache, &self.output_dir, self.seed);
        let body = serde_json::to_string(&request).expect("request serializes");
        let mut attempt = 0;
        let result = loop {
            let response = self.transport.exchange(&body, self.timeout)?;
            match parse_response(&response, &request) {
                Err(ExecutorError::Stage { .. }) if attempt == 0 => attempt += 1,
                other => break other?,
            }
        };
        for (i, artifact) in result.stages.iter().enumerate() {
            if artifact.status == ArtifactStatus::Ok {
                let prefix = super::cache::stage_prefix(&config.insights, artifact.stage);
                cache.store(&config.dataset_fingerprint, &prefix, artifact.stage, &artifact.code, &artifact.instruction)?;
            } else if i < request.cached_stages.len() {
                break;
            }
        }
        Ok(result)
    }
}
