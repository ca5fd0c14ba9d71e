//! The insight search space: loading it from disk, or proposing it with a
//! chat-completion model and parsing the structured reply.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eval::MetricKind;
use crate::insight::{Insight, InsightId};
use crate::prompts;
use crate::stage::Stage;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed insight document: {0}")]
    MalformedResponse(String),
    #[error("endpoint error: {0}")]
    EndpointError(String),
    #[error("dataset path {0} does not exist")]
    MissingPath(PathBuf),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInfo {
    #[serde(default)]
    pub metadata: String,
    /// A few sample rows.
    #[serde(default)]
    pub head: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
    pub data_info: PathBuf,
}

impl DatasetPaths {
    fn all(&self) -> [&Path; 4] {
        [&self.train, &self.dev, &self.test, &self.data_info]
    }
}

/// Problem description and dataset information handed to proposers and executors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemSpec {
    /// Dataset name used in task prompts.
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub dataset_info: DatasetInfo,
    /// Absent for synthetic problems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<DatasetPaths>,
    pub target_column: String,
    pub metric: MetricKind,
}

impl ProblemSpec {
    /// Hash of the dataset identity: name, target, metric and the bytes of
    /// every dataset file (or its path when unreadable).
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for part in [self.name.as_str(), self.target_column.as_str(), self.metric.name()] {
            h.update(part.as_bytes());
            h.update([0]);
        }
        if let Some(paths) = &self.paths {
            for p in paths.all() {
                match fs::read(p) {
                    Ok(bytes) => h.update(&bytes),
                    Err(_) => h.update(p.as_os_str().as_encoded_bytes()),
                }
                h.update([0]);
            }
        }
        hex::encode(&h.finalize()[..8])
    }

    pub fn check_paths(&self) -> Result<(), SpaceError> {
        if let Some(paths) = &self.paths {
            if let Some(missing) = paths.all().into_iter().find(|p| !p.exists()) {
                return Err(SpaceError::MissingPath(missing.to_path_buf()));
            }
        }
        Ok(())
    }
}

fn default_temperature() -> f64 {
    0.5
}

fn default_retries() -> u32 {
    2
}

fn default_timeout() -> u64 {
    120
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlmEndpointConfig {
    /// Chat-completion endpoint; `/chat/completions` is appended unless present.
    pub base_url: String,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

impl LlmEndpointConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        Ok(())
    }
}

/// Per-stage insight pools.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(into = "Vec<StageBlock>", try_from = "Vec<StageBlock>")]
pub struct SearchSpace {
    per_stage: BTreeMap<Stage, Vec<Insight>>,
    /// Requested minimum pool size per proposed stage.
    pub insights_per_stage: usize,
}

/// Equality compares the pools only; the requested floor is not persisted.
impl PartialEq for SearchSpace {
    fn eq(&self, other: &Self) -> bool {
        self.per_stage == other.per_stage
    }
}

impl Eq for SearchSpace {}

/// Stages the proposal prompt asks for; model evaluation is never proposed.
pub const PROPOSED_STAGES: [Stage; 4] = [
    Stage::ExploratoryDataAnalysis,
    Stage::DataPreprocessing,
    Stage::FeatureEngineering,
    Stage::ModelTraining,
];

impl SearchSpace {
    /// Builds a space from `(stage, text)` pairs, dropping duplicate insights.
    pub fn from_pairs<I, T>(pairs: I) -> Result<SearchSpace, SpaceError>
    where
        I: IntoIterator<Item = (Stage, T)>,
        T: Into<String>,
    {
        let mut per_stage: BTreeMap<Stage, Vec<Insight>> = BTreeMap::new();
        for (stage, text) in pairs {
            let insight = Insight::new(stage, text);
            let pool = per_stage.entry(stage).or_default();
            if !pool.iter().any(|i| i.id == insight.id) {
                pool.push(insight);
            }
        }
        per_stage.retain(|_, pool| !pool.is_empty());
        if per_stage.is_empty() {
            return Err(SpaceError::MalformedResponse("no stage has any insight".into()));
        }
        let m = per_stage.values().map(Vec::len).min().unwrap_or(0);
        Ok(SearchSpace { per_stage, insights_per_stage: m })
    }

    pub fn stage(&self, stage: Stage) -> &[Insight] {
        self.per_stage.get(&stage).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn stages(&self) -> impl Iterator<Item = Stage> + '_ {
        self.per_stage.keys().copied()
    }

    pub fn insight(&self, id: &InsightId) -> Option<&Insight> {
        self.per_stage.values().flatten().find(|i| &i.id == id)
    }

    pub fn total(&self) -> usize {
        self.per_stage.values().map(Vec::len).sum()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("search space serializes")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum InsightEntry {
    Text(String),
    Annotated {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
        text: String,
    },
}

impl InsightEntry {
    fn text(self) -> String {
        match self {
            InsightEntry::Text(t) | InsightEntry::Annotated { text: t, .. } => t,
        }
    }
}

/// One `{task_type, insights}` block of the proposal document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageBlock {
    task_type: String,
    insights: Vec<InsightEntry>,
}

impl From<SearchSpace> for Vec<StageBlock> {
    fn from(space: SearchSpace) -> Self {
        space
            .per_stage
            .into_iter()
            .map(|(stage, pool)| StageBlock {
                task_type: stage.task_type().to_string(),
                insights: pool
                    .into_iter()
                    .map(|i| InsightEntry::Annotated { id: Some(i.id.0), text: i.text })
                    .collect(),
            })
            .collect()
    }
}

impl TryFrom<Vec<StageBlock>> for SearchSpace {
    type Error = String;

    fn try_from(blocks: Vec<StageBlock>) -> Result<Self, Self::Error> {
        let mut pairs = Vec::new();
        for block in blocks {
            let stage = Stage::from_task_type(&block.task_type)
                .ok_or_else(|| format!("unknown task_type `{}`", block.task_type))?;
            pairs.extend(block.insights.into_iter().map(|e| (stage, e.text())));
        }
        SearchSpace::from_pairs(pairs).map_err(|e| match e {
            SpaceError::MalformedResponse(m) => m,
            other => other.to_string(),
        })
    }
}

/// The first fenced code block of `text`, or the trimmed text itself.
fn extract_json(text: &str) -> &str {
    let Some(start) = text.find("```") else {
        return text.trim();
    };
    let after = &text[start + 3..];
    // skip the info string (e.g. `json`) up to the end of the fence line
    let body = after.find('\n').map_or(after, |nl| &after[nl + 1..]);
    match body.find("```") {
        Some(end) => body[..end].trim(),
        None => body.trim(),
    }
}

/// Parses a `[{task_type, insights: [...]}]` document, fenced or bare.
pub fn parse_insight_response(text: &str) -> Result<SearchSpace, SpaceError> {
    let json = extract_json(text);
    let blocks: Vec<StageBlock> = serde_json::from_str(json)
        .map_err(|e| SpaceError::MalformedResponse(format!("not an insight document: {e}")))?;
    SearchSpace::try_from(blocks).map_err(SpaceError::MalformedResponse)
}

pub fn load_static_insights(path: &Path) -> Result<SearchSpace, SpaceError> {
    let text = fs::read_to_string(path)
        .map_err(|source| SpaceError::Io { path: path.to_path_buf(), source })?;
    parse_insight_response(&text)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Blocking chat-completion call returning the first choice's content.
pub trait ChatClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, SpaceError>;
}

pub struct HttpChatClient {
    config: LlmEndpointConfig,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(config: LlmEndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        HttpChatClient { config, agent }
    }

    fn url(&self) -> String {
        let base = self.config.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, SpaceError> {
        let body = serde_json::json!({
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "messages": messages,
        });
        let mut req = self.agent.post(&self.url());
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let endpoint = |e: ureq::Error| SpaceError::EndpointError(e.to_string());
        let mut resp = req.send_json(&body).map_err(endpoint)?;
        let value: serde_json::Value = resp.body_mut().read_json().map_err(endpoint)?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| SpaceError::EndpointError("response has no choices[0].message.content".into()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptTurn {
    pub attempt: u32,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Proposal {
    pub space: SearchSpace,
    pub transcript: Vec<TranscriptTurn>,
}

/// Asks `client` for at least `m` insights per proposed stage, retrying up to
/// `max_retries` times on endpoint failures or unusable replies.
///
/// On failure the error is returned together with the transcript so far.
pub fn propose_insights(
    problem: &ProblemSpec,
    client: &dyn ChatClient,
    m: usize,
    max_retries: u32,
) -> Result<Proposal, (SpaceError, Vec<TranscriptTurn>)> {
    let prompt = prompts::insight_prompt(problem, m.max(1));
    let messages = [ChatMessage { role: "user".into(), content: prompt.clone() }];
    let mut transcript = Vec::new();
    let mut last_err = SpaceError::EndpointError("no attempt made".into());
    for attempt in 0..=max_retries {
        let mut turn = TranscriptTurn { attempt, prompt: prompt.clone(), response: None, error: None };
        let outcome = client.complete(&messages).and_then(|reply| {
            turn.response = Some(reply.clone());
            let space = parse_insight_response(&reply)?;
            match PROPOSED_STAGES.iter().find(|&&s| space.stage(s).len() < m) {
                Some(short) => Err(SpaceError::MalformedResponse(format!(
                    "stage {short} has {} insights, fewer than {m}",
                    space.stage(*short).len()
                ))),
                None => Ok(space),
            }
        });
        match outcome {
            Ok(mut space) => {
                transcript.push(turn);
                space.insights_per_stage = m;
                return Ok(Proposal { space, transcript });
            }
            Err(e) => {
                turn.error = Some(e.to_string());
                transcript.push(turn);
                last_err = e;
            }
        }
    }
    Err((last_err, transcript))
}
