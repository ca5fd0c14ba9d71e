//! The simulation contract and its implementations.
//!
//! An executor turns an [`ExperimentConfig`] into one instruction per stage,
//! produces (or replays from the [`StageCache`]) code for each stage in order,
//! and reports raw metric scores.

mod cache;
pub mod external;
mod landscape;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::MetricKind;
use crate::space::ProblemSpec;
use crate::stage::Stage;
use crate::tree::ExperimentConfig;

pub use cache::{CacheEntry, CacheError, CacheStats, StageCache};
pub use landscape::{landscape_score, Interaction, LandscapeExecutor, SyntheticLandscape};

#[derive(Debug, Error)]
pub enum ExecutorError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("stage {}: {message}", stage.map_or("?".to_string(), |s| s.to_string()))]
    Stage { stage: Option<Stage>, message: String },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

pub trait Executor {
    fn simulate(
        &mut self,
        config: &ExperimentConfig,
        problem: &ProblemSpec,
        cache: &mut StageCache,
    ) -> Result<SimulationResult, ExecutorError>;
}

impl<E: Executor + ?Sized> Executor for &mut E {
    fn simulate(
        &mut self,
        config: &ExperimentConfig,
        problem: &ProblemSpec,
        cache: &mut StageCache,
    ) -> Result<SimulationResult, ExecutorError> {
        (**self).simulate(config, problem, cache)
    }
}

impl<E: Executor + ?Sized> Executor for Box<E> {
    fn simulate(
        &mut self,
        config: &ExperimentConfig,
        problem: &ProblemSpec,
        cache: &mut StageCache,
    ) -> Result<SimulationResult, ExecutorError> {
        (**self).simulate(config, problem, cache)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageInstruction {
    pub stage: Stage,
    pub instruction: String,
}

/// Instruction for a stage that has no insight in the configuration.
pub fn default_instruction(stage: Stage) -> &'static str {
    match stage {
        Stage::ExploratoryDataAnalysis => "Perform exploratory data analysis on the train and dev datasets",
        Stage::DataPreprocessing => "Preprocess the train, dev, and test datasets",
        Stage::FeatureEngineering => "Perform feature engineering on the train, dev, and test datasets",
        Stage::ModelTraining => "Train multiple models and evaluate their performance",
        Stage::ModelEvaluation => "Evaluate the best model on the dev set and save dev and test predictions",
    }
}

/// One instruction for each of the five stages, taken from the configuration's
/// insight when present.
pub fn plan_instructions(config: &ExperimentConfig) -> Vec<StageInstruction> {
    Stage::ALL
        .iter()
        .map(|&stage| StageInstruction {
            stage,
            instruction: config
                .insights
                .iter()
                .find(|i| i.stage == stage)
                .map_or_else(|| default_instruction(stage).to_string(), |i| i.text.clone()),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactStatus {
    Ok,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageArtifact {
    pub stage: Stage,
    pub instruction: String,
    pub code: String,
    #[serde(default)]
    pub stdout_excerpt: String,
    pub status: ArtifactStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimStatus {
    Ok,
    Failed,
}

/// Outcome of one simulation. Scores are raw metric values; normalization
/// happens when the result is attached to the tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub dev_score: Option<f64>,
    pub test_score: Option<f64>,
    pub raw_metric: MetricKind,
    pub stages: Vec<StageArtifact>,
    /// In-order concatenation of every stage's code.
    pub solution_code: String,
    pub status: SimStatus,
    pub cache_hits: usize,
}

impl SimulationResult {
    pub fn ok(dev: f64, test: Option<f64>, metric: MetricKind, stages: Vec<StageArtifact>) -> Self {
        SimulationResult {
            dev_score: Some(dev),
            test_score: test,
            raw_metric: metric,
            solution_code: stages.iter().map(|s| s.code.as_str()).collect(),
            stages,
            status: SimStatus::Ok,
            cache_hits: 0,
        }
    }

    pub fn failed(metric: MetricKind) -> Self {
        SimulationResult {
            dev_score: None,
            test_score: None,
            raw_metric: metric,
            stages: Vec::new(),
            solution_code: String::new(),
            status: SimStatus::Failed,
            cache_hits: 0,
        }
    }
}

/// Stage artifacts for `config`: cached code is replayed for the longest
/// cached stage prefix and `generate` is called for every remaining stage,
/// whose code is then cached.
///
/// Returns the artifacts and the number of replayed stages.
pub fn assemble_stages<F>(
    config: &ExperimentConfig,
    cache: &mut StageCache,
    mut generate: F,
) -> Result<(Vec<StageArtifact>, usize), ExecutorError>
where
    F: FnMut(&StageInstruction) -> Result<String, ExecutorError>,
{
    let fingerprint = &config.dataset_fingerprint;
    let replay = cache.replay_plan(fingerprint, &config.insights);
    let hits = replay.len();
    let mut artifacts = Vec::with_capacity(Stage::ALL.len());
    for (i, instr) in plan_instructions(config).into_iter().enumerate() {
        let code = match replay.get(i) {
            Some(entry) => entry.code.clone(),
            None => {
                let code = generate(&instr)?;
                let prefix = cache::stage_prefix(&config.insights, instr.stage);
                cache.store(fingerprint, &prefix, instr.stage, &code, &instr.instruction)?;
                code
            }
        };
        artifacts.push(StageArtifact {
            stage: instr.stage,
            instruction: instr.instruction,
            code,
            stdout_excerpt: String::new(),
            status: ArtifactStatus::Ok,
        });
    }
    Ok((artifacts, hits))
}
