use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the five ordered phases of a machine-learning pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ExploratoryDataAnalysis,
    DataPreprocessing,
    FeatureEngineering,
    ModelTraining,
    ModelEvaluation,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::ExploratoryDataAnalysis,
        Stage::DataPreprocessing,
        Stage::FeatureEngineering,
        Stage::ModelTraining,
        Stage::ModelEvaluation,
    ];

    /// Ordinal in `1..=5`.
    pub fn ordinal(self) -> u8 {
        match self {
            Stage::ExploratoryDataAnalysis => 1,
            Stage::DataPreprocessing => 2,
            Stage::FeatureEngineering => 3,
            Stage::ModelTraining => 4,
            Stage::ModelEvaluation => 5,
        }
    }

    pub fn from_ordinal(ordinal: u8) -> Option<Stage> {
        Stage::ALL.get(usize::from(ordinal).checked_sub(1)?).copied()
    }

    /// The `task_type` tag used in insight proposal documents.
    pub fn task_type(self) -> &'static str {
        match self {
            Stage::ExploratoryDataAnalysis => "EDA",
            Stage::DataPreprocessing => "Data Preprocessing",
            Stage::FeatureEngineering => "Feature Engineering",
            Stage::ModelTraining => "Model Training",
            Stage::ModelEvaluation => "Model Evaluation",
        }
    }

    /// Case-insensitive exact match against [`Stage::task_type`]. No fuzzy matching.
    pub fn from_task_type(tag: &str) -> Option<Stage> {
        let tag = tag.trim();
        Stage::ALL
            .into_iter()
            .find(|s| s.task_type().eq_ignore_ascii_case(tag))
    }

    /// snake_case name used in file names and the wire protocol.
    pub fn slug(self) -> &'static str {
        match self {
            Stage::ExploratoryDataAnalysis => "exploratory_data_analysis",
            Stage::DataPreprocessing => "data_preprocessing",
            Stage::FeatureEngineering => "feature_engineering",
            Stage::ModelTraining => "model_training",
            Stage::ModelEvaluation => "model_evaluation",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.task_type())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.slug() == s)
            .or_else(|| Stage::from_task_type(s))
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}
