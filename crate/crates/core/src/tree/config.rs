use serde::{Deserialize, Serialize};

use crate::insight::{Insight, InsightId};

/// Ordered insights along a root-to-node path: at most one per stage, in
/// stage order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub insights: Vec<Insight>,
    pub dataset_fingerprint: String,
}

impl ExperimentConfig {
    /// Returns `None` unless stages are strictly increasing.
    pub fn new(insights: Vec<Insight>, dataset_fingerprint: impl Into<String>) -> Option<Self> {
        let ordered = insights.windows(2).all(|w| w[0].stage < w[1].stage);
        ordered.then(|| ExperimentConfig::new_unchecked(insights, dataset_fingerprint.into()))
    }

    pub(crate) fn new_unchecked(insights: Vec<Insight>, dataset_fingerprint: String) -> Self {
        ExperimentConfig { insights, dataset_fingerprint }
    }

    pub fn ids(&self) -> Vec<InsightId> {
        self.insights.iter().map(|i| i.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.insights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.insights.is_empty()
    }
}
