use serde::{Deserialize, Serialize};

use crate::mcts::SearchError;
use crate::scalar::Scalar;
use crate::stage::Stage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", default)]
pub struct SearchParams<S> {
    pub k_rollouts: usize,
    pub alpha_explore: S,
    /// Effective visit count of a never-visited child, in `(0, 1]`.
    pub alpha_unvisited: S,
    /// Stage assigned to each tree depth, starting at depth 1.
    pub searchable_stages: Vec<Stage>,
    pub rng_seed: u64,
}

impl<S: Scalar> Default for SearchParams<S> {
    fn default() -> Self {
        SearchParams {
            k_rollouts: 10,
            alpha_explore: S::of(1.4),
            alpha_unvisited: S::of(0.8),
            searchable_stages: vec![
                Stage::DataPreprocessing,
                Stage::FeatureEngineering,
                Stage::ModelTraining,
            ],
            rng_seed: 0,
        }
    }
}

impl<S: Scalar> SearchParams<S> {
    pub fn validate(&self) -> Result<(), SearchError> {
        let invalid = |m: String| Err(SearchError::InvalidParams(m));
        if self.k_rollouts == 0 {
            return invalid("k_rollouts must be at least 1".into());
        }
        if !self.alpha_explore.is_finite() || self.alpha_explore < S::zero() {
            return invalid(format!("alpha_explore must be finite and >= 0, got {}", self.alpha_explore));
        }
        if !(self.alpha_unvisited > S::zero() && self.alpha_unvisited <= S::one()) {
            return invalid(format!("alpha_unvisited must be in (0, 1], got {}", self.alpha_unvisited));
        }
        if self.searchable_stages.is_empty() {
            return invalid("searchable_stages is empty".into());
        }
        if !self.searchable_stages.windows(2).all(|w| w[0] < w[1]) {
            return invalid("searchable_stages must be strictly increasing".into());
        }
        Ok(())
    }

    pub fn max_depth(&self) -> usize {
        self.searchable_stages.len()
    }
}
