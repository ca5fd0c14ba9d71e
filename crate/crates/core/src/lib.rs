//! Monte Carlo Tree Search over staged machine-learning pipeline
//! configurations.
//!
//! A [`SearchSpace`] holds natural-language insights for each pipeline
//! stage. The search grows an [`ExperimentTree`] whose root-to-node paths are
//! experiment configurations, asks an [`Executor`] to simulate them, and
//! backpropagates normalized dev scores. The `eval` module turns raw scores
//! from many runs into normalized scores and rank tables.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix it to `f64`.

pub mod ablation;
pub mod eval;
pub mod executor;
pub mod insight;
pub mod mcts;
pub mod prompts;
pub mod scalar;
pub mod space;
pub mod stage;
pub mod tree;

pub use executor::{Executor, ExecutorError, SimulationResult, StageCache};
pub use insight::{Insight, InsightId};
pub use mcts::{run_search, SearchError};
pub use scalar::Scalar;
pub use space::{ProblemSpec, SearchSpace};
pub use stage::Stage;
pub use tree::{ExperimentConfig, ExperimentTree, NodeId};

pub type Tree = tree::ExperimentTree<f64>;
pub type Node = tree::ExperimentNode<f64>;
pub type Params = mcts::SearchParams<f64>;
pub type Outcome = mcts::SearchOutcome<f64>;
pub type Landscape = executor::SyntheticLandscape<f64>;
pub type Table = eval::ScoreTable<f64>;
pub type Report = eval::RankReport<f64>;
pub type Ablation = ablation::AblationReport<f64>;
