//! The rollout loop: select, expand, sample a child, simulate, backpropagate.

mod params;
mod policy;

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{Executor, SimulationResult, StageCache};
use crate::insight::InsightId;
use crate::scalar::Scalar;
use crate::space::{ProblemSpec, SearchSpace};
use crate::stage::Stage;
use crate::tree::journal::{self, JournalError, JournalEvent, JournalRecord, JournalWriter};
use crate::tree::{ExperimentTree, NodeId, TreeError};

pub use params::SearchParams;
pub use policy::{expand, select, uct_dp};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("node {0} is at the deepest searchable stage")]
    TerminalNode(NodeId),
    #[error("no insights for searchable stage {0}")]
    EmptyPool(Stage),
    #[error("every simulation failed; no solution")]
    NoSolution,
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Journal(#[from] JournalError),
}

impl From<std::io::Error> for SearchError {
    fn from(e: std::io::Error) -> Self {
        SearchError::Journal(JournalError::Io(e))
    }
}

/// What one rollout did.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutRecord<S> {
    pub index: usize,
    pub selected_path: Vec<NodeId>,
    pub expanded_children: Vec<NodeId>,
    pub simulated_node: NodeId,
    /// Normalized dev score that was backpropagated.
    pub score: S,
    pub failed: bool,
    pub duration: Duration,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RolloutPoint<S> {
    pub index: usize,
    pub node: NodeId,
    pub score: S,
    /// Highest non-failed score seen up to and including this rollout.
    pub best_so_far: Option<S>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SearchOutcome<S> {
    pub best_node: NodeId,
    pub dev_score: S,
    pub test_score: Option<S>,
    pub rollouts: Vec<RolloutPoint<S>>,
    pub config_of_best: Vec<InsightId>,
    #[serde(skip)]
    pub solution_code: String,
}

/// Generator for rollout `index`: the search seed selects the key and the
/// rollout index the stream, so a resumed search draws exactly what an
/// uninterrupted one would.
pub fn rollout_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// A search in progress: the tree, its journal and the rollout history.
pub struct Search<S, W: Write> {
    tree: ExperimentTree<S>,
    params: SearchParams<S>,
    journal: JournalWriter<W>,
    points: Vec<RolloutPoint<S>>,
}

impl<S: Scalar, W: Write> Search<S, W> {
    /// Starts an empty tree and writes the journal header.
    pub fn new(fingerprint: &str, params: SearchParams<S>, journal_out: W) -> Result<Self, SearchError> {
        params.validate()?;
        let mut journal = JournalWriter::new(journal_out);
        journal.append(JournalEvent::Header { fingerprint: fingerprint.to_string(), seed: params.rng_seed })?;
        Ok(Search { tree: ExperimentTree::new(fingerprint), params, journal, points: Vec::new() })
    }

    /// Rebuilds a search from journal records.
    ///
    /// `records` must end at a rollout boundary (see [`complete_prefix`]);
    /// `journal_out` continues the same journal. The seed stored in the
    /// journal overrides `params.rng_seed`.
    pub fn resume(
        records: &[JournalRecord],
        space: &SearchSpace,
        mut params: SearchParams<S>,
        journal_out: W,
    ) -> Result<Self, SearchError> {
        params.validate()?;
        let replayed = journal::replay::<S>(records, space)?;
        params.rng_seed = replayed.seed;
        let mut best: Option<S> = None;
        let points = replayed
            .rollouts
            .iter()
            .enumerate()
            .map(|(index, &(node, score))| {
                let failed = replayed.tree.node(node).map(|n| n.failed()).unwrap_or(true);
                if !failed {
                    best = Some(best.map_or(score, |b| b.max(score)));
                }
                RolloutPoint { index, node, score, best_so_far: best }
            })
            .collect();
        Ok(Search {
            tree: replayed.tree,
            params,
            journal: JournalWriter::continuing(journal_out, replayed.records),
            points,
        })
    }

    pub fn tree(&self) -> &ExperimentTree<S> {
        &self.tree
    }

    pub fn params(&self) -> &SearchParams<S> {
        &self.params
    }

    pub fn completed(&self) -> usize {
        self.points.len()
    }

    pub fn into_parts(self) -> (ExperimentTree<S>, W) {
        (self.tree, self.journal.into_inner())
    }

    /// Runs one rollout. Executor errors do not abort it: the simulation is
    /// recorded as failed with score zero.
    pub fn rollout<E: Executor>(
        &mut self,
        space: &SearchSpace,
        problem: &ProblemSpec,
        executor: &mut E,
        cache: &mut StageCache,
    ) -> Result<RolloutRecord<S>, SearchError> {
        let started = Instant::now();
        let index = self.points.len();
        let mut rng = rollout_rng(self.params.rng_seed, index);
        let selected = select(&self.tree, &self.params, &mut rng);
        let selected_path = self.tree.path(selected)?;
        let (expanded_children, sample) = if self.tree.node(selected)?.depth < self.params.max_depth() {
            let before = self.tree.len();
            let children = expand(&mut self.tree, selected, space, &self.params)?;
            for &child in children.iter().filter(|c| c.0 >= before) {
                let insight = self.tree.node(child)?.insight.as_ref().expect("children carry insights");
                self.journal.append(JournalEvent::NodeCreated {
                    node_id: child,
                    parent_id: selected,
                    insight_id: insight.id.clone(),
                })?;
            }
            let pick = children[rng.random_range(0..children.len())];
            (children, pick)
        } else {
            (Vec::new(), selected)
        };

        let config = self.tree.config_path(sample)?;
        let (result, error) = match executor.simulate(&config, problem, cache) {
            Ok(r) => (r, None),
            Err(e) => (SimulationResult::failed(problem.metric), Some(e.to_string())),
        };
        let score = self.tree.record_simulation(sample, &result)?;
        let sim = self.tree.node(sample)?.simulation.clone().expect("just recorded");
        self.journal.append(JournalEvent::Simulated {
            node_id: sample,
            score: sim.score.as_f64(),
            test_score: sim.test_score.map(Scalar::as_f64),
            failed: sim.failed,
            stages: sim.stages,
        })?;
        self.tree.backpropagate(sample, score)?;
        self.journal.append(JournalEvent::Backprop { node_id: sample, score: score.as_f64() })?;

        let prev = self.points.last().and_then(|p| p.best_so_far);
        let best_so_far = if sim.failed { prev } else { Some(prev.map_or(score, |b| b.max(score))) };
        self.points.push(RolloutPoint { index, node: sample, score, best_so_far });
        Ok(RolloutRecord {
            index,
            selected_path,
            expanded_children,
            simulated_node: sample,
            score,
            failed: sim.failed,
            duration: started.elapsed(),
            error,
        })
    }

    /// Runs rollouts until `k_rollouts` have completed in total.
    pub fn run<E: Executor>(
        &mut self,
        space: &SearchSpace,
        problem: &ProblemSpec,
        executor: &mut E,
        cache: &mut StageCache,
    ) -> Result<Vec<RolloutRecord<S>>, SearchError> {
        check_space(space, &self.params)?;
        let mut records = Vec::new();
        while self.completed() < self.params.k_rollouts {
            records.push(self.rollout(space, problem, executor, cache)?);
        }
        Ok(records)
    }

    /// The best simulated node and the rollout curve so far.
    pub fn outcome(&self) -> Result<SearchOutcome<S>, SearchError> {
        let best = self.tree.best_dev_node().ok_or(SearchError::NoSolution)?;
        let node = self.tree.node(best)?;
        let sim = node.simulation.as_ref().expect("best node is simulated");
        Ok(SearchOutcome {
            best_node: best,
            dev_score: sim.score,
            test_score: sim.test_score,
            rollouts: self.points.clone(),
            config_of_best: self.tree.config_path(best)?.ids(),
            solution_code: sim.solution_code(),
        })
    }
}

fn check_space<S: Scalar>(space: &SearchSpace, params: &SearchParams<S>) -> Result<(), SearchError> {
    match params.searchable_stages.iter().find(|&&s| space.stage(s).is_empty()) {
        Some(&stage) => Err(SearchError::EmptyPool(stage)),
        None => Ok(()),
    }
}

/// Number of leading records that form complete rollouts: the header plus
/// everything up to the last backprop record. Later records belong to an
/// interrupted rollout, which a resumed search reruns from scratch.
pub fn complete_prefix(records: &[JournalRecord]) -> usize {
    records
        .iter()
        .rposition(|r| matches!(r.event, JournalEvent::Backprop { .. }))
        .map_or(records.len().min(1), |i| i + 1)
}

/// Runs a complete search of `params.k_rollouts` rollouts, journaling to
/// `journal_out`.
pub fn run_search<S: Scalar, E: Executor, W: Write>(
    problem: &ProblemSpec,
    space: &SearchSpace,
    executor: &mut E,
    cache: &mut StageCache,
    params: SearchParams<S>,
    journal_out: W,
) -> Result<(SearchOutcome<S>, Search<S, W>), SearchError> {
    check_space(space, &params)?;
    let mut search = Search::new(&problem.fingerprint(), params, journal_out)?;
    search.run(space, problem, executor, cache)?;
    Ok((search.outcome()?, search))
}
