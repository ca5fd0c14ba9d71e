//! The experiment tree: node identity, root-to-node configurations and the
//! value/visit bookkeeping mutated by backpropagation.

mod config;
pub mod journal;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::normalized_score;
use crate::executor::{SimStatus, SimulationResult};
use crate::insight::Insight;
use crate::scalar::Scalar;
use crate::stage::Stage;

pub use config::ExperimentConfig;

/// Dense creation-order index; the root is always `NodeId(0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} has never been visited")]
    NeverVisited(NodeId),
    #[error("insight stage {child} does not follow parent stage {parent:?}")]
    StageOrder { parent: Option<Stage>, child: Stage },
}

/// Code produced for one stage during a simulation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCode {
    pub stage: Stage,
    pub code: String,
}

/// The latest simulation attached to a node.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation<S> {
    /// Normalized dev score; `0` when the simulation failed.
    pub score: S,
    pub test_score: Option<S>,
    pub failed: bool,
    pub stages: Vec<StageCode>,
    /// Global order of this recording within the tree.
    pub seq: u64,
}

impl<S> Simulation<S> {
    pub fn solution_code(&self) -> String {
        self.stages.iter().map(|s| s.code.as_str()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentNode<S> {
    pub id: NodeId,
    /// `None` only for the root, which stands for the default pipeline.
    pub insight: Option<Insight>,
    pub depth: usize,
    /// Sum of every simulation score recorded in this subtree.
    pub value: S,
    pub n_visits: u64,
    /// Simulations performed at this node itself.
    pub own_simulations: u64,
    pub simulation: Option<Simulation<S>>,
    /// Code covering stages up to this node's own stage.
    pub stage_code: Option<String>,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
}

impl<S: Scalar> ExperimentNode<S> {
    pub fn sim_score(&self) -> Option<S> {
        self.simulation.as_ref().map(|s| s.score)
    }

    pub fn failed(&self) -> bool {
        self.simulation.as_ref().is_some_and(|s| s.failed)
    }

    pub fn solution_code(&self) -> Option<String> {
        self.simulation.as_ref().map(Simulation::solution_code)
    }

    pub fn stage(&self) -> Option<Stage> {
        self.insight.as_ref().map(|i| i.stage)
    }

    pub fn is_simulated(&self) -> bool {
        self.simulation.is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentTree<S> {
    nodes: Vec<ExperimentNode<S>>,
    fingerprint: String,
    next_seq: u64,
}

impl<S: Scalar> ExperimentTree<S> {
    pub fn new(dataset_fingerprint: impl Into<String>) -> Self {
        let root = ExperimentNode {
            id: NodeId::ROOT,
            insight: None,
            depth: 0,
            value: S::zero(),
            n_visits: 0,
            own_simulations: 0,
            simulation: None,
            stage_code: None,
            children: Vec::new(),
            parent: None,
        };
        ExperimentTree { nodes: vec![root], fingerprint: dataset_fingerprint.into(), next_seq: 0 }
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, id: NodeId) -> Result<&ExperimentNode<S>, TreeError> {
        self.nodes.get(id.0).ok_or(TreeError::UnknownNode(id))
    }

    fn node_mut(&mut self, id: NodeId) -> Result<&mut ExperimentNode<S>, TreeError> {
        self.nodes.get_mut(id.0).ok_or(TreeError::UnknownNode(id))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ExperimentNode<S>> {
        self.nodes.iter()
    }

    /// Appends a child carrying `insight`, whose stage must come after the parent's.
    pub fn add_child(&mut self, parent: NodeId, insight: Insight) -> Result<NodeId, TreeError> {
        let p = self.node(parent)?;
        let parent_stage = p.stage();
        if parent_stage.is_some_and(|s| s >= insight.stage) {
            return Err(TreeError::StageOrder { parent: parent_stage, child: insight.stage });
        }
        let id = NodeId(self.nodes.len());
        let depth = p.depth + 1;
        self.nodes.push(ExperimentNode {
            id,
            insight: Some(insight),
            depth,
            value: S::zero(),
            n_visits: 0,
            own_simulations: 0,
            simulation: None,
            stage_code: None,
            children: Vec::new(),
            parent: Some(parent),
        });
        self.nodes[parent.0].children.push(id);
        Ok(id)
    }

    /// Node ids from the root down to `id`, inclusive.
    pub fn path(&self, id: NodeId) -> Result<Vec<NodeId>, TreeError> {
        let mut path = vec![id];
        let mut cur = self.node(id)?;
        while let Some(p) = cur.parent {
            path.push(p);
            cur = self.node(p)?;
        }
        path.reverse();
        Ok(path)
    }

    /// Insights on the root-to-node path, ordered by depth.
    pub fn config_path(&self, id: NodeId) -> Result<ExperimentConfig, TreeError> {
        let insights = self
            .path(id)?
            .into_iter()
            .filter_map(|n| self.nodes[n.0].insight.clone())
            .collect();
        Ok(ExperimentConfig::new_unchecked(insights, self.fingerprint.clone()))
    }

    /// Attaches `result` to `id` and returns the normalized score to backpropagate.
    ///
    /// Failed results, and results whose dev score cannot be normalized, are
    /// recorded as failures scoring zero.
    pub fn record_simulation(&mut self, id: NodeId, result: &SimulationResult) -> Result<S, TreeError> {
        let normalize = |raw: Option<f64>| {
            raw.and_then(|r| normalized_score(S::of(r), result.raw_metric).ok())
        };
        let dev = match result.status {
            SimStatus::Ok => normalize(result.dev_score),
            SimStatus::Failed => None,
        };
        let sim = Simulation {
            score: dev.unwrap_or_else(S::zero),
            test_score: dev.and(normalize(result.test_score)),
            failed: dev.is_none(),
            stages: result
                .stages
                .iter()
                .map(|a| StageCode { stage: a.stage, code: a.code.clone() })
                .collect(),
            seq: 0,
        };
        let score = sim.score;
        self.set_simulation(id, sim)?;
        Ok(score)
    }

    /// Low-level counterpart of [`record_simulation`](Self::record_simulation)
    /// used by journal replay. Overwrites `sim.seq`.
    pub fn set_simulation(&mut self, id: NodeId, mut sim: Simulation<S>) -> Result<(), TreeError> {
        sim.seq = self.next_seq;
        let node = self.node_mut(id)?;
        node.simulation = Some(sim);
        node.own_simulations += 1;
        self.next_seq += 1;
        Ok(())
    }

    /// Adds `score` to the value and visit count of every node from `id` up to
    /// the root. Ancestors without stage code receive the prefix of the node's
    /// latest solution covering their own stage.
    pub fn backpropagate(&mut self, id: NodeId, score: S) -> Result<(), TreeError> {
        let path = self.path(id)?;
        let stages: Vec<StageCode> = self.nodes[id.0]
            .simulation
            .as_ref()
            .filter(|s| !s.failed)
            .map(|s| s.stages.clone())
            .unwrap_or_default();
        for n in path {
            let node = &mut self.nodes[n.0];
            node.value = node.value + score;
            node.n_visits += 1;
            if node.stage_code.is_none() && !stages.is_empty() {
                if let Some(stage) = node.stage() {
                    node.stage_code = Some(
                        stages
                            .iter()
                            .filter(|s| s.stage <= stage)
                            .map(|s| s.code.as_str())
                            .collect(),
                    );
                }
            }
        }
        Ok(())
    }

    /// `value / n_visits` for the node's subtree.
    pub fn subtree_mean(&self, id: NodeId) -> Result<S, TreeError> {
        let n = self.node(id)?;
        if n.n_visits == 0 {
            return Err(TreeError::NeverVisited(id));
        }
        Ok(n.value / S::of_count(n.n_visits))
    }

    /// Simulated, non-failed node with the highest dev score; ties go to the
    /// earlier recording.
    pub fn best_dev_node(&self) -> Option<NodeId> {
        self.nodes
            .iter()
            .filter_map(|n| n.simulation.as_ref().filter(|s| !s.failed).map(|s| (n.id, s)))
            .fold(None, |best: Option<(NodeId, &Simulation<S>)>, (id, s)| match best {
                Some((_, b)) if b.score > s.score || (b.score == s.score && b.seq < s.seq) => best,
                _ => Some((id, s)),
            })
            .map(|(id, _)| id)
    }
}
