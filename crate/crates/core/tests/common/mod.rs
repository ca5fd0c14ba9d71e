#![allow(dead_code)]

use stagewise::eval::MetricKind;
use stagewise::executor::{ArtifactStatus, SimulationResult, StageArtifact};
use stagewise::mcts::{expand, SearchParams};
use stagewise::{NodeId, SearchSpace, Stage, Tree};

/// Scores of the ten simulations in the reference case study, by node label.
pub const CASE_STUDY_SCORES: [(&str, f64); 10] = [
    ("0", 0.6855841857240594),
    ("0-0", 0.6420233166755841),
    ("0-0-2", 0.6594266804380511),
    ("0-1", 0.5985614604756948),
    ("0-1-1", 0.6944266833187726),
    ("0-2", 0.5997286931710517),
    ("0-2-1", 0.6372459669415207),
    ("0-2-1-2", 0.6520761876370741),
    ("0-3", 0.51620611302976),
    ("0-3-1", 0.4649275532741641),
];

pub const CASE_STUDY_STAGES: [Stage; 3] =
    [Stage::FeatureEngineering, Stage::ModelTraining, Stage::ModelEvaluation];

pub fn case_study_space() -> SearchSpace {
    SearchSpace::from_pairs(
        CASE_STUDY_STAGES
            .iter()
            .flat_map(|&s| (0..5).map(move |i| (s, format!("{} variant {i}", s.task_type())))),
    )
    .unwrap()
}

pub fn case_study_params() -> SearchParams<f64> {
    SearchParams { searchable_stages: CASE_STUDY_STAGES.to_vec(), ..SearchParams::default() }
}

/// Resolves a label such as `0-2-1` (child indices below the root), expanding
/// nodes on the way as needed.
pub fn node_at(tree: &mut Tree, space: &SearchSpace, params: &SearchParams<f64>, label: &str) -> NodeId {
    let mut id = tree.root();
    for part in label.split('-').skip(1) {
        let children = expand(tree, id, space, params).unwrap();
        id = children[part.parse::<usize>().unwrap()];
    }
    id
}

pub fn synthetic_result(score: f64) -> SimulationResult {
    let stages = Stage::ALL
        .iter()
        .map(|&s| StageArtifact {
            stage: s,
            instruction: format!("{s}"),
            code: format!("# {}\n", s.slug()),
            stdout_excerpt: String::new(),
            status: ArtifactStatus::Ok,
        })
        .collect();
    SimulationResult::ok(score, None, MetricKind::F1, stages)
}

/// The case-study tree after recording and backpropagating all ten scores.
pub fn case_study_tree() -> (Tree, Vec<(String, NodeId)>) {
    let space = case_study_space();
    let params = case_study_params();
    let mut tree = Tree::new("case-study");
    let mut labels = Vec::new();
    for (label, score) in CASE_STUDY_SCORES {
        let id = node_at(&mut tree, &space, &params, label);
        let s = tree.record_simulation(id, &synthetic_result(score)).unwrap();
        tree.backpropagate(id, s).unwrap();
        labels.push((label.to_string(), id));
    }
    labels.push(("0-4".to_string(), node_at(&mut tree, &space, &params, "0-4")));
    (tree, labels)
}

pub fn label_id(labels: &[(String, NodeId)], label: &str) -> NodeId {
    labels.iter().find(|(l, _)| l == label).unwrap().1
}
