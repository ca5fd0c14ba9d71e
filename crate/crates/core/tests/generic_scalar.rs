//! The numeric core instantiated at `f32`.

mod common;

use std::io;

use stagewise::ablation::{synthetic_problem, synthetic_space};
use stagewise::eval::{compute_ranks, normalized_score, MetricKind, ScoreEntry, ScoreTable};
use stagewise::executor::{LandscapeExecutor, StageCache, SyntheticLandscape};
use stagewise::mcts::{run_search, uct_dp, SearchParams};
use stagewise::tree::ExperimentTree;

#[test]
fn case_study_in_single_precision() {
    let space = common::case_study_space();
    let p64 = common::case_study_params();
    let params = SearchParams::<f32> { searchable_stages: p64.searchable_stages.clone(), ..SearchParams::default() };
    let mut tree = ExperimentTree::<f32>::new("f32");
    let mut root_sum = 0.0f64;
    for (label, score) in common::CASE_STUDY_SCORES {
        let mut id = tree.root();
        for part in label.split('-').skip(1) {
            id = stagewise::mcts::expand(&mut tree, id, &space, &params).unwrap()[part.parse::<usize>().unwrap()];
        }
        let s = tree.record_simulation(id, &common::synthetic_result(score)).unwrap();
        tree.backpropagate(id, s).unwrap();
        root_sum += score;
    }
    let mean = tree.subtree_mean(tree.root()).unwrap();
    assert!((f64::from(mean) - root_sum / 10.0).abs() < 1e-6);
}

#[test]
fn formulas_in_single_precision() {
    let p = SearchParams::<f32>::default();
    assert!((uct_dp(0.0f32, 0, 10, &p).unwrap() - 2.37514).abs() < 1e-4);
    let ns: f32 = normalized_score(std::f32::consts::E - 1.0, MetricKind::Rmse).unwrap();
    assert!((ns - 0.5).abs() < 1e-6);
    let entries = vec![
        ScoreEntry { method: "a".into(), dataset: "d".into(), run: 0, metric: MetricKind::F1, raw_score: 0.7f32 },
        ScoreEntry { method: "b".into(), dataset: "d".into(), run: 0, metric: MetricKind::F1, raw_score: 0.6f32 },
    ];
    let report = compute_ranks(&ScoreTable::new(entries).unwrap(), Some("a")).unwrap();
    assert_eq!(report.methods[1].avg_rank, 2.0f32);
}

#[test]
fn search_in_single_precision() {
    let params = SearchParams::<f32> { k_rollouts: 8, ..SearchParams::default() };
    let space = synthetic_space(&params.searchable_stages, 3);
    let (landscape, _) = SyntheticLandscape::<f32>::planted(&space, &params.searchable_stages, 4, 0.02);
    let mut ex = LandscapeExecutor::new(landscape);
    let (outcome, _) =
        run_search(&synthetic_problem("f32"), &space, &mut ex, &mut StageCache::in_memory(), params, io::sink()).unwrap();
    assert_eq!(outcome.rollouts.len(), 8);
    assert!(outcome.dev_score > 0.0f32);
}
