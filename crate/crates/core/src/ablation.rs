//! MCTS against uniform random configuration sampling on seeded synthetic
//! landscapes with equal simulation budgets.

use std::io;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eval::MetricKind;
use crate::executor::{LandscapeExecutor, StageCache, SyntheticLandscape};
use crate::insight::InsightId;
use crate::mcts::{Search, SearchError, SearchParams};
use crate::scalar::Scalar;
use crate::space::{ProblemSpec, SearchSpace};
use crate::stage::Stage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", default)]
pub struct AblationConfig<S> {
    pub trials: usize,
    pub insights_per_stage: usize,
    pub noise_sigma: S,
    /// Search parameters shared by every trial; `rng_seed` is the base seed
    /// from which trial seeds are derived.
    pub params: SearchParams<S>,
}

impl<S: Scalar> Default for AblationConfig<S> {
    fn default() -> Self {
        AblationConfig {
            trials: 20,
            insights_per_stage: 5,
            noise_sigma: S::of(0.02),
            params: SearchParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TrialResult<S> {
    pub seed: u64,
    pub mcts_best: S,
    pub random_best: S,
    /// Dev score of the best full configuration, by enumeration.
    pub optimum: S,
    pub mcts_curve: Vec<S>,
    pub random_curve: Vec<S>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct AblationReport<S> {
    pub k_rollouts: usize,
    pub trials: Vec<TrialResult<S>>,
    pub mean_mcts: S,
    pub mean_random: S,
    /// Mean of `mcts_best - random_best`.
    pub mean_difference: S,
    pub mcts_strict_wins: usize,
}

/// A space with `per_stage` placeholder insights for each stage.
pub fn synthetic_space(stages: &[Stage], per_stage: usize) -> SearchSpace {
    SearchSpace::from_pairs(
        stages
            .iter()
            .flat_map(|&s| (0..per_stage).map(move |i| (s, format!("{} option {i}", s.task_type())))),
    )
    .expect("at least one stage with one insight")
}

/// A placeholder problem for synthetic runs.
pub fn synthetic_problem(name: &str) -> ProblemSpec {
    ProblemSpec {
        name: name.to_string(),
        description: format!("synthetic landscape {name}"),
        dataset_info: Default::default(),
        paths: None,
        target_column: "target".into(),
        metric: MetricKind::F1,
    }
}

/// Best-so-far curve of `k` full configurations drawn uniformly without
/// replacement (with replacement once every configuration has been drawn).
pub fn random_search<S: Scalar>(
    landscape: &SyntheticLandscape<S>,
    space: &SearchSpace,
    stages: &[Stage],
    k: usize,
    seed: u64,
) -> Vec<S> {
    let mut configs: Vec<Vec<InsightId>> = landscape.enumerate(space, stages).into_iter().map(|(c, _)| c).collect();
    configs.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curve = Vec::with_capacity(k);
    let mut best = S::neg_infinity();
    let mut remaining = k;
    while remaining > 0 {
        let take = remaining.min(configs.len());
        for i in index::sample(&mut rng, configs.len(), take) {
            best = best.max(landscape.dev_score(&configs[i]));
            curve.push(best);
        }
        remaining -= take;
    }
    curve
}

/// Runs MCTS on a planted landscape and returns its best-so-far curve and the
/// landscape.
pub fn mcts_trial<S: Scalar>(
    space: &SearchSpace,
    params: &SearchParams<S>,
    noise_sigma: S,
    landscape_seed: u64,
) -> Result<(Vec<S>, SyntheticLandscape<S>), SearchError> {
    let (landscape, _) = SyntheticLandscape::planted(space, &params.searchable_stages, landscape_seed, noise_sigma);
    let problem = synthetic_problem(&format!("landscape-{landscape_seed}"));
    let mut executor = LandscapeExecutor::new(landscape.clone());
    let mut cache = StageCache::in_memory();
    let mut search = Search::new(&problem.fingerprint(), params.clone(), io::sink())?;
    search.run(space, &problem, &mut executor, &mut cache)?;
    let curve = search
        .outcome()?
        .rollouts
        .iter()
        .map(|p| p.best_so_far.unwrap_or_else(S::zero))
        .collect();
    Ok((curve, landscape))
}

const LANDSCAPE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const RANDOM_SALT: u64 = 0x5eed;

/// Seed of the landscape for a trial. Distinct from the search seed: both
/// feed ChaCha8, and equal seeds would make the first rollout's child draw
/// coincide with the planted insight's index.
pub fn landscape_seed(trial_seed: u64) -> u64 {
    trial_seed ^ LANDSCAPE_SALT
}

/// Trial seeds derived from a base seed.
pub fn trial_seeds(base: u64, trials: usize) -> Vec<u64> {
    (0..trials as u64).map(|t| base.wrapping_mul(1_000_003).wrapping_add(t)).collect()
}

pub fn run_ablation<S: Scalar>(config: &AblationConfig<S>) -> Result<AblationReport<S>, SearchError> {
    config.params.validate()?;
    if config.trials == 0 || config.insights_per_stage == 0 {
        return Err(SearchError::InvalidParams("trials and insights_per_stage must be positive".into()));
    }
    let stages = &config.params.searchable_stages;
    let space = synthetic_space(stages, config.insights_per_stage);
    let k = config.params.k_rollouts;
    let mut trials = Vec::with_capacity(config.trials);
    for seed in trial_seeds(config.params.rng_seed, config.trials) {
        let params = SearchParams { rng_seed: seed, ..config.params.clone() };
        let (mcts_curve, landscape) = mcts_trial(&space, &params, config.noise_sigma, landscape_seed(seed))?;
        let random_curve = random_search(&landscape, &space, stages, k, seed ^ RANDOM_SALT);
        let optimum = landscape.enumerate(&space, stages)[0].1;
        trials.push(TrialResult {
            seed,
            mcts_best: *mcts_curve.last().expect("k >= 1"),
            random_best: *random_curve.last().expect("k >= 1"),
            optimum,
            mcts_curve,
            random_curve,
        });
    }
    let n = S::of_count(trials.len() as u64);
    let mean_mcts = trials.iter().map(|t| t.mcts_best).sum::<S>() / n;
    let mean_random = trials.iter().map(|t| t.random_best).sum::<S>() / n;
    let mean_difference = trials.iter().map(|t| t.mcts_best - t.random_best).sum::<S>() / n;
    let mcts_strict_wins = trials.iter().filter(|t| t.mcts_best > t.random_best).count();
    Ok(AblationReport { k_rollouts: k, trials, mean_mcts, mean_random, mean_difference, mcts_strict_wins })
}
