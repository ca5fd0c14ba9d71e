//! Seeded synthetic scoring functions over configurations, used as a
//! deterministic stand-in for real pipeline workers.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eval::MetricKind;
use crate::executor::{
    assemble_stages, ArtifactStatus, Executor, ExecutorError, SimulationResult, StageArtifact,
    StageCache, StageInstruction,
};
use crate::insight::InsightId;
use crate::scalar::{clamp_unit, Scalar};
use crate::space::{ProblemSpec, SearchSpace};
use crate::stage::Stage;
use crate::tree::ExperimentConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction<S> {
    pub a: InsightId,
    pub b: InsightId,
    pub value: S,
}

/// `score(c) = clamp(base + Σ utility + Σ pairwise interaction + noise)`.
///
/// Unknown insight ids contribute nothing. Noise is a Gaussian draw seeded by
/// `(seed, configuration)`, so a configuration always scores the same.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLandscape<S> {
    pub per_insight_utility: BTreeMap<InsightId, S>,
    #[serde(default)]
    pub pairwise_interaction: Vec<Interaction<S>>,
    pub base: S,
    #[serde(default)]
    pub noise_sigma: S,
    #[serde(default)]
    pub seed: u64,
}

const DEV_STREAM: u8 = 0;
const TEST_STREAM: u8 = 1;

impl<S: Scalar> SyntheticLandscape<S> {
    pub fn flat(base: S) -> Self {
        SyntheticLandscape {
            per_insight_utility: BTreeMap::new(),
            pairwise_interaction: Vec::new(),
            base,
            noise_sigma: S::zero(),
            seed: 0,
        }
    }

    fn interaction(&self, a: &InsightId, b: &InsightId) -> S {
        self.pairwise_interaction
            .iter()
            .filter(|i| (&i.a == a && &i.b == b) || (&i.a == b && &i.b == a))
            .map(|i| i.value)
            .sum()
    }

    /// Score without the noise term or clamping.
    pub fn noiseless(&self, ids: &[InsightId]) -> S {
        let utilities: S = ids
            .iter()
            .map(|id| self.per_insight_utility.get(id).copied().unwrap_or_else(S::zero))
            .sum();
        let mut pairs = S::zero();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                pairs = pairs + self.interaction(a, b);
            }
        }
        self.base + utilities + pairs
    }

    fn noise(&self, ids: &[InsightId], stream: u8) -> S {
        if self.noise_sigma <= S::zero() {
            return S::zero();
        }
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update([stream]);
        for id in ids {
            h.update(id.as_str().as_bytes());
            h.update(b"/");
        }
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let normal = Normal::new(0.0, self.noise_sigma.as_f64()).expect("finite sigma");
        S::of(normal.sample(&mut ChaCha8Rng::from_seed(seed)))
    }

    pub fn dev_score(&self, ids: &[InsightId]) -> S {
        clamp_unit(self.noiseless(ids) + self.noise(ids, DEV_STREAM))
    }

    pub fn test_score(&self, ids: &[InsightId]) -> S {
        clamp_unit(self.noiseless(ids) + self.noise(ids, TEST_STREAM))
    }

    /// Every full configuration (one insight per stage) with its dev score,
    /// best first.
    pub fn enumerate(&self, space: &SearchSpace, stages: &[Stage]) -> Vec<(Vec<InsightId>, S)> {
        let mut configs: Vec<Vec<InsightId>> = vec![Vec::new()];
        for &stage in stages {
            configs = configs
                .into_iter()
                .flat_map(|c| {
                    space.stage(stage).iter().map(move |i| {
                        let mut next = c.clone();
                        next.push(i.id.clone());
                        next
                    })
                })
                .collect();
        }
        let mut scored: Vec<_> = configs.into_iter().map(|c| {
            let s = self.dev_score(&c);
            (c, s)
        }).collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite"));
        scored
    }

    /// A random landscape over `space` with one planted insight per stage that
    /// beats every alternative, plus a bonus for planted neighbours.
    ///
    /// Utilities are relative to the default step a stage runs when the
    /// configuration has no insight for it: alternatives fall on either side
    /// of zero, so partial configurations are not penalised for being partial.
    ///
    /// Returns the landscape and the planted configuration.
    pub fn planted(
        space: &SearchSpace,
        stages: &[Stage],
        seed: u64,
        noise_sigma: S,
    ) -> (Self, Vec<InsightId>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut utilities = BTreeMap::new();
        let mut optimum = Vec::new();
        for &stage in stages {
            let pool = space.stage(stage);
            if pool.is_empty() {
                continue;
            }
            let star = rng.random_range(0..pool.len());
            for (i, insight) in pool.iter().enumerate() {
                let u = if i == star { 0.08 } else { rng.random_range(-0.04..0.04) };
                utilities.insert(insight.id.clone(), S::of(u));
            }
            optimum.push(pool[star].id.clone());
        }
        let mut interactions = Vec::new();
        for w in stages.windows(2) {
            for a in space.stage(w[0]) {
                for b in space.stage(w[1]) {
                    let planted = optimum.contains(&a.id) && optimum.contains(&b.id);
                    let v = if planted { 0.04 } else { rng.random_range(-0.02..0.02) };
                    interactions.push(Interaction { a: a.id.clone(), b: b.id.clone(), value: S::of(v) });
                }
            }
        }
        let landscape = SyntheticLandscape {
            per_insight_utility: utilities,
            pairwise_interaction: interactions,
            base: S::of(0.5),
            noise_sigma,
            seed,
        };
        (landscape, optimum)
    }
}

fn synthetic_code(instr: &StageInstruction, config: &ExperimentConfig) -> String {
    let ids: Vec<&str> = config
        .insights
        .iter()
        .filter(|i| i.stage <= instr.stage)
        .map(|i| i.id.as_str())
        .collect();
    format!(
        "# stage: {}\n# instruction: {}\n# prefix: [{}]\npass\n",
        instr.stage.slug(),
        instr.instruction,
        ids.join(", ")
    )
}

/// Scores `config` and fabricates one synthetic code artifact per stage.
pub fn landscape_score<S: Scalar>(
    config: &ExperimentConfig,
    landscape: &SyntheticLandscape<S>,
) -> SimulationResult {
    let ids = config.ids();
    let stages = crate::executor::plan_instructions(config)
        .into_iter()
        .map(|instr| StageArtifact {
            code: synthetic_code(&instr, config),
            stage: instr.stage,
            instruction: instr.instruction,
            stdout_excerpt: String::new(),
            status: ArtifactStatus::Ok,
        })
        .collect();
    SimulationResult::ok(
        landscape.dev_score(&ids).as_f64(),
        Some(landscape.test_score(&ids).as_f64()),
        MetricKind::F1,
        stages,
    )
}

/// Executor backed by a [`SyntheticLandscape`], replaying cached stage code
/// like a real worker and counting how many stages it had to generate.
#[derive(Clone, Debug)]
pub struct LandscapeExecutor<S> {
    pub landscape: SyntheticLandscape<S>,
    generated: usize,
    simulations: usize,
}

impl<S: Scalar> LandscapeExecutor<S> {
    pub fn new(landscape: SyntheticLandscape<S>) -> Self {
        LandscapeExecutor { landscape, generated: 0, simulations: 0 }
    }

    /// Stage-generation calls so far.
    pub fn generated_stages(&self) -> usize {
        self.generated
    }

    pub fn simulations(&self) -> usize {
        self.simulations
    }
}

impl<S: Scalar> Executor for LandscapeExecutor<S> {
    fn simulate(
        &mut self,
        config: &ExperimentConfig,
        _problem: &ProblemSpec,
        cache: &mut StageCache,
    ) -> Result<SimulationResult, ExecutorError> {
        let generated = &mut self.generated;
        let (stages, hits) = assemble_stages(config, cache, |instr| {
            *generated += 1;
            Ok(synthetic_code(instr, config))
        })?;
        self.simulations += 1;
        let ids = config.ids();
        let mut result = SimulationResult::ok(
            self.landscape.dev_score(&ids).as_f64(),
            Some(self.landscape.test_score(&ids).as_f64()),
            MetricKind::F1,
            stages,
        );
        result.cache_hits = hits;
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::insight::Insight;

    fn cfg(insights: &[&Insight]) -> ExperimentConfig {
        ExperimentConfig::new(insights.iter().map(|&i| i.clone()).collect(), "fp").unwrap()
    }

    fn ab() -> (Insight, Insight) {
        (Insight::new(Stage::FeatureEngineering, "a"), Insight::new(Stage::ModelTraining, "b"))
    }

    #[test]
    fn empty_config_scores_base() {
        let l = SyntheticLandscape::flat(0.5_f64);
        let r = landscape_score(&cfg(&[]), &l);
        assert_eq!(r.dev_score, Some(0.5));
        assert_eq!(r.stages.len(), 5);
    }

    #[test]
    fn single_and_pair_terms() {
        let (a, b) = ab();
        let mut l = SyntheticLandscape::flat(0.5_f64);
        l.per_insight_utility.insert(a.id.clone(), 0.2);
        assert!((landscape_score(&cfg(&[&a]), &l).dev_score.unwrap() - 0.7).abs() < 1e-15);
        l.per_insight_utility.insert(b.id.clone(), 0.1);
        l.pairwise_interaction.push(Interaction { a: a.id.clone(), b: b.id.clone(), value: -0.15 });
        assert!((landscape_score(&cfg(&[&a, &b]), &l).dev_score.unwrap() - 0.65).abs() < 1e-12);
    }

    #[test]
    fn scores_clamp_to_unit_interval() {
        let (a, _) = ab();
        let mut l = SyntheticLandscape::flat(0.9_f64);
        l.per_insight_utility.insert(a.id.clone(), 0.5);
        assert_eq!(l.dev_score(std::slice::from_ref(&a.id)), 1.0);
        l.per_insight_utility.insert(a.id.clone(), -2.0);
        assert_eq!(l.dev_score(&[a.id]), 0.0);
    }

    #[test]
    fn noise_is_deterministic_and_seed_only_moves_noise() {
        let (a, b) = ab();
        let mut l = SyntheticLandscape::flat(0.5_f64);
        l.noise_sigma = 0.02;
        l.seed = 1;
        let ids = [a.id.clone(), b.id.clone()];
        assert_eq!(l.dev_score(&ids), l.dev_score(&ids));
        let mut other = l.clone();
        other.seed = 2;
        assert_ne!(l.dev_score(&ids), other.dev_score(&ids));
        assert_eq!(l.noiseless(&ids), other.noiseless(&ids));
    }

    #[test]
    fn planted_optimum_is_the_best_full_config() {
        let space = SearchSpace::from_pairs(
            [Stage::DataPreprocessing, Stage::FeatureEngineering, Stage::ModelTraining]
                .iter()
                .flat_map(|&s| (0..5).map(move |i| (s, format!("{s} option {i}")))),
        )
        .unwrap();
        let stages = [Stage::DataPreprocessing, Stage::FeatureEngineering, Stage::ModelTraining];
        for seed in 0..10 {
            let (l, optimum) = SyntheticLandscape::<f64>::planted(&space, &stages, seed, 0.0);
            let ranked = l.enumerate(&space, &stages);
            assert_eq!(ranked.len(), 125);
            assert_eq!(ranked[0].0, optimum);
        }
    }

    #[test]
    fn executor_counts_generation_and_hits() {
        let (a, b) = ab();
        let mut ex = LandscapeExecutor::new(SyntheticLandscape::flat(0.5_f64));
        let mut cache = StageCache::in_memory();
        let problem = ProblemSpec {
            name: "t".into(),
            description: String::new(),
            dataset_info: Default::default(),
            paths: None,
            target_column: "y".into(),
            metric: MetricKind::F1,
        };
        let first = ex.simulate(&cfg(&[&a, &b]), &problem, &mut cache).unwrap();
        let second = ex.simulate(&cfg(&[&a, &b]), &problem, &mut cache).unwrap();
        assert_eq!(ex.generated_stages(), 5);
        assert_eq!(second.cache_hits, 5);
        assert_eq!(first.solution_code, second.solution_code);
    }
}
