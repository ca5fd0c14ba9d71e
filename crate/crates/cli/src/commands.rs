//! One function per subcommand. Each returns a short human-readable summary
//! or a [`CliError`] carrying the exit code.

use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::{Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::time::Duration;

use stagewise::ablation::{run_ablation, AblationConfig};
use stagewise::eval::{compute_ranks, rescaled_table, EvalError, ScoreTable};
use stagewise::executor::external::{ExternalExecutor, HttpTransport, StdioTransport};
use stagewise::executor::{Executor, LandscapeExecutor, StageCache, SyntheticLandscape};
use stagewise::mcts::{complete_prefix, Search, SearchError};
use stagewise::space::{load_static_insights, propose_insights, HttpChatClient, SpaceError};
use stagewise::tree::journal::{check_fingerprint, read_journal, JournalError};
use stagewise::{Landscape, SearchSpace};

use crate::config::{ExecutorConfig, InsightSource, RunConfig};
use crate::CliError;

pub const SEARCH_SPACE_FILE: &str = "search_space.json";
pub const TRANSCRIPT_FILE: &str = "transcript.json";
pub const JOURNAL_FILE: &str = "journal.ndjson";
pub const OUTCOME_FILE: &str = "outcome.json";
pub const SOLUTION_FILE: &str = "best_solution.py";
pub const ROLLOUTS_FILE: &str = "rollouts.csv";
pub const ABLATION_FILE: &str = "ablation.json";
const LOCK_FILE: &str = ".lock";

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rollouts: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) -> Result<(), CliError> {
        if let Some(seed) = self.seed {
            config.search.rng_seed = seed;
        }
        if let Some(k) = self.rollouts {
            config.search.k_rollouts = k;
        }
        if let Some(dir) = &self.output_dir {
            config.output_dir = dir.clone();
        }
        config.validate()
    }
}

fn env(context: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> CliError {
    move |e| CliError::Environment(format!("{context}: {e}"))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(env(format!("cannot write {}", path.display())))
}

fn write_csv<R: IntoIterator<Item = Vec<String>>>(path: &Path, header: &[&str], rows: R) -> Result<(), CliError> {
    let failed = |e: csv::Error| CliError::Environment(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(failed)?;
    w.write_record(header).map_err(failed)?;
    for row in rows {
        w.write_record(&row).map_err(failed)?;
    }
    w.flush().map_err(env(format!("cannot write {}", path.display())))
}

/// Exclusive hold on a run directory for the lifetime of a command.
pub struct RunDir {
    pub path: PathBuf,
    _lock: File,
}

pub fn lock_run_dir(path: &Path) -> Result<RunDir, CliError> {
    fs::create_dir_all(path).map_err(env(format!("cannot create {}", path.display())))?;
    let lock_path = path.join(LOCK_FILE);
    let lock = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&lock_path)
        .map_err(env(format!("cannot open {}", lock_path.display())))?;
    match lock.try_lock() {
        Ok(()) => Ok(RunDir { path: path.to_path_buf(), _lock: lock }),
        Err(TryLockError::WouldBlock) => Err(CliError::Environment(format!(
            "{} is in use by another command",
            path.display()
        ))),
        Err(TryLockError::Error(e)) => Err(env(format!("cannot lock {}", lock_path.display()))(e)),
    }
}

fn space_error(e: SpaceError) -> CliError {
    match e {
        SpaceError::Io { .. } | SpaceError::EndpointError(_) | SpaceError::MissingPath(_) => {
            CliError::Environment(e.to_string())
        }
        SpaceError::MalformedResponse(_) => CliError::Execution(e.to_string()),
    }
}

fn search_error(e: SearchError) -> CliError {
    match e {
        SearchError::InvalidParams(_) | SearchError::EmptyPool(_) => CliError::Usage(e.to_string()),
        SearchError::Journal(_) => CliError::Environment(e.to_string()),
        SearchError::NoSolution | SearchError::TerminalNode(_) | SearchError::Tree(_) => {
            CliError::Execution(e.to_string())
        }
    }
}

fn stage_counts(space: &SearchSpace) -> String {
    space.stages().map(|s| format!("{}: {}", s.task_type(), space.stage(s).len())).collect::<Vec<_>>().join(", ")
}

/// Produces the search space for `config` and writes it into the run directory.
///
/// With `reuse`, an LLM-sourced space already present in the run directory is
/// loaded instead of proposing a new one.
fn obtain_space(config: &RunConfig, dir: &Path, reuse: bool) -> Result<SearchSpace, CliError> {
    let saved = dir.join(SEARCH_SPACE_FILE);
    let space = match &config.insight_source {
        InsightSource::File { path } => load_static_insights(path).map_err(|e| match e {
            SpaceError::MalformedResponse(m) => CliError::Usage(format!("{}: {m}", path.display())),
            other => space_error(other),
        })?,
        InsightSource::Llm { .. } if reuse && saved.exists() => {
            load_static_insights(&saved).map_err(space_error)?
        }
        InsightSource::Llm { insights_per_stage } => {
            let llm = config.llm.clone().expect("validated: llm source has llm config");
            let retries = llm.max_retries;
            let client = HttpChatClient::new(llm);
            let result = propose_insights(&config.problem, &client, *insights_per_stage, retries);
            let (space, transcript) = match result {
                Ok(p) => (Ok(p.space), p.transcript),
                Err((e, transcript)) => (Err(e), transcript),
            };
            let transcript = serde_json::to_string_pretty(&transcript).expect("transcript serializes");
            write_file(&dir.join(TRANSCRIPT_FILE), transcript + "\n")?;
            space.map_err(space_error)?
        }
    };
    write_file(&saved, space.to_json_pretty() + "\n")?;
    Ok(space)
}

fn build_executor(config: &RunConfig, space: &SearchSpace, dir: &Path) -> Result<Box<dyn Executor>, CliError> {
    Ok(match &config.executor {
        ExecutorConfig::Landscape { path: Some(path), .. } => {
            let text = fs::read_to_string(path).map_err(env(format!("cannot read {}", path.display())))?;
            let landscape: Landscape = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("invalid landscape {}: {e}", path.display())))?;
            Box::new(LandscapeExecutor::new(landscape))
        }
        ExecutorConfig::Landscape { planted, .. } => {
            let planted = planted.as_ref().expect("validated: one landscape source");
            let stages = &config.search.searchable_stages;
            let (landscape, _) = SyntheticLandscape::planted(space, stages, planted.seed, planted.noise_sigma);
            Box::new(LandscapeExecutor::new(landscape))
        }
        ExecutorConfig::External { command, url, timeout_secs } => {
            let timeout = Duration::from_secs(*timeout_secs);
            let worker_dir = dir.join("worker");
            fs::create_dir_all(&worker_dir).map_err(env("cannot create worker directory"))?;
            let out = worker_dir.display().to_string();
            let seed = config.search.rng_seed;
            match url {
                Some(url) => Box::new(ExternalExecutor::new(HttpTransport::new(url), timeout, out, seed)),
                None => {
                    let transport = StdioTransport::new(command[0].clone(), command[1..].to_vec());
                    Box::new(ExternalExecutor::new(transport, timeout, out, seed))
                }
            }
        }
    })
}

fn open_cache(config: &RunConfig) -> Result<StageCache, CliError> {
    StageCache::open(&config.cache_dir).map_err(|e| CliError::Environment(format!("stage cache: {e}")))
}

/// Writes outcome, best solution and rollout CSV; returns the summary line.
fn write_outputs(dir: &Path, search: &Search<f64, File>) -> Result<String, CliError> {
    let outcome = search.outcome().map_err(search_error)?;
    let tree = search.tree();
    write_file(&dir.join(OUTCOME_FILE), serde_json::to_string_pretty(&outcome).expect("outcome serializes") + "\n")?;
    write_file(&dir.join(SOLUTION_FILE), &outcome.solution_code)?;
    let rows = outcome.rollouts.iter().map(|p| {
        let node = tree.node(p.node).expect("rollout nodes are in the tree");
        vec![
            p.index.to_string(),
            p.node.to_string(),
            node.depth.to_string(),
            p.score.to_string(),
            p.best_so_far.map(|b| b.to_string()).unwrap_or_default(),
            node.failed().to_string(),
        ]
    });
    write_csv(&dir.join(ROLLOUTS_FILE), &["index", "node", "depth", "score", "best_so_far", "failed"], rows)?;
    Ok(format!(
        "{} rollouts; best node {} dev score {:.6}{}",
        outcome.rollouts.len(),
        outcome.best_node,
        outcome.dev_score,
        outcome.test_score.map(|t| format!(" test score {t:.6}")).unwrap_or_default()
    ))
}

fn run_rollouts(
    config: &RunConfig,
    search: &mut Search<f64, File>,
    space: &SearchSpace,
    dir: &Path,
) -> Result<(), CliError> {
    let mut executor = build_executor(config, space, dir)?;
    let mut cache = open_cache(config)?;
    let records = search.run(space, &config.problem, &mut executor, &mut cache).map_err(search_error)?;
    for r in records {
        let status = r.error.as_deref().map(|e| format!(" failed: {e}")).unwrap_or_default();
        eprintln!(
            "rollout {}: node {} score {:.6} in {:.2}s{status}",
            r.index,
            r.simulated_node,
            r.score,
            r.duration.as_secs_f64()
        );
    }
    Ok(())
}

pub fn propose(mut config: RunConfig, overrides: &Overrides) -> Result<String, CliError> {
    overrides.apply(&mut config)?;
    let run = lock_run_dir(&config.output_dir)?;
    let space = obtain_space(&config, &run.path, false)?;
    Ok(format!("{} insights ({})", space.total(), stage_counts(&space)))
}

pub fn search(mut config: RunConfig, overrides: &Overrides) -> Result<String, CliError> {
    overrides.apply(&mut config)?;
    let run = lock_run_dir(&config.output_dir)?;
    config.problem.check_paths().map_err(space_error)?;
    let space = obtain_space(&config, &run.path, true)?;
    let journal_path = run.path.join(JOURNAL_FILE);
    let journal = File::create(&journal_path).map_err(env(format!("cannot create {}", journal_path.display())))?;
    let mut search =
        Search::new(&config.problem.fingerprint(), config.search.clone(), journal).map_err(search_error)?;
    run_rollouts(&config, &mut search, &space, &run.path)?;
    write_outputs(&run.path, &search)
}

pub fn resume(mut config: RunConfig, overrides: &Overrides, journal: Option<&Path>) -> Result<String, CliError> {
    overrides.apply(&mut config)?;
    let run = lock_run_dir(&config.output_dir)?;
    let journal_path = journal.map_or_else(|| run.path.join(JOURNAL_FILE), Path::to_path_buf);
    let bytes = fs::read(&journal_path).map_err(env(format!("cannot read {}", journal_path.display())))?;
    let journal_error = |e: JournalError| CliError::Environment(format!("{}: {e}", journal_path.display()));
    let records = read_journal(&bytes).map_err(journal_error)?;
    check_fingerprint(&records, &config.problem.fingerprint()).map_err(journal_error)?;

    let keep = complete_prefix(&records);
    let keep_bytes: usize = bytes.split_inclusive(|&b| b == b'\n').take(keep).map(<[u8]>::len).sum();
    let mut file = OpenOptions::new()
        .write(true)
        .open(&journal_path)
        .map_err(env(format!("cannot open {}", journal_path.display())))?;
    file.set_len(keep_bytes as u64).map_err(env("cannot truncate journal"))?;
    file.seek(SeekFrom::End(0)).map_err(env("cannot seek journal"))?;
    if keep < records.len() {
        eprintln!("dropped {} records of an interrupted rollout", records.len() - keep);
    }

    let saved = run.path.join(SEARCH_SPACE_FILE);
    let space = if saved.exists() {
        load_static_insights(&saved).map_err(space_error)?
    } else {
        obtain_space(&config, &run.path, true)?
    };
    let mut search =
        Search::resume(&records[..keep], &space, config.search.clone(), file).map_err(search_error)?;
    config.search.rng_seed = search.params().rng_seed;
    let before = search.completed();
    run_rollouts(&config, &mut search, &space, &run.path)?;
    let summary = write_outputs(&run.path, &search)?;
    Ok(format!("resumed after {before} rollouts; {summary}"))
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::Csv(_) => CliError::Environment(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    }
}

pub fn report(scores: &Path, reference: Option<&str>, output_dir: &Path) -> Result<String, CliError> {
    let file = File::open(scores).map_err(env(format!("cannot read {}", scores.display())))?;
    let table = ScoreTable::<f64>::from_csv(file).map_err(eval_error)?;
    let report = compute_ranks(&table, reference).map_err(eval_error)?;
    fs::create_dir_all(output_dir).map_err(env(format!("cannot create {}", output_dir.display())))?;
    write_file(&output_dir.join("report.json"), serde_json::to_string_pretty(&report).expect("report serializes") + "\n")?;
    let text = report.to_text_table();
    write_file(&output_dir.join("report.txt"), &text)?;

    let rows = table.entries().iter().map(|e| {
        let ranked = report
            .runs
            .iter()
            .find(|r| r.method == e.method && r.dataset == e.dataset && r.run == e.run)
            .expect("every entry is ranked");
        vec![
            e.method.clone(),
            e.dataset.clone(),
            e.run.to_string(),
            e.metric.name().to_string(),
            e.raw_score.to_string(),
            ranked.ns.to_string(),
            ranked.rank.to_string(),
        ]
    });
    let header = ["method", "dataset", "run", "metric", "raw_score", "ns", "rank"];
    write_csv(&output_dir.join("scores_ns.csv"), &header, rows)?;

    if let Some(reference) = reference {
        let rows = rescaled_table(&table, reference).map_err(eval_error)?;
        let rows = rows.into_iter().map(|r| {
            vec![r.method, r.dataset, r.ns.to_string(), r.reference_ns.to_string(), r.rescaled_ns.to_string()]
        });
        let header = ["method", "dataset", "ns", "reference_ns", "rescaled_ns"];
        write_csv(&output_dir.join("rescaled_ns.csv"), &header, rows)?;
    }
    Ok(text)
}

pub fn ablation(mut config: RunConfig, overrides: &Overrides, trials: usize) -> Result<String, CliError> {
    overrides.apply(&mut config)?;
    let noise_sigma = match &config.executor {
        ExecutorConfig::Landscape { planted: Some(p), .. } => p.noise_sigma,
        ExecutorConfig::Landscape { .. } => AblationConfig::<f64>::default().noise_sigma,
        ExecutorConfig::External { .. } => {
            return Err(CliError::Usage("ablation requires a landscape executor".into()));
        }
    };
    let insights_per_stage = match config.insight_source {
        InsightSource::Llm { insights_per_stage } => insights_per_stage,
        InsightSource::File { .. } => AblationConfig::<f64>::default().insights_per_stage,
    };
    let run = lock_run_dir(&config.output_dir)?;
    let ablation = AblationConfig { trials, insights_per_stage, noise_sigma, params: config.search.clone() };
    let report = run_ablation(&ablation).map_err(search_error)?;
    write_file(&run.path.join(ABLATION_FILE), serde_json::to_string_pretty(&report).expect("report serializes") + "\n")?;
    Ok(format!(
        "{} trials, k={}: MCTS mean best {:.4}, random mean best {:.4}, mean difference {:+.4}, MCTS strict wins {}/{}",
        report.trials.len(),
        report.k_rollouts,
        report.mean_mcts,
        report.mean_random,
        report.mean_difference,
        report.mcts_strict_wins,
        report.trials.len()
    ))
}

pub fn cache_list(config: &RunConfig) -> Result<String, CliError> {
    let cache = open_cache(config)?;
    let summary = cache.summary();
    if summary.is_empty() {
        return Ok(format!("{}: empty", config.cache_dir.display()));
    }
    let mut out = format!("{}: {} entries\n", config.cache_dir.display(), cache.len());
    for (fingerprint, n) in summary {
        out.push_str(&format!("  {fingerprint}  {n}\n"));
    }
    Ok(out.trim_end().to_string())
}

pub fn cache_clear(config: &RunConfig) -> Result<String, CliError> {
    let mut cache = open_cache(config)?;
    let n = cache.clear().map_err(|e| CliError::Environment(e.to_string()))?;
    Ok(format!("removed {n} cache entries from {}", config.cache_dir.display()))
}
