//! The run configuration document.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stagewise::space::LlmEndpointConfig;
use stagewise::{Params, ProblemSpec};

use crate::CliError;

fn default_m() -> usize {
    5
}

fn default_timeout() -> u64 {
    600
}

fn default_sigma() -> f64 {
    0.02
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InsightSource {
    Llm {
        /// Minimum insights requested per stage.
        #[serde(default = "default_m")]
        insights_per_stage: usize,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedLandscape {
    pub seed: u64,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExecutorConfig {
    /// Exactly one of `path` (a landscape JSON file) or `planted`.
    Landscape {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        planted: Option<PlantedLandscape>,
    },
    /// Exactly one of `command` (program and arguments) or `url`.
    External {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        command: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        url: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm: Option<LlmEndpointConfig>,
    pub executor: ExecutorConfig,
    #[serde(default)]
    pub search: Params,
    pub insight_source: InsightSource,
    pub output_dir: PathBuf,
    pub cache_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = RunConfig::parse(&text)?;
        config.resolve(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: &str| Err(CliError::Usage(m.to_string()));
        self.search.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        match &self.insight_source {
            InsightSource::Llm { insights_per_stage } => {
                let Some(llm) = &self.llm else {
                    return usage("insight_source kind llm requires an llm section");
                };
                llm.validate().map_err(CliError::Usage)?;
                if *insights_per_stage == 0 {
                    return usage("insights_per_stage must be at least 1");
                }
            }
            InsightSource::File { .. } => {}
        }
        match &self.executor {
            ExecutorConfig::Landscape { path, planted } if path.is_some() == planted.is_some() => {
                usage("landscape executor needs exactly one of path or planted")
            }
            ExecutorConfig::External { command, url, .. } if command.is_empty() == url.is_none() => {
                usage("external executor needs exactly one of command or url")
            }
            _ => Ok(()),
        }
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.cache_dir);
        if let InsightSource::File { path } = &mut self.insight_source {
            fix(path);
        }
        if let ExecutorConfig::Landscape { path: Some(path), .. } = &mut self.executor {
            fix(path);
        }
        if let Some(paths) = &mut self.problem.paths {
            for p in [&mut paths.train, &mut paths.dev, &mut paths.test, &mut paths.data_info] {
                fix(p);
            }
        }
    }
}
