//! Run configuration: one JSON document naming the scenarios, the search
//! parameters and the model backend.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Dataset;
use crate::env::{Environment, LlmEnvConfig, LlmEnvironment, ScriptedScenario};
use crate::eval::JudgeConfig;
use crate::llm::{HttpTransport, LlmClient, MockSpec, MockTransport, ResponseCache, RetryPolicy, Transport};
use crate::params::NrpaParams;
use crate::prompts::{load_scenarios, PromptSet};
use crate::reward::{PriceTargets, RewardSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("file not found: {0}")]
    Missing(PathBuf),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Scripted,
    Llm,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    /// An OpenAI-compatible endpoint. The key is read from `api_key_env`.
    Http {
        base_url: String,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
    /// Offline stand-in.
    Mock { spec: MockSpec },
}

fn default_timeout() -> u64 {
    60
}

fn default_in_flight() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    pub env: LlmEnvConfig,
    pub backend: Backend,
    /// JSONL response cache; in-memory when absent.
    #[serde(default)]
    pub cache_path: Option<PathBuf>,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_workers() -> usize {
    4
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn default_duel_runs() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub dataset: Option<Dataset>,
    /// Scripted scenario files (scripted mode) or scenario lists (llm mode).
    #[serde(default)]
    pub scenarios: Vec<PathBuf>,
    /// Restricts llm-mode scenario lists to these ids.
    #[serde(default)]
    pub scenario_ids: Option<Vec<String>>,
    /// Custom prompt set replacing the bundled one.
    #[serde(default)]
    pub prompt_set: Option<PathBuf>,
    #[serde(default)]
    pub nrpa: NrpaParams,
    #[serde(default)]
    pub reward: RewardSpec,
    #[serde(default)]
    pub llm: Option<LlmSection>,
    #[serde(default)]
    pub judge: JudgeConfig,
    #[serde(default = "default_duel_runs")]
    pub duel_runs: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub run_id: Option<String>,
    #[serde(default)]
    pub record_wall_clock: bool,
    /// Stored transcripts to regrade (replay mode).
    #[serde(default)]
    pub replay_from: Option<PathBuf>,
    /// Directory the relative paths above were resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        if !path.exists() {
            return Err(ConfigError::Missing(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Checks every field that does not need the scenarios loaded.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.nrpa.validate().map_err(|e| invalid("nrpa", e))?;
        self.reward.validate().map_err(|e| invalid("reward", e))?;
        if self.workers == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        if self.duel_runs == 0 {
            return Err(invalid("duel_runs", "must be at least 1"));
        }
        if self.judge.samples == 0 {
            return Err(invalid("judge.samples", "must be at least 1"));
        }
        if !(0.0..=2.0).contains(&self.judge.temperature) {
            return Err(invalid("judge.temperature", "must be in [0, 2]"));
        }
        match self.mode {
            Mode::Scripted | Mode::Llm if self.scenarios.is_empty() => {
                return Err(invalid("scenarios", "at least one scenario file is required"))
            }
            Mode::Llm => {
                let llm = self.llm.as_ref().ok_or_else(|| invalid("llm", "required in llm mode"))?;
                llm.env.validate().map_err(|e| invalid("llm.env", e))?;
                let dataset = self.dataset.ok_or_else(|| invalid("dataset", "required in llm mode"))?;
                if llm.env.prompt_set != dataset {
                    return Err(invalid("llm.env.prompt_set", "must match dataset"));
                }
            }
            Mode::Replay if self.replay_from.is_none() => {
                return Err(invalid("replay_from", "required in replay mode"))
            }
            _ => {}
        }
        for p in &self.scenarios {
            let full = self.resolve(p);
            if !full.exists() {
                return Err(ConfigError::Missing(full));
            }
        }
        for p in self.replay_from.iter().chain(&self.prompt_set) {
            let full = self.resolve(p);
            if !full.exists() {
                return Err(ConfigError::Missing(full));
            }
        }
        Ok(())
    }

    /// Builds the LLM client described by the `llm` section.
    pub fn client(&self) -> Result<Arc<LlmClient>, ConfigError> {
        let llm = self.llm.as_ref().ok_or_else(|| invalid("llm", "section missing"))?;
        let transport: Arc<dyn Transport> = match &llm.backend {
            Backend::Http {
                base_url,
                api_key_env,
                timeout_secs,
            } => {
                let key = match api_key_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        invalid("llm.backend.api_key_env", format!("environment variable {var} is not set"))
                    })?),
                    None => None,
                };
                Arc::new(HttpTransport::new(base_url, key, Duration::from_secs(*timeout_secs)))
            }
            Backend::Mock { spec } => Arc::new(MockTransport::from_spec(spec.clone())),
        };
        let mut client = LlmClient::new(transport)
            .with_retry(llm.retry.clone())
            .with_max_in_flight(llm.max_in_flight);
        if llm.env.cache_enabled {
            let cache = match &llm.cache_path {
                Some(p) => ResponseCache::open(&self.resolve(p)).map_err(|e| invalid("llm.cache_path", e))?,
                None => ResponseCache::in_memory(),
            };
            client = client.with_cache(Arc::new(cache));
        }
        Ok(Arc::new(client))
    }

    fn prompts(&self, dataset: Dataset) -> Result<PromptSet, ConfigError> {
        match &self.prompt_set {
            Some(p) => PromptSet::load(&self.resolve(p)).map_err(|e| invalid("prompt_set", e)),
            None => Ok(PromptSet::bundled(dataset)),
        }
    }

    /// Loads every scenario of a scripted or llm config.
    pub fn catalog(&self) -> Result<Catalog, ConfigError> {
        let mut entries = Vec::new();
        let mut client = None;
        match self.mode {
            Mode::Scripted => {
                for (i, p) in self.scenarios.iter().enumerate() {
                    let path = self.resolve(p);
                    let field = format!("scenarios[{i}]");
                    let s = ScriptedScenario::load(&path)
                        .and_then(|s| s.with_reward(self.reward.clone()))
                        .map_err(|e| invalid(&field, format!("{}: {e}", path.display())))?;
                    entries.push(CatalogEntry {
                        dataset: s.action_space().dataset,
                        price_targets: s.price_targets(),
                        env: Arc::new(s),
                    });
                }
            }
            Mode::Llm => {
                let llm = self.llm.as_ref().ok_or_else(|| invalid("llm", "required in llm mode"))?;
                let dataset = self.dataset.ok_or_else(|| invalid("dataset", "required in llm mode"))?;
                let prompts = self.prompts(dataset)?;
                let shared = self.client()?;
                for (i, p) in self.scenarios.iter().enumerate() {
                    let path = self.resolve(p);
                    let field = format!("scenarios[{i}]");
                    let list = load_scenarios(&path).map_err(|e| invalid(&field, e))?;
                    let base = path.parent();
                    for sc in list {
                        if let Some(ids) = &self.scenario_ids {
                            if !ids.contains(&sc.id) {
                                continue;
                            }
                        }
                        if sc.dataset != dataset {
                            return Err(invalid(&field, format!("scenario `{}` is not {}", sc.id, dataset.as_str())));
                        }
                        let space = sc.load_action_space(base).map_err(|e| invalid(&field, e))?;
                        let price_targets = if dataset == Dataset::CraigslistBargain {
                            let (buyer, seller) = sc.target_prices().map_err(|e| invalid(&field, e))?;
                            Some(PriceTargets { seller, buyer })
                        } else {
                            None
                        };
                        let env = LlmEnvironment::new(
                            sc,
                            prompts.clone(),
                            space,
                            shared.clone(),
                            llm.env.clone(),
                            &self.reward,
                        )
                        .map_err(|e| invalid(&field, e))?;
                        entries.push(CatalogEntry {
                            dataset,
                            price_targets,
                            env: Arc::new(env),
                        });
                    }
                }
                client = Some(shared);
            }
            Mode::Replay => return Err(invalid("mode", "replay configs have no scenarios to serve")),
        }
        let mut seen = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if let Some(prev) = seen.insert(e.env.scenario_id().to_string(), i) {
                return Err(invalid(
                    "scenarios",
                    format!("scenario id `{}` appears twice (entries {prev} and {i})", e.env.scenario_id()),
                ));
            }
        }
        if entries.is_empty() {
            return Err(invalid("scenarios", "no scenarios selected"));
        }
        Ok(Catalog { entries, client })
    }
}

pub struct CatalogEntry {
    pub env: Arc<dyn Environment>,
    pub dataset: Dataset,
    pub price_targets: Option<PriceTargets>,
}

/// The scenarios of a run, in configuration order.
pub struct Catalog {
    pub entries: Vec<CatalogEntry>,
    /// Shared client of llm-mode environments, kept for usage reporting.
    pub client: Option<Arc<LlmClient>>,
}

impl Catalog {
    pub fn get(&self, scenario_id: &str) -> Option<&CatalogEntry> {
        self.entries.iter().find(|e| e.env.scenario_id() == scenario_id)
    }
}

impl std::fmt::Debug for Catalog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list()
            .entries(self.entries.iter().map(|e| e.env.scenario_id()))
            .finish()
    }
}
