//! Command-line entry points: `run`, `duel` and `serve`.

mod config;

pub use config::{Backend, Catalog, CatalogEntry, ConfigError, LlmSection, Mode, RunConfig};

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{
    read_episodes, run_suite, static_duel, summarize, win_rate, write_episodes, EpisodeJob,
    MetricsSummary, WinRate,
};
use crate::prompts::TemplateRole;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation or configuration.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "nrpa-dialogue", version, about = "Dialogue-policy planning with nested rollout policy adaptation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan and play every configured scenario, then write transcripts and metrics.
    Run(Common),
    /// Judge two aligned response files against each other.
    Duel(DuelArgs),
    /// Serve the live session API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Results root; overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run seed; overrides `nrpa.rng_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub level: Option<u32>,
    #[arg(long)]
    pub iterations: Option<u32>,
    /// Name of the results subdirectory; defaults to `<config stem>-seed<seed>`.
    #[arg(long)]
    pub run_id: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct DuelArgs {
    #[command(flatten)]
    pub common: Common,
    /// JSONL of `{"context", "response"}` for side A.
    #[arg(long)]
    pub a: PathBuf,
    /// JSONL of `{"context", "response"}` for side B, aligned with A.
    #[arg(long)]
    pub b: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
}

/// Loads the config and applies command-line overrides.
pub fn load_config(common: &Common) -> Result<(RunConfig, String), CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output_dir = std::path::absolute(out).map_err(runtime)?;
    }
    if let Some(seed) = common.seed {
        cfg.nrpa.rng_seed = seed;
    }
    if let Some(level) = common.level {
        cfg.nrpa.level = level;
    }
    if let Some(n) = common.iterations {
        cfg.nrpa.iterations = n;
        cfg.nrpa.min_iterations = cfg.nrpa.min_iterations.min(n);
    }
    if let Some(id) = &common.run_id {
        cfg.run_id = Some(id.clone());
    }
    cfg.validate()?;
    let run_id = cfg.run_id.clone().unwrap_or_else(|| {
        let stem = common
            .config
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        format!("{stem}-seed{}", cfg.nrpa.rng_seed)
    });
    Ok((cfg, run_id))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn run_dir(cfg: &RunConfig, run_id: &str) -> Result<PathBuf, CliError> {
    let dir = cfg.resolve(&cfg.output_dir).join(run_id);
    std::fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: MetricsSummary,
}

/// Executes (or, in replay mode, regrades) every episode and writes
/// `config.json`, `episodes.jsonl` and `summary.json` under the run directory.
pub fn cmd_run(cfg: &RunConfig, run_id: &str) -> Result<RunOutcome, CliError> {
    let records = match cfg.mode {
        Mode::Replay => {
            let src = cfg.resolve(cfg.replay_from.as_ref().expect("validated"));
            let records = read_episodes(&src).map_err(runtime)?;
            for r in &records {
                r.check().map_err(runtime)?;
            }
            records
        }
        Mode::Scripted | Mode::Llm => {
            let catalog = cfg.catalog()?;
            let jobs: Vec<EpisodeJob<'_>> = catalog
                .entries
                .iter()
                .map(|e| EpisodeJob {
                    env: e.env.as_ref(),
                    dataset: Some(e.dataset),
                    price_targets: e.price_targets,
                })
                .collect();
            let records = run_suite(&jobs, &cfg.nrpa, cfg.nrpa.rng_seed, cfg.workers, cfg.record_wall_clock);
            if let Some(client) = &catalog.client {
                let u = client.usage();
                log::info!(
                    "LLM usage: {} requests, {} prompt + {} completion tokens, {} cache hits, {} retries",
                    u.requests, u.prompt_tokens, u.completion_tokens, u.cache_hits, u.retries
                );
            }
            records
        }
    };
    let summary = summarize(&records).map_err(runtime)?;
    let dir = run_dir(cfg, run_id)?;
    write_json(&dir.join("config.json"), cfg)?;
    write_episodes(&dir.join("episodes.jsonl"), &records).map_err(runtime)?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(RunOutcome { dir, summary })
}

/// One line of a duel input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuelItem {
    pub context: String,
    pub response: String,
}

pub fn read_duel_items(path: &Path) -> Result<Vec<DuelItem>, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!("file not found: {}", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Judges each aligned pair `duel_runs` times; A's win rate is reported.
pub fn cmd_duel(cfg: &RunConfig, run_id: &str, a: &[DuelItem], b: &[DuelItem]) -> Result<WinRate, CliError> {
    if a.len() != b.len() {
        return Err(CliError::Usage(format!(
            "misaligned duel inputs: {} responses for A, {} for B",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(CliError::Usage("no response pairs to judge".into()));
    }
    if let Some(i) = a.iter().zip(b).position(|(x, y)| x.context != y.context) {
        return Err(CliError::Usage(format!("pair {i}: A and B have different contexts")));
    }
    let dataset = cfg
        .dataset
        .ok_or_else(|| CliError::Usage("dataset: required for duels".into()))?;
    let prompts = match &cfg.prompt_set {
        Some(p) => crate::prompts::PromptSet::load(&cfg.resolve(p)).map_err(|e| CliError::Usage(e.to_string()))?,
        None => crate::prompts::PromptSet::bundled(dataset),
    };
    let template = prompts.template(TemplateRole::Judge).map_err(|e| CliError::Usage(e.to_string()))?;
    let client = cfg.client()?;
    let n = a.len() as u64;
    let samples = u64::from(cfg.judge.samples);
    let mut runs = Vec::with_capacity(cfg.duel_runs);
    for r in 0..cfg.duel_runs as u64 {
        let mut verdicts = Vec::with_capacity(a.len());
        for (j, (x, y)) in a.iter().zip(b).enumerate() {
            let seed = cfg.nrpa.rng_seed.wrapping_add((r * n + j as u64) * samples);
            let out = static_duel(template, &x.context, &x.response, &y.response, &cfg.judge, &client, seed)
                .map_err(runtime)?;
            verdicts.push(out.verdict);
        }
        runs.push(verdicts);
    }
    let report = win_rate(&runs).map_err(runtime)?;
    let dir = run_dir(cfg, run_id)?;
    write_json(&dir.join("duel.json"), &report)?;
    Ok(report)
}

pub fn cmd_serve(cfg: &RunConfig, run_id: &str, bind: &str) -> Result<(), CliError> {
    let addr: SocketAddr = bind
        .parse()
        .map_err(|e| CliError::Usage(format!("bad bind address `{bind}`: {e}")))?;
    let catalog = cfg.catalog()?;
    let dir = run_dir(cfg, run_id)?;
    let state = crate::service::AppState::new(catalog, cfg.nrpa.clone(), Some(dir.join("sessions.jsonl")));
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| runtime(format!("cannot bind {addr}: {e}")))?;
        log::info!("serving on http://{addr}");
        crate::service::serve(listener, state, crate::service::shutdown_signal())
            .await
            .map_err(runtime)
    })
}

/// Parses `args` and runs the chosen command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(common) => {
            let (cfg, run_id) = load_config(&common)?;
            let out = cmd_run(&cfg, &run_id)?;
            println!("{}", serde_json::to_string_pretty(&out.summary).map_err(runtime)?);
            println!("results: {}", out.dir.display());
            Ok(())
        }
        Command::Duel(args) => {
            let (cfg, run_id) = load_config(&args.common)?;
            let a = read_duel_items(&args.a)?;
            let b = read_duel_items(&args.b)?;
            let report = cmd_duel(&cfg, &run_id, &a, &b)?;
            println!("win rate: {report}");
            Ok(())
        }
        Command::Serve(args) => {
            let (cfg, run_id) = load_config(&args.common)?;
            cmd_serve(&cfg, &run_id, &args.bind)
        }
    }
}
