//! Episode orchestration, metrics and head-to-head judging.

mod duel;
mod metrics;
mod store;

pub use duel::{parse_choice, static_duel, tally_votes, win_rate, DuelOutcome, JudgeConfig, RunTally, Verdict, WinRate};
pub use metrics::{compute_sl, summarize, MetricsSummary};
pub use store::{read_episodes, write_episodes, EpisodeWriter};

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Dataset;
use crate::dialogue::{DialogueState, Speaker, Terminal, Utterance};
use crate::env::Environment;
use crate::nrpa::{plan_next_act, SearchStats};
use crate::params::NrpaParams;
use crate::reward::RewardSpec;
pub use crate::reward::PriceTargets;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no completed episodes to summarize ({aborted} aborted)")]
    NoEpisodes { aborted: usize },
    #[error("buyer and seller targets are both {0}")]
    EqualTargets(f64),
    #[error("no duels to score")]
    NoDuels,
    #[error("episode `{scenario}`: {problem}")]
    Inconsistent { scenario: String, problem: String },
    #[error(transparent)]
    Prompt(#[from] crate::prompts::PromptError),
    #[error(transparent)]
    Llm(#[from] crate::llm::LlmError),
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// One planned system turn and the user reply it received.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: u32,
    pub act: String,
    pub system_text: String,
    /// Absent when the dialogue ended before the user answered.
    pub user_text: Option<String>,
    pub stats: SearchStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub scenario_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<Dataset>,
    pub params: NrpaParams,
    pub reward_spec: RewardSpec,
    pub rng_seed: u64,
    /// Utterances preceding the first planned turn.
    pub opening: Vec<Utterance>,
    pub turns: Vec<TurnRecord>,
    pub terminal: Terminal,
    pub turns_used: u32,
    /// Absent for aborted episodes.
    pub reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deal_price: Option<f64>,
    #[serde(default)]
    pub deal_price_invalid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_targets: Option<PriceTargets>,
    /// Error that ended the episode early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_ms: Option<u64>,
}

impl EpisodeRecord {
    /// Builds a record from a finished (or abandoned) dialogue. `stats` holds
    /// the search statistics of each planned turn, in order.
    pub fn from_dialogue(
        state: &DialogueState,
        stats: Vec<SearchStats>,
        params: &NrpaParams,
        reward_spec: &RewardSpec,
        rng_seed: u64,
    ) -> EpisodeRecord {
        let first_planned = state
            .history
            .iter()
            .position(|u| u.act.is_some())
            .unwrap_or(state.history.len());
        let opening = state.history[..first_planned].to_vec();
        let mut turns = Vec::new();
        let mut stats = stats.into_iter();
        let mut rest = state.history[first_planned..].iter().peekable();
        while let Some(u) = rest.next() {
            let Some(act) = &u.act else { continue };
            let user_text = match rest.peek() {
                Some(next) if next.speaker == Speaker::User => rest.next().map(|n| n.text.clone()),
                _ => None,
            };
            turns.push(TurnRecord {
                turn: u.turn_index,
                act: act.clone(),
                system_text: u.text.clone(),
                user_text,
                stats: stats.next().unwrap_or_default(),
            });
        }
        let reward = reward_spec.score(state.terminal, state.turn_count).ok();
        EpisodeRecord {
            scenario_id: state.scenario_id.clone(),
            dataset: None,
            params: params.clone(),
            reward_spec: reward_spec.clone(),
            rng_seed,
            opening,
            turns_used: turns.len() as u32,
            turns,
            terminal: state.terminal,
            reward,
            deal_price: state.deal_price,
            deal_price_invalid: state.deal_price_invalid,
            price_targets: None,
            aborted: None,
            wall_clock_ms: None,
        }
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted.is_some()
    }

    /// Checks the record's internal invariants: turn count matches the
    /// per-turn entries and the stored reward matches the reward rule.
    pub fn check(&self) -> Result<(), EvalError> {
        let fail = |problem: String| EvalError::Inconsistent {
            scenario: self.scenario_id.clone(),
            problem,
        };
        if self.turns_used as usize != self.turns.len() {
            return Err(fail(format!(
                "turns_used {} but {} turn entries",
                self.turns_used,
                self.turns.len()
            )));
        }
        if self.is_aborted() {
            return Ok(());
        }
        let expected = self
            .reward_spec
            .score(self.terminal, self.turns_used)
            .map_err(|e| fail(e.to_string()))?;
        match self.reward {
            Some(r) if (r - expected).abs() <= 1e-12 => Ok(()),
            other => Err(fail(format!("stored reward {other:?}, expected {expected}"))),
        }
    }
}

/// Seed of the `index`-th episode of a run.
pub fn episode_seed(run_seed: u64, index: usize) -> u64 {
    run_seed.wrapping_add(index as u64)
}

/// Plays one dialogue to the end: plan an act, take the step, repeat until
/// the dialogue is terminal or the turn budget is spent. Environment
/// failures end the episode and mark the record aborted.
pub fn run_episode(env: &dyn Environment, params: &NrpaParams, seed: u64) -> EpisodeRecord {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = env.reward_spec();
    let mut state = env.initial_state();
    let mut stats = Vec::new();
    let mut aborted = None;
    while state.is_ongoing() {
        if state.turn_count >= spec.max_turns {
            state.terminal = Terminal::TurnBudgetExhausted;
            break;
        }
        let plan = match plan_next_act(&state, env, params, &mut rng) {
            Ok(plan) => plan,
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        };
        match env.step(&state, &plan.act, &mut rng) {
            Ok(t) => {
                state = t.state;
                stats.push(plan.stats);
            }
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        }
    }
    if let Some(reason) = &aborted {
        log::warn!("episode `{}` aborted: {reason}", state.scenario_id);
    }
    let mut record = EpisodeRecord::from_dialogue(&state, stats, params, spec, seed);
    if aborted.is_some() {
        record.reward = None;
        record.aborted = aborted;
    }
    record.wall_clock_ms = Some(started.elapsed().as_millis() as u64);
    record
}

/// One unit of work for [`run_suite`].
pub struct EpisodeJob<'a> {
    pub env: &'a dyn Environment,
    pub dataset: Option<Dataset>,
    pub price_targets: Option<PriceTargets>,
}

/// Runs every job on up to `workers` threads. Records come back in job
/// order whatever the completion order, so output files are reproducible.
pub fn run_suite(
    jobs: &[EpisodeJob<'_>],
    params: &NrpaParams,
    run_seed: u64,
    workers: usize,
    record_wall_clock: bool,
) -> Vec<EpisodeRecord> {
    use rayon::prelude::*;
    let run = || {
        jobs.par_iter()
            .enumerate()
            .map(|(i, job)| {
                let mut record = run_episode(job.env, params, episode_seed(run_seed, i));
                record.dataset = job.dataset;
                record.price_targets = job.price_targets;
                if !record_wall_clock {
                    record.wall_clock_ms = None;
                }
                record
            })
            .collect::<Vec<_>>()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(e) => {
            log::warn!("could not build a {workers}-thread pool ({e}); using the global pool");
            run()
        }
    }
}
