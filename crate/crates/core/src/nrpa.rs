//! Nested Rollout Policy Adaptation over a dialogue environment.
//!
//! A level-0 search is a single playout: acts are sampled from the softmax
//! of a global weight vector until the dialogue ends or the playout budget
//! runs out. A level-`n` search runs up to `iterations` level-`n-1` searches,
//! each on a private copy of the current policy, keeps the best sequence seen
//! so far (strict improvement only), and adapts the policy toward it after
//! every iteration.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionSpace, DialogueAct};
use crate::dialogue::{DialogueState, Terminal};
use crate::env::{EnvError, Environment};
use crate::params::{AdaptMode, NrpaParams, ParamsError, RootSelection};
use crate::policy::{sample_index, softmax, uniform_policy, Policy, PolicyError};
use crate::reward::RewardError;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("search must start from an ongoing dialogue, got {0:?}")]
    TerminalStart(Terminal),
    #[error("state belongs to scenario `{state}` but the environment serves `{env}`")]
    ScenarioMismatch { state: String, env: String },
    #[error("sequence contains act `{0}` which is not in the action space")]
    UnknownAct(String),
    #[error("search produced an empty best sequence")]
    EmptySequence,
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("search aborted after {} playouts: {source}", stats.playouts_executed)]
    Aborted {
        #[source]
        source: EnvError,
        stats: Box<SearchStats>,
    },
}

/// Internal failure before it is wrapped with the statistics gathered so far.
enum Failure {
    Search(SearchError),
    Env(EnvError),
}

impl<E: Into<SearchError>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Search(e.into())
    }
}

impl Failure {
    fn finish(self, stats: &SearchStats) -> SearchError {
        match self {
            Failure::Search(e) => e,
            Failure::Env(source) => SearchError::Aborted {
                source,
                stats: Box::new(stats.clone()),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct RolloutResult {
    pub score: f64,
    pub sequence: Vec<String>,
    pub final_state: DialogueState,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub level: u32,
    pub iterations: u32,
    pub playouts_executed: u64,
    /// Absent until the first playout completes.
    pub best_score: Option<f64>,
    pub best_sequence: Vec<String>,
    /// Iterations run at each level, summed over every call at that level.
    /// Index 0 is level 1.
    pub iterations_run_per_level: Vec<u64>,
    /// Whether any call at that level stopped early. Index 0 is level 1.
    pub early_stopped: Vec<bool>,
}

impl SearchStats {
    fn for_level(level: u32, iterations: u32) -> Self {
        SearchStats {
            level,
            iterations,
            iterations_run_per_level: vec![0; level as usize],
            early_stopped: vec![false; level as usize],
            ..Default::default()
        }
    }
}

fn check_start(state: &DialogueState, env: &dyn Environment) -> Result<(), SearchError> {
    if state.terminal.is_terminal() {
        return Err(SearchError::TerminalStart(state.terminal));
    }
    if state.scenario_id != env.scenario_id() {
        return Err(SearchError::ScenarioMismatch {
            state: state.scenario_id.clone(),
            env: env.scenario_id().to_string(),
        });
    }
    Ok(())
}

fn run_playout(
    state: &DialogueState,
    policy: &Policy,
    env: &dyn Environment,
    params: &NrpaParams,
    rng: &mut dyn RngCore,
    stats: &mut SearchStats,
) -> Result<RolloutResult, Failure> {
    let space = env.action_space();
    policy.check_space(space)?;
    let mut current = state.clone();
    let mut sequence = Vec::new();
    while current.is_ongoing() && sequence.len() < params.max_playout_steps as usize {
        let act = space.act_at(sample_index(policy, rng)?);
        current = env.step(&current, act, rng).map_err(Failure::Env)?.state;
        sequence.push(act.id.clone());
    }
    if current.is_ongoing() {
        current.terminal = Terminal::TurnBudgetExhausted;
    }
    let score = env.reward_spec().evaluate(&current)?;
    stats.playouts_executed += 1;
    if stats.best_score.is_none_or(|b| score > b) {
        stats.best_score = Some(score);
    }
    Ok(RolloutResult {
        score,
        sequence,
        final_state: current,
    })
}

/// Samples one complete simulated dialogue from `state` under `policy`.
pub fn playout(
    state: &DialogueState,
    policy: &Policy,
    env: &dyn Environment,
    params: &NrpaParams,
    rng: &mut dyn RngCore,
) -> Result<RolloutResult, SearchError> {
    check_start(state, env)?;
    let mut stats = SearchStats::for_level(0, params.iterations);
    run_playout(state, policy, env, params, rng, &mut stats).map_err(|f| f.finish(&stats))
}

/// Moves probability mass toward every act of `sequence`: each step subtracts
/// `alpha * P(a')` from every act and adds `alpha` to the chosen one. Weights
/// are clamped to `[-WEIGHT_LIMIT, WEIGHT_LIMIT]` afterwards.
///
/// With [`AdaptMode::FrozenReference`] the probabilities come from `policy`
/// throughout; with [`AdaptMode::Progressive`] they are recomputed from the
/// partially adapted weights before each step.
pub fn adapt(
    policy: &Policy,
    sequence: &[String],
    alpha: f64,
    space: &ActionSpace,
    mode: AdaptMode,
) -> Result<Policy, SearchError> {
    policy.check_space(space)?;
    let indices = sequence
        .iter()
        .map(|id| space.index_of(id).ok_or_else(|| SearchError::UnknownAct(id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let reference = softmax(policy.weights())?;
    let mut adapted = policy.clone();
    for &chosen in &indices {
        let probs = match mode {
            AdaptMode::FrozenReference => reference.clone(),
            AdaptMode::Progressive => softmax(adapted.weights())?,
        };
        let weights = adapted.weights_mut();
        for (w, p) in weights.iter_mut().zip(&probs) {
            *w -= alpha * p;
        }
        weights[chosen] += alpha;
    }
    adapted.clamp();
    Ok(adapted)
}

fn search_level(
    level: u32,
    policy: &mut Policy,
    state: &DialogueState,
    env: &dyn Environment,
    params: &NrpaParams,
    rng: &mut dyn RngCore,
    stats: &mut SearchStats,
) -> Result<RolloutResult, Failure> {
    if level == 0 {
        return run_playout(state, policy, env, params, rng, stats);
    }
    let slot = level as usize - 1;
    let mut best: Option<RolloutResult> = None;
    let mut stagnant = 0u32;
    for iteration in 1..=params.iterations {
        let mut child = policy.clone();
        let result = search_level(level - 1, &mut child, state, env, params, rng, stats)?;
        let improved = best.as_ref().is_none_or(|b| result.score > b.score);
        if improved {
            best = Some(result);
        }
        let incumbent = best.as_ref().expect("set on first iteration");
        *policy = adapt(
            policy,
            &incumbent.sequence,
            params.alpha,
            env.action_space(),
            params.adapt_mode,
        )?;
        stats.iterations_run_per_level[slot] += 1;

        if iteration < params.min_iterations {
            continue;
        }
        if iteration > params.min_iterations {
            stagnant = if improved { 0 } else { stagnant + 1 };
        }
        let solved = incumbent.final_state.terminal == Terminal::Solved;
        if (params.stop_on_solved && solved)
            || (params.stop_on_stagnation && stagnant >= params.early_stopping)
        {
            if iteration < params.iterations {
                stats.early_stopped[slot] = true;
            }
            break;
        }
    }
    Ok(best.expect("iterations >= 1"))
}

/// Runs a level-`level` search from `state`, adapting `policy` in place.
/// Returns the best rollout together with the search statistics.
pub fn nrpa(
    level: u32,
    policy: &mut Policy,
    state: &DialogueState,
    env: &dyn Environment,
    params: &NrpaParams,
    rng: &mut dyn RngCore,
) -> Result<(RolloutResult, SearchStats), SearchError> {
    check_start(state, env)?;
    if level > 0 {
        params.validate()?;
    }
    let mut stats = SearchStats::for_level(level, params.iterations);
    let result = search_level(level, policy, state, env, params, rng, &mut stats)
        .map_err(|f| f.finish(&stats))?;
    stats.best_score = Some(result.score);
    stats.best_sequence = result.sequence.clone();
    Ok((result, stats))
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub act: DialogueAct,
    pub stats: SearchStats,
    pub best: RolloutResult,
}

/// Plans the next system act for a live dialogue: a fresh uniform policy,
/// a full nested search from `state`, and the root act chosen according to
/// `params.root_selection`.
pub fn plan_next_act(
    state: &DialogueState,
    env: &dyn Environment,
    params: &NrpaParams,
    rng: &mut dyn RngCore,
) -> Result<Plan, SearchError> {
    params.validate()?;
    let mut policy = uniform_policy(env.action_space());
    let (best, stats) = nrpa(params.level, &mut policy, state, env, params, rng)?;
    let space = env.action_space();
    let act = match params.root_selection {
        RootSelection::BestSequenceHead => {
            let head = best.sequence.first().ok_or(SearchError::EmptySequence)?;
            space
                .get(head)
                .ok_or_else(|| SearchError::UnknownAct(head.clone()))?
                .clone()
        }
        RootSelection::PolicyArgmax => space.act_at(policy.argmax()).clone(),
    };
    Ok(Plan { act, stats, best })
}
