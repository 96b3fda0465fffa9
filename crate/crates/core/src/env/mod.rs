//! Dialogue transition models.
//!
//! An [`Environment`] advances a [`DialogueState`] by one planned system turn
//! and the user's reply to it. States are plain values: `step` never mutates
//! its input, so any number of playouts can branch from the same live state.

mod critic;
mod llm;
mod scripted;

pub use critic::{extract_deal_price, parse_verdict, CriticVerdict};
pub use llm::{LlmEnvConfig, LlmEnvironment};
pub use scripted::{ScriptedScenario, ScriptedScenarioError};

use rand::RngCore;
use thiserror::Error;

use crate::action::{ActionSpace, DialogueAct};
use crate::dialogue::{DialogueError, DialogueState};
use crate::llm::LlmError;
use crate::prompts::{PromptError, ScenarioError};
use crate::reward::{classify_terminal, EnvSignal, RewardSpec};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("state belongs to scenario `{state}` but the environment serves `{env}`")]
    ScenarioMismatch { state: String, env: String },
    #[error("act `{0}` is not part of this environment's action space")]
    UnknownAct(String),
    #[error("scripted scenario has no transition for key `{key}` and act `{act}`")]
    MissingTransition { key: String, act: String },
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invalid environment configuration: {0}")]
    InvalidConfig(String),
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: DialogueState,
    pub signal: EnvSignal,
}

/// What the environment concluded about the latest user utterance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assessment {
    pub signal: EnvSignal,
    pub deal_price: Option<f64>,
    /// A deal was confirmed but its price could not be parsed.
    pub price_invalid: bool,
}

impl Assessment {
    pub fn ongoing() -> Self {
        Assessment {
            signal: EnvSignal::UserOngoing,
            deal_price: None,
            price_invalid: false,
        }
    }

    pub fn signal(signal: EnvSignal) -> Self {
        Assessment {
            signal,
            deal_price: None,
            price_invalid: false,
        }
    }
}

pub trait Environment: Send + Sync {
    fn scenario_id(&self) -> &str;

    fn action_space(&self) -> &ActionSpace;

    /// Reward spec with this scenario's turn budget applied.
    fn reward_spec(&self) -> &RewardSpec;

    /// Opening exchange for simulated episodes: system opener followed by the
    /// simulated user's first utterance.
    fn initial_state(&self) -> DialogueState;

    /// Opening for live sessions, where a human writes the first user turn.
    fn live_opening(&self) -> DialogueState;

    /// Appends one system utterance for `act` and one simulated user reply,
    /// then classifies the outcome.
    fn step(
        &self,
        state: &DialogueState,
        act: &DialogueAct,
        rng: &mut dyn RngCore,
    ) -> Result<Transition, EnvError>;

    /// Appends only the system utterance for `act`.
    fn respond(
        &self,
        state: &DialogueState,
        act: &DialogueAct,
        rng: &mut dyn RngCore,
    ) -> Result<DialogueState, EnvError>;

    /// Judges the most recent user utterance of `state`.
    fn assess_user(&self, state: &DialogueState) -> Result<Assessment, EnvError>;
}

pub(crate) fn check_step_preconditions(
    env: &(impl Environment + ?Sized),
    state: &DialogueState,
    act: &DialogueAct,
) -> Result<(), EnvError> {
    if state.scenario_id != env.scenario_id() {
        return Err(EnvError::ScenarioMismatch {
            state: state.scenario_id.clone(),
            env: env.scenario_id().to_string(),
        });
    }
    if state.terminal.is_terminal() {
        return Err(DialogueError::AlreadyTerminal(state.terminal).into());
    }
    if env.action_space().get(&act.id).is_none() {
        return Err(EnvError::UnknownAct(act.id.clone()));
    }
    Ok(())
}

/// Records an assessment on `state` and sets its terminal class.
pub fn apply_assessment(state: &mut DialogueState, assessment: Assessment, spec: &RewardSpec) {
    if assessment.signal == EnvSignal::DealReached {
        state.deal_price = assessment.deal_price;
        state.deal_price_invalid = assessment.price_invalid;
    }
    state.terminal = classify_terminal(state, assessment.signal, spec);
}

/// Commits a real user message (typed by a human) to a live dialogue and
/// classifies the result.
pub fn observe_user_reply(
    env: &dyn Environment,
    state: &DialogueState,
    text: &str,
) -> Result<(DialogueState, EnvSignal), EnvError> {
    let mut next = state.clone();
    next.push_user(text)?;
    let assessment = env.assess_user(&next)?;
    apply_assessment(&mut next, assessment, env.reward_spec());
    Ok((next, assessment.signal))
}

/// Commits a planned system reply to a live dialogue. The turn budget is
/// checked here because no user reply follows until the human writes one.
pub fn commit_system_reply(
    env: &dyn Environment,
    state: &DialogueState,
    act: &DialogueAct,
    rng: &mut dyn RngCore,
) -> Result<DialogueState, EnvError> {
    let mut next = env.respond(state, act, rng)?;
    next.terminal = classify_terminal(&next, EnvSignal::UserOngoing, env.reward_spec());
    Ok(next)
}
