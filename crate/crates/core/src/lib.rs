//! Online dialogue-policy planning with Nested Rollout Policy Adaptation.
//!
//! A single global softmax policy over dialogue acts is adapted towards the
//! best simulated continuation found so far; the first act of that
//! continuation is committed to the live dialogue and planning restarts at
//! the next turn.

pub mod action;
pub mod cli;
pub mod dialogue;
pub mod eval;
pub mod env;
pub mod llm;
pub mod nrpa;
pub mod params;
pub mod policy;
pub mod prompts;
pub mod reward;
pub mod service;

pub use action::{ActionSpace, Dataset, DialogueAct};
pub use dialogue::{DialogueState, Speaker, Terminal, Utterance};
pub use env::{Environment, LlmEnvConfig, LlmEnvironment, ScriptedScenario};
pub use nrpa::{adapt, nrpa, plan_next_act, playout, Plan, RolloutResult, SearchError, SearchStats};
pub use params::{AdaptMode, NrpaParams, RootSelection};
pub use policy::{softmax, uniform_policy, Policy};
pub use reward::{classify_terminal, evaluate, EnvSignal, RewardSpec};
