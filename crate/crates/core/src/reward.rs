//! Terminal classification and final-state scoring.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::{DialogueState, Terminal};

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("cannot score an ongoing dialogue")]
    Ongoing,
    #[error("turn_penalty must be nonnegative, got {0}")]
    NegativePenalty(f64),
    #[error("success_value ({success}) must exceed unsolved_base ({unsolved})")]
    Ordering { success: f64, unsolved: f64 },
    #[error("max_turns must be at least 1")]
    ZeroTurns,
    #[error(
        "turn_penalty * max_turns ({0}) must stay below success_value - unsolved_base, \
         otherwise a long success can score below a short failure"
    )]
    PenaltyTooLarge(f64),
}

/// What the environment observed about the user after a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvSignal {
    UserSolved,
    UserOngoing,
    DealReached,
    DealRejected,
}

/// Bargaining targets of a scenario: the seller's asking price and the
/// buyer's goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceTargets {
    pub seller: f64,
    pub buyer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardSpec {
    pub success_value: f64,
    /// Charged once per completed system turn, solved or not.
    pub turn_penalty: f64,
    pub unsolved_base: f64,
    /// Dialogue-level turn budget.
    pub max_turns: u32,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec {
            success_value: 1.0,
            turn_penalty: 0.001,
            unsolved_base: 0.0,
            max_turns: 10,
        }
    }
}

impl RewardSpec {
    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.turn_penalty >= 0.0) {
            return Err(RewardError::NegativePenalty(self.turn_penalty));
        }
        if !(self.success_value > self.unsolved_base) {
            return Err(RewardError::Ordering {
                success: self.success_value,
                unsolved: self.unsolved_base,
            });
        }
        if self.max_turns == 0 {
            return Err(RewardError::ZeroTurns);
        }
        let worst = self.turn_penalty * f64::from(self.max_turns);
        if worst >= self.success_value - self.unsolved_base {
            return Err(RewardError::PenaltyTooLarge(worst));
        }
        Ok(())
    }

    pub fn with_max_turns(&self, max_turns: u32) -> RewardSpec {
        RewardSpec {
            max_turns,
            ..self.clone()
        }
    }

    /// Reward for a dialogue that ended in `terminal` after `turns` system turns.
    pub fn score(&self, terminal: Terminal, turns: u32) -> Result<f64, RewardError> {
        let base = match terminal {
            Terminal::Ongoing => return Err(RewardError::Ongoing),
            Terminal::Solved => self.success_value,
            Terminal::Failed | Terminal::TurnBudgetExhausted => self.unsolved_base,
        };
        Ok(base - self.turn_penalty * f64::from(turns))
    }

    pub fn evaluate(&self, state: &DialogueState) -> Result<f64, RewardError> {
        self.score(state.terminal, state.turn_count)
    }

    /// Lowest reward any solved dialogue within `max_steps` turns can have.
    pub fn solved_floor(&self, max_steps: u32) -> f64 {
        self.success_value - self.turn_penalty * f64::from(max_steps)
    }
}

pub fn evaluate(state: &DialogueState, spec: &RewardSpec) -> Result<f64, RewardError> {
    spec.evaluate(state)
}

pub fn classify_terminal(state: &DialogueState, signal: EnvSignal, spec: &RewardSpec) -> Terminal {
    match signal {
        EnvSignal::UserSolved | EnvSignal::DealReached => Terminal::Solved,
        _ if state.turn_count >= spec.max_turns => Terminal::TurnBudgetExhausted,
        EnvSignal::DealRejected => Terminal::Failed,
        EnvSignal::UserOngoing => Terminal::Ongoing,
    }
}
