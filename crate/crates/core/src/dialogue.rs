//! Dialogue history and the MDP state built from it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    /// Dialogue act that conditioned a planned system utterance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub act: Option<String>,
    pub turn_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Terminal {
    Ongoing,
    Solved,
    Failed,
    TurnBudgetExhausted,
}

impl Terminal {
    pub fn is_terminal(self) -> bool {
        self != Terminal::Ongoing
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DialogueError {
    #[error("dialogue already ended ({0:?})")]
    AlreadyTerminal(Terminal),
    #[error("{0:?} utterance cannot follow another {0:?} utterance")]
    Alternation(Speaker),
    #[error("system utterance at turn {0} is missing its dialogue act")]
    MissingAct(u32),
    #[error("user utterance at turn {0} carries a dialogue act")]
    UnexpectedAct(u32),
    #[error("turn_count {stored} does not match {counted} planned system utterances")]
    TurnCount { stored: u32, counted: u32 },
    #[error("dialogue must open with a system utterance")]
    UserFirst,
}

/// A dialogue in progress. `history` is the state of the planning MDP; the
/// remaining fields are bookkeeping derived from it or owned by the
/// environment that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub scenario_id: String,
    pub history: Vec<Utterance>,
    /// Completed planned system turns (the opener at turn 0 is not counted).
    pub turn_count: u32,
    pub terminal: Terminal,
    /// Opaque position marker owned by the environment (scripted table key).
    #[serde(default)]
    pub cursor: String,
    /// Agreed price once a bargaining deal is confirmed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deal_price: Option<f64>,
    /// A deal was confirmed but no price could be recovered.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub deal_price_invalid: bool,
}

impl DialogueState {
    /// Seeds a dialogue with its opening exchange: the system opener at turn 0,
    /// optionally followed by the user's first utterance.
    pub fn open(
        scenario_id: impl Into<String>,
        system_opener: impl Into<String>,
        user_opener: Option<String>,
    ) -> Self {
        let mut history = vec![Utterance {
            speaker: Speaker::System,
            text: system_opener.into(),
            act: None,
            turn_index: 0,
        }];
        if let Some(text) = user_opener {
            history.push(Utterance {
                speaker: Speaker::User,
                text,
                act: None,
                turn_index: 1,
            });
        }
        DialogueState {
            scenario_id: scenario_id.into(),
            history,
            turn_count: 0,
            terminal: Terminal::Ongoing,
            cursor: String::new(),
            deal_price: None,
            deal_price_invalid: false,
        }
    }

    pub fn is_ongoing(&self) -> bool {
        self.terminal == Terminal::Ongoing
    }

    pub fn last_speaker(&self) -> Option<Speaker> {
        self.history.last().map(|u| u.speaker)
    }

    /// Act ids of the planned system turns, in order.
    pub fn acts(&self) -> impl Iterator<Item = &str> {
        self.history.iter().filter_map(|u| u.act.as_deref())
    }

    pub fn last_user_text(&self) -> Option<&str> {
        self.history
            .iter()
            .rev()
            .find(|u| u.speaker == Speaker::User)
            .map(|u| u.text.as_str())
    }

    pub fn push_system(
        &mut self,
        act_id: impl Into<String>,
        text: impl Into<String>,
    ) -> Result<(), DialogueError> {
        if self.terminal.is_terminal() {
            return Err(DialogueError::AlreadyTerminal(self.terminal));
        }
        if self.last_speaker() == Some(Speaker::System) {
            return Err(DialogueError::Alternation(Speaker::System));
        }
        self.turn_count += 1;
        self.history.push(Utterance {
            speaker: Speaker::System,
            text: text.into(),
            act: Some(act_id.into()),
            turn_index: self.turn_count,
        });
        Ok(())
    }

    pub fn push_user(&mut self, text: impl Into<String>) -> Result<(), DialogueError> {
        if self.terminal.is_terminal() {
            return Err(DialogueError::AlreadyTerminal(self.terminal));
        }
        match self.last_speaker() {
            None => return Err(DialogueError::UserFirst),
            Some(Speaker::User) => return Err(DialogueError::Alternation(Speaker::User)),
            Some(Speaker::System) => {}
        }
        self.history.push(Utterance {
            speaker: Speaker::User,
            text: text.into(),
            act: None,
            turn_index: self.turn_count + 1,
        });
        Ok(())
    }

    /// Checks the structural invariants of the history.
    pub fn validate(&self) -> Result<(), DialogueError> {
        let mut prev: Option<Speaker> = None;
        let mut counted = 0;
        for (i, u) in self.history.iter().enumerate() {
            if i == 0 && u.speaker != Speaker::System {
                return Err(DialogueError::UserFirst);
            }
            if prev == Some(u.speaker) {
                return Err(DialogueError::Alternation(u.speaker));
            }
            match u.speaker {
                Speaker::System if u.turn_index >= 1 => {
                    if u.act.is_none() {
                        return Err(DialogueError::MissingAct(u.turn_index));
                    }
                    counted += 1;
                }
                Speaker::User if u.act.is_some() => {
                    return Err(DialogueError::UnexpectedAct(u.turn_index));
                }
                _ => {}
            }
            prev = Some(u.speaker);
        }
        if counted != self.turn_count {
            return Err(DialogueError::TurnCount {
                stored: self.turn_count,
                counted,
            });
        }
        Ok(())
    }
}
