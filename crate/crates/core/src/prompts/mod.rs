//! Role-play prompt templates and their rendering.
//!
//! Templates are data (`data/templates/<dataset>.json`). Slots use the
//! `[slot name]` syntax; a slot name maps to a scenario key by replacing
//! spaces with underscores, so `[item name]` reads `item_name`. Four slots are
//! bound by the renderer itself: `action`, `context`, `resp_a` and `resp_b`.

mod scenario;

pub use scenario::{load_scenarios, ScenarioConfig, ScenarioError};

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Dataset, DialogueAct};
use crate::dialogue::{DialogueState, Speaker};
use crate::llm::{ChatMessage, Role};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("slot `{0}` is not bound")]
    MissingSlot(String),
    #[error("{role:?} template {expectation}")]
    ActPresence {
        role: TemplateRole,
        expectation: &'static str,
    },
    #[error("judge responses must be nonempty")]
    EmptyResponse,
    #[error("template for {0:?} not found in prompt set")]
    MissingTemplate(TemplateRole),
    #[error("template {role:?} uses slot `{slot}` not declared in required_slots")]
    UndeclaredSlot { role: TemplateRole, slot: String },
    #[error("failed to read prompt set {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed prompt set: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemplateRole {
    AssistantSim,
    UserSim,
    Critic,
    Judge,
}

/// Slots the renderer fills without consulting the scenario.
const BUILTIN_SLOTS: [&str; 4] = ["action", "context", "resp_a", "resp_b"];

fn slot_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[([a-z][a-z_ ]*)\]").expect("valid regex"))
}

pub fn slot_key(name: &str) -> String {
    name.trim().replace(' ', "_")
}

/// Slot keys referenced by `text`.
pub fn placeholders(text: &str) -> BTreeSet<String> {
    slot_pattern()
        .captures_iter(text)
        .map(|c| slot_key(&c[1]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateTurn {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerLabels {
    pub system: String,
    pub user: String,
}

impl SpeakerLabels {
    pub fn label(&self, speaker: Speaker) -> &str {
        match speaker {
            Speaker::System => &self.system,
            Speaker::User => &self.user,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    #[serde(default = "placeholder_dataset")]
    pub dataset: Dataset,
    pub role: TemplateRole,
    pub turns: Vec<TemplateTurn>,
    pub required_slots: BTreeSet<String>,
    /// Whether the text is reproduced word for word from the published
    /// prompt tables rather than written for this project.
    #[serde(default)]
    pub verbatim: bool,
    #[serde(skip)]
    speakers: Option<SpeakerLabels>,
}

fn placeholder_dataset() -> Dataset {
    Dataset::EsConv
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Opening {
    pub system: String,
    #[serde(default)]
    pub user: Option<String>,
}

/// Every template a dataset needs, plus its opening exchange and the
/// speaker labels used in transcripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub dataset: Dataset,
    pub speakers: SpeakerLabels,
    pub opening: Opening,
    pub templates: Vec<PromptTemplate>,
}

impl PromptSet {
    pub fn from_json(json: &str) -> Result<Self, PromptError> {
        let mut set: PromptSet = serde_json::from_str(json)?;
        for t in &mut set.templates {
            t.dataset = set.dataset;
            t.speakers = Some(set.speakers.clone());
            let used: BTreeSet<String> = t.turns.iter().flat_map(|turn| placeholders(&turn.text)).collect();
            if let Some(slot) = used.iter().find(|s| !t.required_slots.contains(*s)) {
                return Err(PromptError::UndeclaredSlot {
                    role: t.role,
                    slot: slot.clone(),
                });
            }
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn bundled(dataset: Dataset) -> PromptSet {
        let json = match dataset {
            Dataset::EsConv => include_str!("../../data/templates/esconv.json"),
            Dataset::Cima => include_str!("../../data/templates/cima.json"),
            Dataset::CraigslistBargain => {
                include_str!("../../data/templates/craigslist_bargain.json")
            }
            Dataset::P4g => include_str!("../../data/templates/p4g.json"),
        };
        Self::from_json(json).expect("bundled prompt set is valid")
    }

    pub fn template(&self, role: TemplateRole) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .iter()
            .find(|t| t.role == role)
            .ok_or(PromptError::MissingTemplate(role))
    }

    /// Scenario slots needed by any template or the opening, excluding the
    /// renderer's own slots.
    pub fn scenario_slots(&self) -> BTreeSet<String> {
        let mut slots: BTreeSet<String> = self
            .templates
            .iter()
            .flat_map(|t| t.required_slots.iter().cloned())
            .collect();
        slots.extend(placeholders(&self.opening.system));
        if let Some(user) = &self.opening.user {
            slots.extend(placeholders(user));
        }
        slots.retain(|s| !BUILTIN_SLOTS.contains(&s.as_str()));
        slots
    }

    /// The opening exchange with scenario slots filled in.
    pub fn render_opening(
        &self,
        scenario: &ScenarioConfig,
    ) -> Result<(String, Option<String>), PromptError> {
        let lookup = |key: &str| scenario.slot(key).map(str::to_string);
        let system = substitute(&self.opening.system, &lookup)?;
        let user = match &self.opening.user {
            Some(u) => Some(substitute(u, &lookup)?),
            None => None,
        };
        Ok((system, user))
    }
}

fn substitute(text: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<String, PromptError> {
    let mut missing = None;
    let out = slot_pattern().replace_all(text, |c: &Captures| {
        let key = slot_key(&c[1]);
        match lookup(&key) {
            Some(v) => v,
            None => {
                missing.get_or_insert(key);
                String::new()
            }
        }
    });
    match missing {
        Some(key) => Err(PromptError::MissingSlot(key)),
        None => Ok(out.into_owned()),
    }
}

/// Plain-text transcript with speaker labels, one utterance per line.
pub fn transcript(state: &DialogueState, labels: &SpeakerLabels) -> String {
    state
        .history
        .iter()
        .map(|u| format!("{}: {}", labels.label(u.speaker), u.text))
        .collect::<Vec<_>>()
        .join("\n")
}

impl PromptTemplate {
    pub fn speakers(&self) -> SpeakerLabels {
        self.speakers.clone().unwrap_or_else(|| SpeakerLabels {
            system: "System".into(),
            user: "User".into(),
        })
    }

    fn render_turns(
        &self,
        lookup: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Vec<ChatMessage>, PromptError> {
        self.turns
            .iter()
            .map(|t| Ok(ChatMessage::new(t.role, substitute(&t.text, lookup)?)))
            .collect()
    }
}

/// Renders a simulator or critic prompt for `history`.
///
/// Simulator prompts end with the dialogue history seen from the simulated
/// speaker's side: the assistant simulator receives user utterances as `user`
/// messages and its own as `assistant`, the user simulator the reverse. Critic
/// prompts carry the history as a transcript in the `[context]` slot.
pub fn render(
    template: &PromptTemplate,
    scenario: &ScenarioConfig,
    act: Option<&DialogueAct>,
    history: &DialogueState,
) -> Result<Vec<ChatMessage>, PromptError> {
    match (template.role, act) {
        (TemplateRole::AssistantSim, None) => {
            return Err(PromptError::ActPresence {
                role: template.role,
                expectation: "requires a dialogue act",
            })
        }
        (TemplateRole::AssistantSim, Some(_)) => {}
        (role, Some(_)) => {
            return Err(PromptError::ActPresence {
                role,
                expectation: "must not receive a dialogue act",
            })
        }
        (_, None) => {}
    }
    let context = transcript(history, &template.speakers());
    let lookup = |key: &str| match key {
        "action" => act.map(|a| a.prompt_text.clone()),
        "context" => Some(context.clone()),
        _ => scenario.slot(key).map(str::to_string),
    };
    let mut messages = template.render_turns(&lookup)?;
    let perspective = match template.role {
        TemplateRole::AssistantSim => Some(Speaker::System),
        TemplateRole::UserSim => Some(Speaker::User),
        _ => None,
    };
    if let Some(me) = perspective {
        for u in &history.history {
            let role = if u.speaker == me {
                Role::Assistant
            } else {
                Role::User
            };
            messages.push(ChatMessage::new(role, u.text.clone()));
        }
    }
    Ok(messages)
}

/// Renders an A/B/C comparison prompt.
pub fn render_judge(
    template: &PromptTemplate,
    context: &str,
    resp_a: &str,
    resp_b: &str,
) -> Result<Vec<ChatMessage>, PromptError> {
    if resp_a.trim().is_empty() || resp_b.trim().is_empty() {
        return Err(PromptError::EmptyResponse);
    }
    let lookup = |key: &str| match key {
        "context" => Some(context.to_string()),
        "resp_a" => Some(resp_a.to_string()),
        "resp_b" => Some(resp_b.to_string()),
        _ => None,
    };
    template.render_turns(&lookup)
}
