//! Table-driven deterministic environment used as a test oracle and for
//! offline runs.
//!
//! Transitions are keyed by an abstract state key and an act id. The key
//! starts at `start_key` and moves to each transition's `next` key; when a
//! transition leaves `next` unset, the key is extended with the act id, so by
//! default the key is the space-separated sequence of acts played so far.
//! `*` matches any key or any act.

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;

use rand::{Rng, RngCore};
use serde::Deserialize;
use thiserror::Error;

use super::{
    apply_assessment, check_step_preconditions, Assessment, EnvError, Environment, Transition,
};
use crate::action::{ActionSpace, ActionSpaceError, Dataset, DialogueAct};
use crate::dialogue::DialogueState;
use crate::reward::{EnvSignal, PriceTargets, RewardError, RewardSpec};

const WILDCARD: &str = "*";
/// Upper bound on keys visited by the load-time reachability check.
const MAX_VALIDATED_KEYS: usize = 200_000;

#[derive(Debug, Error)]
pub enum ScriptedScenarioError {
    #[error("failed to read scripted scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scripted scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    ActionSpace(#[from] ActionSpaceError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("transition ({key}, {act}) names unknown act")]
    UnknownAct { key: String, act: String },
    #[error("transition ({key}, {act}) is defined twice")]
    Duplicate { key: String, act: String },
    #[error("transition ({key}, {act}) needs exactly one of `reply` or `branches`")]
    Shape { key: String, act: String },
    #[error("branch probabilities of ({key}, {act}) must be nonnegative and sum to 1, got {sum}")]
    Probabilities { key: String, act: String, sum: f64 },
    #[error("reachable pair (key `{key}`, act `{act}`) has no transition")]
    Unreachable { key: String, act: String },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Branch {
    #[serde(default)]
    pub next: Option<String>,
    /// System utterance text; defaults to the act label.
    #[serde(default)]
    pub system_text: Option<String>,
    pub reply: String,
    pub signal: EnvSignal,
    #[serde(default)]
    pub deal_price: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Outcome {
    Fixed(Branch),
    Stochastic(Vec<(f64, Branch)>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ActionSpaceRef {
    Inline(ActionSpace),
    Named(String),
}

#[derive(Debug, Clone, Deserialize)]
struct RawOpening {
    system: String,
    #[serde(default)]
    user: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct RawBranch {
    p: f64,
    #[serde(flatten)]
    branch: Branch,
}

#[derive(Debug, Clone, Deserialize)]
struct RawTransition {
    key: String,
    act: String,
    #[serde(default)]
    next: Option<String>,
    #[serde(default)]
    system_text: Option<String>,
    #[serde(default)]
    reply: Option<String>,
    #[serde(default)]
    signal: Option<EnvSignal>,
    #[serde(default)]
    deal_price: Option<f64>,
    #[serde(default)]
    branches: Option<Vec<RawBranch>>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct UserTrigger {
    /// Case-insensitive substring of the human's message.
    pub contains: String,
    pub signal: EnvSignal,
    #[serde(default)]
    pub deal_price: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
struct RawScenario {
    id: String,
    action_space: ActionSpaceRef,
    opening: RawOpening,
    #[serde(default)]
    max_turns: Option<u32>,
    #[serde(default)]
    start_key: String,
    transitions: Vec<RawTransition>,
    #[serde(default)]
    user_triggers: Vec<UserTrigger>,
    #[serde(default)]
    price_targets: Option<PriceTargets>,
}

#[derive(Debug, Clone)]
pub struct ScriptedScenario {
    id: String,
    space: ActionSpace,
    system_opener: String,
    user_opener: Option<String>,
    start_key: String,
    table: HashMap<(String, String), Outcome>,
    user_triggers: Vec<UserTrigger>,
    max_turns: Option<u32>,
    reward: RewardSpec,
    price_targets: Option<PriceTargets>,
}

impl ScriptedScenario {
    pub fn load(path: &Path) -> Result<Self, ScriptedScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScriptedScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, path.parent())
    }

    /// Parses a scenario document. A string `action_space` names either a
    /// bundled dataset or a file relative to `base_dir`.
    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn from_json(json: &str, base_dir: Option<&Path>) -> Result<Self, ScriptedScenarioError> {
        let raw: RawScenario = serde_json::from_str(json)?;
        let space = match raw.action_space {
            ActionSpaceRef::Inline(space) => space,
            ActionSpaceRef::Named(name) => match name.parse::<Dataset>() {
                Ok(dataset) => ActionSpace::canonical(dataset),
                Err(_) => {
                    let path = base_dir.map(|d| d.join(&name)).unwrap_or_else(|| name.into());
                    ActionSpace::load(&path)?
                }
            },
        };
        let mut table = HashMap::new();
        for t in raw.transitions {
            if t.act != WILDCARD && space.get(&t.act).is_none() {
                return Err(ScriptedScenarioError::UnknownAct { key: t.key, act: t.act });
            }
            let outcome = match (t.reply, t.signal, t.branches) {
                (Some(reply), Some(signal), None) => Outcome::Fixed(Branch {
                    next: t.next,
                    system_text: t.system_text,
                    reply,
                    signal,
                    deal_price: t.deal_price,
                }),
                (None, None, Some(branches)) if !branches.is_empty() => {
                    let sum: f64 = branches.iter().map(|b| b.p).sum();
                    if branches.iter().any(|b| !(b.p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                        return Err(ScriptedScenarioError::Probabilities {
                            key: t.key,
                            act: t.act,
                            sum,
                        });
                    }
                    Outcome::Stochastic(branches.into_iter().map(|b| (b.p, b.branch)).collect())
                }
                _ => return Err(ScriptedScenarioError::Shape { key: t.key, act: t.act }),
            };
            let slot = (t.key, t.act);
            if table.contains_key(&slot) {
                return Err(ScriptedScenarioError::Duplicate {
                    key: slot.0,
                    act: slot.1,
                });
            }
            table.insert(slot, outcome);
        }
        let mut scenario = ScriptedScenario {
            id: raw.id,
            space,
            system_opener: raw.opening.system,
            user_opener: raw.opening.user,
            start_key: raw.start_key,
            table,
            user_triggers: raw.user_triggers,
            max_turns: raw.max_turns,
            reward: RewardSpec::default(),
            price_targets: raw.price_targets,
        };
        scenario.set_reward(RewardSpec::default())?;
        scenario.check_reachable()?;
        Ok(scenario)
    }

    /// Uses `spec` for scoring; the scenario's own `max_turns`, when set,
    /// overrides the spec's budget.
    pub fn with_reward(mut self, spec: RewardSpec) -> Result<Self, ScriptedScenarioError> {
        self.set_reward(spec)?;
        self.check_reachable()?;
        Ok(self)
    }

    fn set_reward(&mut self, spec: RewardSpec) -> Result<(), ScriptedScenarioError> {
        let spec = match self.max_turns {
            Some(n) => spec.with_max_turns(n),
            None => spec,
        };
        spec.validate()?;
        self.reward = spec;
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Bargaining targets used for the sale-to-list metric, if declared.
    pub fn price_targets(&self) -> Option<PriceTargets> {
        self.price_targets
    }

    fn lookup(&self, key: &str, act: &str) -> Option<&Outcome> {
        let k = key.to_string();
        let a = act.to_string();
        let w = WILDCARD.to_string();
        self.table
            .get(&(k.clone(), a.clone()))
            .or_else(|| self.table.get(&(k, w.clone())))
            .or_else(|| self.table.get(&(w.clone(), a)))
            .or_else(|| self.table.get(&(w.clone(), w)))
    }

    fn next_key(key: &str, act: &str, branch: &Branch) -> String {
        match &branch.next {
            Some(next) => next.clone(),
            None if key.is_empty() => act.to_string(),
            None => format!("{key} {act}"),
        }
    }

    /// Walks every key reachable within the turn budget and checks that each
    /// (key, act) pair resolves. Stops quietly once `MAX_VALIDATED_KEYS` keys
    /// have been visited; the remainder is checked lazily at step time.
    fn check_reachable(&self) -> Result<(), ScriptedScenarioError> {
        let wildcard = WILDCARD.to_string();
        if self.table.contains_key(&(wildcard.clone(), wildcard)) {
            return Ok(());
        }
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([(self.start_key.clone(), 0u32)]);
        while let Some((key, depth)) = queue.pop_front() {
            if !seen.insert(key.clone()) {
                continue;
            }
            if seen.len() > MAX_VALIDATED_KEYS {
                log::warn!(
                    "scripted scenario `{}`: reachability check truncated after {MAX_VALIDATED_KEYS} keys",
                    self.id
                );
                return Ok(());
            }
            for act in self.space.ids() {
                let outcome = self.lookup(&key, act).ok_or_else(|| {
                    ScriptedScenarioError::Unreachable {
                        key: key.clone(),
                        act: act.to_string(),
                    }
                })?;
                if depth + 1 >= self.reward.max_turns {
                    continue;
                }
                let branches: Vec<&Branch> = match outcome {
                    Outcome::Fixed(b) => vec![b],
                    Outcome::Stochastic(bs) => bs.iter().map(|(_, b)| b).collect(),
                };
                for b in branches {
                    if b.signal == EnvSignal::UserOngoing {
                        queue.push_back((Self::next_key(&key, act, b), depth + 1));
                    }
                }
            }
        }
        Ok(())
    }

    fn resolve(
        &self,
        key: &str,
        act: &DialogueAct,
        rng: &mut dyn RngCore,
    ) -> Result<&Branch, EnvError> {
        let outcome = self
            .lookup(key, &act.id)
            .ok_or_else(|| EnvError::MissingTransition {
                key: key.to_string(),
                act: act.id.clone(),
            })?;
        Ok(match outcome {
            Outcome::Fixed(b) => b,
            Outcome::Stochastic(branches) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut chosen = &branches[branches.len() - 1].1;
                for (p, b) in branches {
                    acc += p;
                    if u < acc {
                        chosen = b;
                        break;
                    }
                }
                chosen
            }
        })
    }

    fn advance_system(
        &self,
        state: &DialogueState,
        act: &DialogueAct,
        rng: &mut dyn RngCore,
    ) -> Result<(DialogueState, Branch), EnvError> {
        check_step_preconditions(self, state, act)?;
        let branch = self.resolve(&state.cursor, act, rng)?.clone();
        let mut next = state.clone();
        let text = branch.system_text.clone().unwrap_or_else(|| act.label.clone());
        next.push_system(&act.id, text)?;
        next.cursor = Self::next_key(&state.cursor, &act.id, &branch);
        Ok((next, branch))
    }
}

impl Environment for ScriptedScenario {
    fn scenario_id(&self) -> &str {
        &self.id
    }

    fn action_space(&self) -> &ActionSpace {
        &self.space
    }

    fn reward_spec(&self) -> &RewardSpec {
        &self.reward
    }

    fn initial_state(&self) -> DialogueState {
        let mut s = DialogueState::open(
            self.id.clone(),
            self.system_opener.clone(),
            self.user_opener.clone(),
        );
        s.cursor = self.start_key.clone();
        s
    }

    fn live_opening(&self) -> DialogueState {
        let mut s = DialogueState::open(self.id.clone(), self.system_opener.clone(), None);
        s.cursor = self.start_key.clone();
        s
    }

    fn step(
        &self,
        state: &DialogueState,
        act: &DialogueAct,
        rng: &mut dyn RngCore,
    ) -> Result<Transition, EnvError> {
        let (mut next, branch) = self.advance_system(state, act, rng)?;
        next.push_user(branch.reply.clone())?;
        let assessment = Assessment {
            signal: branch.signal,
            deal_price: branch.deal_price,
            price_invalid: branch.signal == EnvSignal::DealReached && branch.deal_price.is_none(),
        };
        apply_assessment(&mut next, assessment, &self.reward);
        Ok(Transition {
            state: next,
            signal: branch.signal,
        })
    }

    fn respond(
        &self,
        state: &DialogueState,
        act: &DialogueAct,
        rng: &mut dyn RngCore,
    ) -> Result<DialogueState, EnvError> {
        Ok(self.advance_system(state, act, rng)?.0)
    }

    fn assess_user(&self, state: &DialogueState) -> Result<Assessment, EnvError> {
        let text = state.last_user_text().unwrap_or_default().to_lowercase();
        Ok(self
            .user_triggers
            .iter()
            .find(|t| text.contains(&t.contains.to_lowercase()))
            .map(|t| Assessment {
                signal: t.signal,
                deal_price: t.deal_price,
                price_invalid: t.signal == EnvSignal::DealReached && t.deal_price.is_none(),
            })
            .unwrap_or_else(Assessment::ongoing))
    }
}
