use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{slot_key, PromptSet};
use crate::action::{ActionSpace, ActionSpaceError, Dataset};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario `{id}` is missing slot `{slot}`")]
    MissingSlot { id: String, slot: String },
    #[error("scenario `{id}`: slot `{slot}` is not a price: `{value}`")]
    BadPrice { id: String, slot: String, value: String },
    #[error("scenario `{id}`: buyer target {buyer} must be below seller target {seller}")]
    PriceOrder { id: String, buyer: f64, seller: f64 },
    #[error("scenario `{id}`: max_turns must be at least 1")]
    ZeroTurns { id: String },
    #[error("failed to read scenarios {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    ActionSpace(#[from] ActionSpaceError),
}

/// One task instance: the dataset, its prompt slot values and turn budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: String,
    pub dataset: Dataset,
    #[serde(default)]
    pub slots: BTreeMap<String, String>,
    /// Turn budget; the run's reward spec applies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_turns: Option<u32>,
    /// Path to a custom action space; the bundled one is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_space: Option<String>,
}

impl ScenarioConfig {
    pub fn new<'a>(
        id: &str,
        dataset: Dataset,
        slots: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Self {
        ScenarioConfig {
            id: id.to_string(),
            dataset,
            slots: slots
                .into_iter()
                .map(|(k, v)| (slot_key(k), v.to_string()))
                .collect(),
            max_turns: None,
            action_space: None,
        }
    }

    pub fn slot(&self, key: &str) -> Option<&str> {
        self.slots.get(&slot_key(key)).map(String::as_str)
    }

    fn price(&self, slot: &str) -> Result<f64, ScenarioError> {
        let raw = self.slot(slot).ok_or_else(|| ScenarioError::MissingSlot {
            id: self.id.clone(),
            slot: slot.to_string(),
        })?;
        crate::env::extract_deal_price(raw).ok_or_else(|| ScenarioError::BadPrice {
            id: self.id.clone(),
            slot: slot.to_string(),
            value: raw.to_string(),
        })
    }

    /// `(buyer_target, seller_target)` for bargaining scenarios.
    pub fn target_prices(&self) -> Result<(f64, f64), ScenarioError> {
        Ok((self.price("buyer_target_price")?, self.price("seller_target_price")?))
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self, prompts: &PromptSet) -> Result<(), ScenarioError> {
        if self.max_turns == Some(0) {
            return Err(ScenarioError::ZeroTurns { id: self.id.clone() });
        }
        for slot in prompts.scenario_slots() {
            if self.slot(&slot).is_none() {
                return Err(ScenarioError::MissingSlot {
                    id: self.id.clone(),
                    slot,
                });
            }
        }
        if self.dataset == Dataset::CraigslistBargain {
            let (buyer, seller) = self.target_prices()?;
            if !(buyer < seller) {
                return Err(ScenarioError::PriceOrder {
                    id: self.id.clone(),
                    buyer,
                    seller,
                });
            }
        }
        Ok(())
    }

    /// The custom action space if one is named (relative to `base_dir`),
    /// else the bundled space for the dataset.
    pub fn load_action_space(&self, base_dir: Option<&Path>) -> Result<ActionSpace, ScenarioError> {
        match &self.action_space {
            Some(p) => {
                let path = base_dir.map(|d| d.join(p)).unwrap_or_else(|| p.into());
                Ok(ActionSpace::load(&path)?)
            }
            None => Ok(ActionSpace::canonical(self.dataset)),
        }
    }
}

/// Reads a JSON array of scenarios.
pub fn load_scenarios(path: &Path) -> Result<Vec<ScenarioConfig>, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}
