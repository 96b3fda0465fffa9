//! Dialogue acts and the per-dataset action spaces they live in.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ActionSpaceError {
    #[error("action space must contain at least 2 acts, got {0}")]
    TooFewActs(usize),
    #[error("act id must be nonempty (position {0})")]
    EmptyId(usize),
    #[error("act `{0}` has an empty prompt_text")]
    EmptyPrompt(String),
    #[error("duplicate act id `{0}`")]
    DuplicateId(String),
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("failed to read action space {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed action space JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// The four goal-oriented dialogue corpora the planner ships prompt sets for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dataset {
    #[serde(rename = "ESConv", alias = "esconv")]
    EsConv,
    #[serde(rename = "CIMA", alias = "cima")]
    Cima,
    #[serde(rename = "CraigslistBargain", alias = "craigslist_bargain", alias = "CB")]
    CraigslistBargain,
    #[serde(rename = "P4G", alias = "p4g")]
    P4g,
}

impl Dataset {
    pub const ALL: [Dataset; 4] = [
        Dataset::EsConv,
        Dataset::Cima,
        Dataset::CraigslistBargain,
        Dataset::P4g,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::EsConv => "ESConv",
            Dataset::Cima => "CIMA",
            Dataset::CraigslistBargain => "CraigslistBargain",
            Dataset::P4g => "P4G",
        }
    }

    /// Lowercase stem used for bundled data file names.
    pub fn file_stem(self) -> &'static str {
        match self {
            Dataset::EsConv => "esconv",
            Dataset::Cima => "cima",
            Dataset::CraigslistBargain => "craigslist_bargain",
            Dataset::P4g => "p4g",
        }
    }

    /// Size of the canonical action space, when the corpus defines one.
    pub fn canonical_size(self) -> Option<usize> {
        match self {
            Dataset::EsConv => Some(8),
            Dataset::Cima => Some(5),
            Dataset::CraigslistBargain => Some(11),
            Dataset::P4g => None,
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dataset {
    type Err = ActionSpaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "esconv" => Ok(Dataset::EsConv),
            "cima" => Ok(Dataset::Cima),
            "craigslistbargain" | "craigslist_bargain" | "cb" => Ok(Dataset::CraigslistBargain),
            "p4g" => Ok(Dataset::P4g),
            _ => Err(ActionSpaceError::UnknownDataset(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueAct {
    pub id: String,
    pub label: String,
    /// Instruction substituted into the `[action]` slot of assistant prompts.
    pub prompt_text: String,
}

/// Ordered set of dialogue acts. The position of an act is its index in
/// every [`Policy`](crate::policy::Policy) built over this space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionSpace {
    pub dataset: Dataset,
    acts: Vec<DialogueAct>,
}

#[derive(Deserialize)]
struct RawActionSpace {
    dataset: Dataset,
    acts: Vec<DialogueAct>,
}

impl<'de> Deserialize<'de> for ActionSpace {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawActionSpace::deserialize(deserializer)?;
        ActionSpace::new(raw.dataset, raw.acts).map_err(serde::de::Error::custom)
    }
}

impl ActionSpace {
    pub fn new(dataset: Dataset, acts: Vec<DialogueAct>) -> Result<Self, ActionSpaceError> {
        if acts.len() < 2 {
            return Err(ActionSpaceError::TooFewActs(acts.len()));
        }
        let mut seen = HashSet::with_capacity(acts.len());
        for (i, act) in acts.iter().enumerate() {
            if act.id.is_empty() {
                return Err(ActionSpaceError::EmptyId(i));
            }
            if act.prompt_text.trim().is_empty() {
                return Err(ActionSpaceError::EmptyPrompt(act.id.clone()));
            }
            if !seen.insert(act.id.as_str()) {
                return Err(ActionSpaceError::DuplicateId(act.id.clone()));
            }
        }
        Ok(ActionSpace { dataset, acts })
    }

    /// Convenience constructor for tests and scripted scenarios: every act's
    /// label and prompt text default to its id.
    pub fn from_ids(dataset: Dataset, ids: &[&str]) -> Result<Self, ActionSpaceError> {
        let acts = ids
            .iter()
            .map(|id| DialogueAct {
                id: id.to_string(),
                label: id.to_string(),
                prompt_text: id.to_string(),
            })
            .collect();
        ActionSpace::new(dataset, acts)
    }

    pub fn from_json(json: &str) -> Result<Self, ActionSpaceError> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn load(path: &Path) -> Result<Self, ActionSpaceError> {
        let text = std::fs::read_to_string(path).map_err(|source| ActionSpaceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// The action space bundled with the crate for `dataset`.
    pub fn canonical(dataset: Dataset) -> ActionSpace {
        let json = match dataset {
            Dataset::EsConv => include_str!("../data/action_spaces/esconv.json"),
            Dataset::Cima => include_str!("../data/action_spaces/cima.json"),
            Dataset::CraigslistBargain => {
                include_str!("../data/action_spaces/craigslist_bargain.json")
            }
            Dataset::P4g => include_str!("../data/action_spaces/p4g.json"),
        };
        Self::from_json(json).expect("bundled action space is valid")
    }

    pub fn acts(&self) -> &[DialogueAct] {
        &self.acts
    }

    pub fn len(&self) -> usize {
        self.acts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acts.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.acts.iter().position(|a| a.id == id)
    }

    pub fn get(&self, id: &str) -> Option<&DialogueAct> {
        self.acts.iter().find(|a| a.id == id)
    }

    pub fn act_at(&self, index: usize) -> &DialogueAct {
        &self.acts[index]
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.acts.iter().map(|a| a.id.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_sizes() {
        for dataset in Dataset::ALL {
            let space = ActionSpace::canonical(dataset);
            assert_eq!(space.dataset, dataset);
            if let Some(n) = dataset.canonical_size() {
                assert_eq!(space.len(), n, "{dataset}");
            }
            assert!(space.len() >= 2);
        }
    }

    #[test]
    fn rejects_duplicates_and_empties() {
        assert!(matches!(
            ActionSpace::from_ids(Dataset::EsConv, &["a", "a"]),
            Err(ActionSpaceError::DuplicateId(_))
        ));
        assert!(matches!(
            ActionSpace::from_ids(Dataset::EsConv, &["a"]),
            Err(ActionSpaceError::TooFewActs(1))
        ));
        assert!(matches!(
            ActionSpace::from_ids(Dataset::EsConv, &["a", ""]),
            Err(ActionSpaceError::EmptyId(1))
        ));
        let json = r#"{"dataset":"CIMA","acts":[
            {"id":"a","label":"A","prompt_text":"do a"},
            {"id":"b","label":"B","prompt_text":"  "}]}"#;
        assert!(ActionSpace::from_json(json).is_err());
    }

    #[test]
    fn dataset_parse() {
        assert_eq!("esconv".parse::<Dataset>().unwrap(), Dataset::EsConv);
        assert_eq!("CB".parse::<Dataset>().unwrap(), Dataset::CraigslistBargain);
        assert!("nope".parse::<Dataset>().is_err());
        let d: Dataset = serde_json::from_str("\"CraigslistBargain\"").unwrap();
        assert_eq!(d, Dataset::CraigslistBargain);
    }
}
