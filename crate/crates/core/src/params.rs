//! Search hyperparameters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    #[error("level must be at least 1")]
    ZeroLevel,
    #[error("iterations must be at least 1")]
    ZeroIterations,
    #[error("min_iterations ({min}) exceeds iterations ({iterations})")]
    MinIterations { min: u32, iterations: u32 },
    #[error("early_stopping must be at least 1")]
    ZeroEarlyStopping,
    #[error("max_playout_steps must be at least 1")]
    ZeroPlayoutSteps,
    #[error("alpha must be positive and finite, got {0}")]
    Alpha(f64),
}

/// How adaptation computes action probabilities while walking a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptMode {
    /// Probabilities come from the policy as it was before adaptation began.
    #[default]
    FrozenReference,
    /// Probabilities are recomputed from the partially adapted policy at
    /// every step of the sequence.
    Progressive,
}

/// Which act the planner commits to at the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootSelection {
    #[default]
    BestSequenceHead,
    PolicyArgmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NrpaParams {
    pub level: u32,
    pub iterations: u32,
    pub alpha: f64,
    /// Consecutive non-improving iterations (counted after
    /// `min_iterations`) that end a level.
    pub early_stopping: u32,
    pub min_iterations: u32,
    pub max_playout_steps: u32,
    pub rng_seed: u64,
    pub stop_on_stagnation: bool,
    pub stop_on_solved: bool,
    pub adapt_mode: AdaptMode,
    pub root_selection: RootSelection,
}

impl Default for NrpaParams {
    fn default() -> Self {
        NrpaParams {
            level: 1,
            iterations: 10,
            alpha: 1.0,
            early_stopping: 3,
            min_iterations: 3,
            max_playout_steps: 10,
            rng_seed: 0,
            stop_on_stagnation: true,
            stop_on_solved: true,
            adapt_mode: AdaptMode::FrozenReference,
            root_selection: RootSelection::BestSequenceHead,
        }
    }
}

impl NrpaParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        if self.level == 0 {
            return Err(ParamsError::ZeroLevel);
        }
        if self.iterations == 0 {
            return Err(ParamsError::ZeroIterations);
        }
        if self.min_iterations > self.iterations {
            return Err(ParamsError::MinIterations {
                min: self.min_iterations,
                iterations: self.iterations,
            });
        }
        if self.early_stopping == 0 {
            return Err(ParamsError::ZeroEarlyStopping);
        }
        if self.max_playout_steps == 0 {
            return Err(ParamsError::ZeroPlayoutSteps);
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(ParamsError::Alpha(self.alpha));
        }
        Ok(())
    }

    /// Same parameters with both early-stopping rules switched off.
    pub fn without_early_stopping(mut self) -> Self {
        self.stop_on_stagnation = false;
        self.stop_on_solved = false;
        self
    }
}
