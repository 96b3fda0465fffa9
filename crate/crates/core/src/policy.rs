//! Global softmax rollout policy: one weight per dialogue act.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionSpace, DialogueAct};

/// Weights are kept inside `[-WEIGHT_LIMIT, WEIGHT_LIMIT]` after every
/// adaptation step.
pub const WEIGHT_LIMIT: f64 = 50.0;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("policy has no weights")]
    Empty,
    #[error("weight {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("policy has {weights} weights but the action space has {acts} acts")]
    SizeMismatch { weights: usize, acts: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    weights: Vec<f64>,
}

impl Policy {
    pub fn new(weights: Vec<f64>) -> Result<Self, PolicyError> {
        if weights.is_empty() {
            return Err(PolicyError::Empty);
        }
        if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite()) {
            return Err(PolicyError::NonFinite { index, value });
        }
        Ok(Policy { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub(crate) fn clamp(&mut self) {
        for w in &mut self.weights {
            *w = w.clamp(-WEIGHT_LIMIT, WEIGHT_LIMIT);
        }
    }

    pub fn check_space(&self, space: &ActionSpace) -> Result<(), PolicyError> {
        if self.weights.len() != space.len() {
            return Err(PolicyError::SizeMismatch {
                weights: self.weights.len(),
                acts: space.len(),
            });
        }
        Ok(())
    }

    /// Index of the largest weight; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate().skip(1) {
            if w > self.weights[best] {
                best = i;
            }
        }
        best
    }
}

/// All-zero weights, i.e. the uniform distribution over `space`.
pub fn uniform_policy(space: &ActionSpace) -> Policy {
    Policy {
        weights: vec![0.0; space.len()],
    }
}

/// `P(a) = exp(w_a) / sum_b exp(w_b)`, evaluated after subtracting the
/// maximum weight so large magnitudes cannot overflow.
pub fn softmax(weights: &[f64]) -> Result<Vec<f64>, PolicyError> {
    if weights.is_empty() {
        return Err(PolicyError::Empty);
    }
    if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite()) {
        return Err(PolicyError::NonFinite { index, value });
    }
    let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = weights.iter().map(|w| (w - max).exp()).collect();
    let z: f64 = out.iter().sum();
    for p in &mut out {
        *p /= z;
    }
    Ok(out)
}

pub fn softmax_probs(policy: &Policy) -> Result<Vec<f64>, PolicyError> {
    softmax(&policy.weights)
}

/// Draws an index with probability `softmax_probs(policy)[index]`.
pub fn sample_index<R: Rng + ?Sized>(policy: &Policy, rng: &mut R) -> Result<usize, PolicyError> {
    let probs = softmax_probs(policy)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // u landed in the rounding gap above the accumulated sum; take the last
    // act with nonzero mass.
    Ok(probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1))
}

pub fn sample_action<'a, R: Rng + ?Sized>(
    policy: &Policy,
    space: &'a ActionSpace,
    rng: &mut R,
) -> Result<&'a DialogueAct, PolicyError> {
    policy.check_space(space)?;
    Ok(space.act_at(sample_index(policy, rng)?))
}
