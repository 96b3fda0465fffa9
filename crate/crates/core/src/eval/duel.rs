//! Pairwise judging of two candidate responses.
//!
//! Each duel draws several judge samples. Odd-numbered samples present the
//! candidates in swapped order and the parsed letter is mapped back, so a
//! judge that always prefers the first position cancels out.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::llm::{ChatRequest, LlmClient};
use crate::prompts::{render_judge, PromptTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeConfig {
    pub model: String,
    pub temperature: f64,
    pub samples: u32,
    pub max_tokens: u32,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            model: "gpt-3.5-turbo".into(),
            temperature: 0.0,
            samples: 5,
            max_tokens: 16,
        }
    }
}

/// Reads the judge's letter. The answer must start with A, B or C (after
/// optional quoting, emphasis or an "Answer:"-style prefix) and the letter
/// must stand alone. `C` maps to `Tie`.
pub fn parse_choice(text: &str) -> Option<Verdict> {
    let mut s = text.trim_start();
    loop {
        let before = s;
        s = s.trim_start_matches(|c: char| c.is_whitespace() || "*_`\"'([".contains(c));
        for prefix in ["your choice:", "answer:", "choice:", "option"] {
            if s.len() >= prefix.len() && s[..prefix.len()].eq_ignore_ascii_case(prefix) {
                s = &s[prefix.len()..];
            }
        }
        if s == before {
            break;
        }
    }
    let mut chars = s.chars();
    let letter = chars.next()?;
    if chars.next().is_some_and(|c| c.is_alphanumeric()) {
        return None;
    }
    match letter.to_ascii_uppercase() {
        'A' => Some(Verdict::A),
        'B' => Some(Verdict::B),
        'C' => Some(Verdict::Tie),
        _ => None,
    }
}

/// Plurality over {A, B, Tie}. A and B sharing the top count is a tie; a
/// decisive letter sharing the top count with the tie bucket wins.
pub fn tally_votes(votes: &[Verdict]) -> Verdict {
    let count = |v| votes.iter().filter(|&&x| x == v).count();
    let (a, b, tie) = (count(Verdict::A), count(Verdict::B), count(Verdict::Tie));
    let top = a.max(b).max(tie);
    if a == top && b == top {
        Verdict::Tie
    } else if a == top {
        Verdict::A
    } else if b == top {
        Verdict::B
    } else {
        Verdict::Tie
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuelOutcome {
    pub verdict: Verdict,
    /// Per-sample verdicts in the caller's A/B orientation; unparseable
    /// answers are recorded as `Tie`.
    pub votes: Vec<Verdict>,
    pub unparseable: u32,
}

pub fn static_duel(
    template: &PromptTemplate,
    context: &str,
    resp_a: &str,
    resp_b: &str,
    cfg: &JudgeConfig,
    client: &LlmClient,
    seed: u64,
) -> Result<DuelOutcome, EvalError> {
    let straight = render_judge(template, context, resp_a, resp_b)?;
    let swapped = render_judge(template, context, resp_b, resp_a)?;
    let mut votes = Vec::with_capacity(cfg.samples as usize);
    let mut unparseable = 0;
    for i in 0..cfg.samples {
        let swap = i % 2 == 1;
        let req = ChatRequest {
            model: cfg.model.clone(),
            messages: if swap { swapped.clone() } else { straight.clone() },
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
            seed: Some(seed.wrapping_add(u64::from(i))),
        };
        let text = client.complete(&req)?;
        let vote = match parse_choice(&text) {
            Some(Verdict::A) if swap => Verdict::B,
            Some(Verdict::B) if swap => Verdict::A,
            Some(v) => v,
            None => {
                unparseable += 1;
                Verdict::Tie
            }
        };
        votes.push(vote);
    }
    if unparseable == cfg.samples {
        log::warn!("judge produced no readable verdict in {} samples; scoring as tie", cfg.samples);
    }
    Ok(DuelOutcome {
        verdict: tally_votes(&votes),
        votes,
        unparseable,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTally {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

impl RunTally {
    pub fn of(verdicts: &[Verdict]) -> Self {
        let count = |v| verdicts.iter().filter(|&&x| x == v).count();
        RunTally {
            wins: count(Verdict::A),
            losses: count(Verdict::B),
            ties: count(Verdict::Tie),
        }
    }

    /// Wins over all duels, ties included in the denominator.
    pub fn rate(&self) -> f64 {
        self.wins as f64 / (self.wins + self.losses + self.ties) as f64
    }

    /// Wins over decisive duels; `None` when every duel tied.
    pub fn rate_excluding_ties(&self) -> Option<f64> {
        let decisive = self.wins + self.losses;
        (decisive > 0).then(|| self.wins as f64 / decisive as f64)
    }
}

/// Win rate of side A across repeated runs, as fractions in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub runs: usize,
    pub win_rate: f64,
    pub win_rate_std: f64,
    /// Absent when some run had no decisive duel.
    pub win_rate_excl_ties: Option<f64>,
    pub win_rate_excl_ties_std: Option<f64>,
    pub per_run: Vec<RunTally>,
}

fn population(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and population standard deviation of the per-run win rate.
pub fn win_rate(runs: &[Vec<Verdict>]) -> Result<WinRate, EvalError> {
    if runs.is_empty() || runs.iter().any(Vec::is_empty) {
        return Err(EvalError::NoDuels);
    }
    let per_run: Vec<RunTally> = runs.iter().map(|r| RunTally::of(r)).collect();
    let rates: Vec<f64> = per_run.iter().map(RunTally::rate).collect();
    let (win_rate, win_rate_std) = population(&rates);
    let excl: Option<Vec<f64>> = per_run.iter().map(RunTally::rate_excluding_ties).collect();
    let (win_rate_excl_ties, win_rate_excl_ties_std) = match excl {
        Some(v) => {
            let (m, s) = population(&v);
            (Some(m), Some(s))
        }
        None => (None, None),
    };
    Ok(WinRate {
        runs: runs.len(),
        win_rate,
        win_rate_std,
        win_rate_excl_ties,
        win_rate_excl_ties_std,
        per_run,
    })
}

impl std::fmt::Display for WinRate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:.2}% ± {:.2}% over {} run(s)",
            100.0 * self.win_rate,
            100.0 * self.win_rate_std,
            self.runs
        )?;
        if let (Some(m), Some(s)) = (self.win_rate_excl_ties, self.win_rate_excl_ties_std) {
            write!(f, " (ties excluded: {:.2}% ± {:.2}%)", 100.0 * m, 100.0 * s)?;
        }
        Ok(())
    }
}
