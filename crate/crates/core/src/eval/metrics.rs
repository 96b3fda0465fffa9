use serde::{Deserialize, Serialize};

use super::{EpisodeRecord, EvalError};
use crate::dialogue::Terminal;

/// Sale-to-list ratio: 1 at the buyer's target, 0 at the seller's. A failed
/// deal scores 0.
pub fn compute_sl(deal_price: Option<f64>, seller_target: f64, buyer_target: f64) -> Result<f64, EvalError> {
    if seller_target == buyer_target {
        return Err(EvalError::EqualTargets(seller_target));
    }
    Ok(match deal_price {
        Some(p) => (p - seller_target) / (buyer_target - seller_target),
        None => 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    /// Mean turns.
    #[serde(rename = "AT")]
    pub at: f64,
    #[serde(rename = "AT_std")]
    pub at_std: f64,
    /// Fraction of episodes ending Solved.
    #[serde(rename = "SR")]
    pub sr: f64,
    #[serde(rename = "SR_std")]
    pub sr_std: f64,
    /// Mean sale-to-list ratio over bargaining episodes; absent otherwise.
    #[serde(rename = "SL")]
    pub sl: Option<f64>,
    #[serde(rename = "SL_std")]
    pub sl_std: Option<f64>,
    pub n_episodes: usize,
    pub n_aborted: usize,
    /// Bargaining episodes left out of SL because the deal price was unreadable.
    pub n_sl_invalid: usize,
}

/// Mean and population standard deviation. Values are sorted first so the
/// result does not depend on input order.
fn mean_std(values: &mut [f64]) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, (dev.iter().sum::<f64>() / n).sqrt())
}

pub fn summarize(records: &[EpisodeRecord]) -> Result<MetricsSummary, EvalError> {
    let done: Vec<&EpisodeRecord> = records.iter().filter(|r| !r.is_aborted()).collect();
    let n_aborted = records.len() - done.len();
    if done.is_empty() {
        return Err(EvalError::NoEpisodes { aborted: n_aborted });
    }
    let mut turns: Vec<f64> = done.iter().map(|r| f64::from(r.turns_used)).collect();
    let mut solved: Vec<f64> = done
        .iter()
        .map(|r| if r.terminal == Terminal::Solved { 1.0 } else { 0.0 })
        .collect();
    let mut sl = Vec::new();
    let mut n_sl_invalid = 0;
    for r in &done {
        let Some(t) = r.price_targets else { continue };
        if r.deal_price_invalid {
            n_sl_invalid += 1;
            continue;
        }
        let price = if r.terminal == Terminal::Solved { r.deal_price } else { None };
        sl.push(compute_sl(price, t.seller, t.buyer)?);
    }
    if n_sl_invalid > 0 {
        log::warn!("{n_sl_invalid} bargaining episode(s) excluded from SL: unreadable deal price");
    }
    let (at, at_std) = mean_std(&mut turns);
    let (sr, sr_std) = mean_std(&mut solved);
    let (sl, sl_std) = if sl.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&mut sl);
        (Some(m), Some(s))
    };
    Ok(MetricsSummary {
        at,
        at_std,
        sr,
        sr_std,
        sl,
        sl_std,
        n_episodes: done.len(),
        n_aborted,
        n_sl_invalid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::PriceTargets;
    use crate::params::NrpaParams;
    use crate::reward::RewardSpec;
    use proptest::prelude::*;

    fn record(terminal: Terminal, turns: u32) -> EpisodeRecord {
        let spec = RewardSpec::default();
        EpisodeRecord {
            scenario_id: "s".into(),
            dataset: None,
            params: NrpaParams::default(),
            reward: spec.score(terminal, turns).ok(),
            reward_spec: spec,
            rng_seed: 0,
            opening: vec![],
            turns: vec![],
            terminal,
            turns_used: turns,
            deal_price: None,
            deal_price_invalid: false,
            price_targets: None,
            aborted: None,
            wall_clock_ms: None,
        }
    }

    fn deal(price: Option<f64>) -> EpisodeRecord {
        let mut r = record(
            if price.is_some() { Terminal::Solved } else { Terminal::Failed },
            3,
        );
        r.deal_price = price;
        r.price_targets = Some(PriceTargets { seller: 15.0, buyer: 10.0 });
        r
    }

    #[test]
    fn sl_examples() {
        assert!((compute_sl(Some(12.0), 15.0, 10.0).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(compute_sl(Some(10.0), 15.0, 10.0).unwrap(), 1.0);
        assert_eq!(compute_sl(None, 15.0, 10.0).unwrap(), 0.0);
        assert!(compute_sl(Some(1.0), 10.0, 10.0).is_err());
    }

    #[test]
    fn summary_examples() {
        let s = summarize(&[record(Terminal::Solved, 2), record(Terminal::TurnBudgetExhausted, 10)]).unwrap();
        assert_eq!((s.at, s.sr), (6.0, 0.5));
        assert_eq!(s.at_std, 4.0);
        assert_eq!(s.sl, None);
        let s = summarize(&[record(Terminal::Solved, 1), record(Terminal::Solved, 1)]).unwrap();
        assert_eq!((s.at, s.sr, s.sr_std), (1.0, 1.0, 0.0));
        let s = summarize(&[deal(Some(12.0)), deal(None)]).unwrap();
        assert!((s.sl.unwrap() - 0.3).abs() < 1e-12);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn unreadable_prices_are_counted_not_scored() {
        let mut bad = deal(None);
        bad.terminal = Terminal::Solved;
        bad.deal_price_invalid = true;
        let s = summarize(&[deal(Some(12.0)), bad]).unwrap();
        assert_eq!(s.n_sl_invalid, 1);
        assert!((s.sl.unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(s.sr, 1.0);
    }

    proptest! {
        #[test]
        fn summary_is_order_independent(
            eps in prop::collection::vec((any::<bool>(), 1u32..=10, prop::option::of(10.0f64..15.0)), 1..30),
            seed in any::<u64>(),
        ) {
            let records: Vec<EpisodeRecord> = eps
                .iter()
                .map(|(solved, t, price)| {
                    let mut r = record(if *solved { Terminal::Solved } else { Terminal::Failed }, *t);
                    r.price_targets = Some(PriceTargets { seller: 15.0, buyer: 10.0 });
                    r.deal_price = *price;
                    r
                })
                .collect();
            let mut shuffled = records.clone();
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(summarize(&records).unwrap(), summarize(&shuffled).unwrap());
        }

        #[test]
        fn sl_matches_direct_substitution(
            deal in -1e4f64..1e4, seller in -1e4f64..1e4, buyer in -1e4f64..1e4,
        ) {
            prop_assume!((seller - buyer).abs() > 1e-6);
            let got = compute_sl(Some(deal), seller, buyer).unwrap();
            prop_assert_eq!(got, (deal - seller) / (buyer - seller));
        }
    }
}
