mod common;

use nrpa_dialogue::{nrpa, plan_next_act, uniform_policy, Environment, NrpaParams, Terminal};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params(level: u32, iterations: u32, min: u32, stop: u32, alpha: f64, seed: u64) -> NrpaParams {
    NrpaParams {
        level,
        iterations,
        min_iterations: min.min(iterations),
        early_stopping: stop,
        alpha,
        rng_seed: seed,
        ..NrpaParams::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn playouts_never_exceed_the_nesting_bound(
        level in 1u32..=3, iterations in 1u32..=6, min in 1u32..=6, stop in 1u32..=4,
        alpha in 0.1f64..2.0, seed in any::<u64>(),
    ) {
        let env = common::oracle_env();
        let p = params(level, iterations, min, stop, alpha, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut policy = uniform_policy(env.action_space());
        let (best, stats) = nrpa(level, &mut policy, &env.initial_state(), &env, &p, &mut rng).unwrap();
        prop_assert!(stats.playouts_executed <= u64::from(iterations.pow(level)));
        prop_assert!(stats.playouts_executed >= 1);
        prop_assert_eq!(stats.best_score, Some(best.score));
        prop_assert!(policy.weights().iter().all(|w| w.abs() <= 50.0));
    }

    #[test]
    fn best_sequence_replays_to_its_score(seed in any::<u64>(), level in 1u32..=2) {
        let env = common::oracle_env();
        let p = params(level, 5, 3, 3, 1.0, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut policy = uniform_policy(env.action_space());
        let (best, _) = nrpa(level, &mut policy, &env.initial_state(), &env, &p, &mut rng).unwrap();
        let mut state = env.initial_state();
        let mut step_rng = ChaCha8Rng::seed_from_u64(0);
        for id in &best.sequence {
            let act = env.action_space().get(id).unwrap().clone();
            state = env.step(&state, &act, &mut step_rng).unwrap().state;
        }
        if state.is_ongoing() {
            state.terminal = Terminal::TurnBudgetExhausted;
        }
        prop_assert_eq!(env.reward_spec().evaluate(&state).unwrap(), best.score);
    }

    #[test]
    fn planning_is_a_function_of_the_seed(seed in any::<u64>()) {
        let env = common::oracle_env();
        let p = params(2, 4, 2, 2, 1.0, seed);
        let plan = || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let plan = plan_next_act(&env.initial_state(), &env, &p, &mut rng).unwrap();
            (plan.act.id, plan.stats.playouts_executed, plan.best.sequence)
        };
        prop_assert_eq!(plan(), plan());
    }
}

#[test]
fn oracle_covers_the_whole_horizon() {
    let env = common::oracle_env();
    let oracle = common::brute_force(&env);
    assert_eq!(oracle.leaves, 64);
    assert_eq!(oracle.optimal.len(), 28);
    assert!((oracle.best - 0.997).abs() < 1e-12);
}
